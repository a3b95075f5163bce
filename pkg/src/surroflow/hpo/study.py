"""Trial/study records and the budgeted search driver."""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np

from surroflow.hpo.pruner import MedianPrunerConfig, median_prune_decision
from surroflow.hpo.samplers import tpe_suggest
from surroflow.hpo.space import SearchSpace


class TrialState(str, Enum):
    COMPLETED = "completed"
    PRUNED = "pruned"
    FAILED = "failed"


class TrialPruned(Exception):
    """Raised inside an objective when the report callback says to stop."""


class TrialFailed(Exception):
    """Raised inside an objective on non-finite losses or training faults."""


@dataclass
class TrialRecord:
    trial_id: int
    params: Dict
    state: TrialState
    intermediates: Dict[int, float] = field(default_factory=dict)
    final_value: Optional[float] = None
    seed: int = 0
    error: Optional[str] = None

    @property
    def objective(self) -> Optional[float]:
        """Value used by the sampler: final if completed, last report if pruned."""
        if self.state == TrialState.COMPLETED:
            return self.final_value
        if self.state == TrialState.PRUNED and self.intermediates:
            return self.intermediates[max(self.intermediates)]
        return None

    def to_dict(self) -> Dict:
        return {
            "trial_id": self.trial_id,
            "params": self.params,
            "state": self.state.value,
            "intermediates": {str(k): v for k, v in sorted(self.intermediates.items())},
            "final_value": self.final_value,
            "seed": self.seed,
            "error": self.error,
        }

    @staticmethod
    def from_dict(d: Dict) -> "TrialRecord":
        return TrialRecord(
            trial_id=d["trial_id"], params=d["params"], state=TrialState(d["state"]),
            intermediates={int(k): v for k, v in d.get("intermediates", {}).items()},
            final_value=d.get("final_value"), seed=d.get("seed", 0),
            error=d.get("error"))


@dataclass(frozen=True)
class HPOBudget:
    n_trials: int = 15
    epochs_per_trial: int = 5
    train_batches: int = 50
    val_batches: int = 20


@dataclass
class StudyRecord:
    qoi: str
    round_index: int
    space: SearchSpace
    budget: HPOBudget
    seed: int
    trials: List[TrialRecord] = field(default_factory=list)
    sampler: str = "tpe"

    @property
    def best_trial(self) -> Optional[TrialRecord]:
        completed = [t for t in self.trials if t.state == TrialState.COMPLETED]
        if not completed:
            return None
        return min(completed, key=lambda t: t.final_value)

    def counts(self) -> Dict[str, int]:
        return {state.value: sum(1 for t in self.trials if t.state == state)
                for state in TrialState}

    def to_dict(self) -> Dict:
        best = self.best_trial
        return {
            "qoi": self.qoi,
            "round_index": self.round_index,
            "space": self.space.to_dict(),
            "budget": {
                "n_trials": self.budget.n_trials,
                "epochs_per_trial": self.budget.epochs_per_trial,
                "train_batches": self.budget.train_batches,
                "val_batches": self.budget.val_batches,
            },
            "seed": self.seed,
            "sampler": self.sampler,
            "trials": [t.to_dict() for t in self.trials],
            "best_trial_id": None if best is None else best.trial_id,
            "counts": self.counts(),
        }

    @staticmethod
    def from_dict(d: Dict) -> "StudyRecord":
        return StudyRecord(
            qoi=d["qoi"], round_index=d["round_index"],
            space=SearchSpace.from_dict(d["space"]),
            budget=HPOBudget(**d["budget"]), seed=d["seed"],
            trials=[TrialRecord.from_dict(t) for t in d.get("trials", [])],
            sampler=d.get("sampler", "tpe"))

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path: str) -> "StudyRecord":
        with open(path) as fh:
            return StudyRecord.from_dict(json.load(fh))


Objective = Callable[[Dict, Callable[[int, float], bool], int], float]


def run_hpo(objective: Objective, space: SearchSpace, budget: HPOBudget,
            seed: int, qoi: str = "", round_index: int = 0,
            pruner: MedianPrunerConfig = MedianPrunerConfig(),
            on_trial: Optional[Callable[[TrialRecord], None]] = None) -> StudyRecord:
    """Run the budgeted study.

    ``objective(params, report, trial_seed)`` returns the final value
    (lower is better). It must call ``report(step, value)`` after each
    intermediate step and raise ``TrialPruned`` when that returns True;
    ``TrialFailed`` marks the trial failed without consuming the study.
    Failed trials still count toward ``n_trials``.
    """
    rng = np.random.default_rng([seed, round_index])
    study = StudyRecord(qoi=qoi, round_index=round_index, space=space,
                        budget=budget, seed=seed)

    for trial_id in range(budget.n_trials):
        observed = [(t.params, t.objective) for t in study.trials
                    if t.objective is not None]
        params = tpe_suggest(space, observed, rng)
        record = TrialRecord(trial_id=trial_id, params=params,
                             state=TrialState.FAILED,
                             seed=int(np.random.default_rng(
                                 [seed, round_index, trial_id]).integers(2 ** 31)))
        prior = [t.intermediates for t in study.trials]

        def report(step: int, value: float, record=record, prior=prior) -> bool:
            record.intermediates[step] = value
            return median_prune_decision(step, value, prior, pruner)

        try:
            final = objective(params, report, record.seed)
            if not np.isfinite(final):
                raise TrialFailed(f"non-finite final value {final!r}")
            record.final_value = float(final)
            record.state = TrialState.COMPLETED
        except TrialPruned:
            record.state = TrialState.PRUNED
        except TrialFailed as exc:
            record.state = TrialState.FAILED
            record.error = str(exc)
        study.trials.append(record)
        if on_trial is not None:
            on_trial(record)
    return study
