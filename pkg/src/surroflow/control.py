"""Closed-loop recovery controller and architecture selection.

Each training round ends in a diagnosis (converging, unstable, or
underperforming) that maps to one recovery action: resume for extra epochs,
restart under tightened stability constraints, switch to the next ranked
architecture, or fall back to the best checkpoint seen so far. The controller
is pure bookkeeping; the pipeline executes whatever action comes back.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

from surroflow.core import TargetSpec
from surroflow.errors import ConfigurationError
from surroflow.hpo.space import Categorical, SearchSpace
from surroflow.training.checkpoint import CheckpointRef
from surroflow.zoo import ModelCard, ModelShape
from surroflow.zoo.memory import estimate_memory

CONVERGING = "converging"
UNSTABLE = "unstable"
UNDERPERFORMING = "underperforming"

ACT_CONTINUE = "continuation"
ACT_RESTART = "stability_restart"
ACT_SWITCH = "switch"
ACT_FALLBACK = "global_best_fallback"


@dataclass(frozen=True)
class ControlBudgets:
    max_rounds_per_qoi: int = 10
    e_extra: int = 10
    lr_cap: float = 5e-4
    grad_clip_tight: float = 0.25
    unstable_escalation: int = 2
    plateau_tol: float = 1e-4


@dataclass(frozen=True)
class RoundEvidence:
    """What the controller gets to see about one finished round."""

    val_score: Optional[float]
    target_met: bool
    stopped_reason: Optional[str] = None
    grad_explosion: bool = False
    grad_vanish: bool = False
    no_completed_trials: bool = False
    runtime_error: Optional[str] = None
    improvement: Optional[float] = None
    continuation_used: bool = False


@dataclass(frozen=True)
class Diagnosis:
    state: str
    signals: Dict

    def to_dict(self) -> Dict:
        return {"state": self.state, "signals": dict(self.signals)}


@dataclass(frozen=True)
class RecoveryAction:
    kind: str
    reason: str
    e_extra: int = 0
    lr_cap: Optional[float] = None
    grad_clip: Optional[float] = None

    def to_dict(self) -> Dict:
        out = {"kind": self.kind, "reason": self.reason}
        if self.kind == ACT_CONTINUE:
            out["e_extra"] = self.e_extra
        if self.kind == ACT_RESTART:
            out["lr_cap"] = self.lr_cap
            out["grad_clip"] = self.grad_clip
        return out


@dataclass
class CorrectionState:
    """Per-QoI loop bookkeeping, mutated by self_correct as rounds finish."""

    ranking: List[str]
    card: str
    cards_tried: List[str] = field(default_factory=list)
    trained_rounds: int = 0
    continuation_used: bool = False
    consecutive_unstable: int = 0

    def remaining_cards(self) -> List[str]:
        return [c for c in self.ranking if c not in self.cards_tried]


def diagnose(evidence: RoundEvidence, plateau_tol: float = 1e-4) -> Diagnosis:
    """Classify one round.

    Hard failures (non-finite losses, gradient pathologies, a study with no
    completed trial, runtime errors) are unstable. A stable round below target
    counts as converging while it still improves faster than the plateau
    tolerance, or while its continuation is unspent; otherwise the model has
    settled short of the target and is underperforming.
    """
    score_bad = evidence.val_score is None or not math.isfinite(evidence.val_score)
    hard = {
        "instability_stop": evidence.stopped_reason == "instability",
        "grad_explosion": evidence.grad_explosion,
        "grad_vanish": evidence.grad_vanish,
        "no_completed_trials": evidence.no_completed_trials,
        "runtime_error": evidence.runtime_error is not None,
        "non_finite_score": score_bad,
    }
    if any(hard.values()):
        signals = {k: v for k, v in hard.items() if v}
        if evidence.runtime_error is not None:
            signals["runtime_error"] = evidence.runtime_error
        return Diagnosis(UNSTABLE, signals)

    signals = {"val_score": evidence.val_score, "target_met": evidence.target_met,
               "improvement": evidence.improvement,
               "continuation_used": evidence.continuation_used}
    if evidence.target_met:
        return Diagnosis(CONVERGING, signals)
    improving = evidence.improvement is None or evidence.improvement > plateau_tol
    if improving or not evidence.continuation_used:
        return Diagnosis(CONVERGING, signals)
    return Diagnosis(UNDERPERFORMING, signals)


def self_correct(diagnosis: Diagnosis, state: CorrectionState,
                 budgets: ControlBudgets) -> RecoveryAction:
    """Map a diagnosis to the next action and update the loop state.

    Precedence: an exhausted round budget always falls back. Instability
    restarts under tightened constraints, escalating to a switch once the
    same card has failed that way twice in a row. A converging round earns
    one continuation per (card, round); after that, or on a confirmed
    plateau, the loop switches to the next ranked card, falling back when
    none remain.
    """
    if state.trained_rounds >= budgets.max_rounds_per_qoi:
        return RecoveryAction(ACT_FALLBACK,
                              f"round budget {budgets.max_rounds_per_qoi} exhausted")

    if diagnosis.state == UNSTABLE:
        state.consecutive_unstable += 1
        remaining = state.remaining_cards()
        if state.consecutive_unstable >= budgets.unstable_escalation and remaining:
            return _switch(state, f"{state.consecutive_unstable} consecutive "
                                  f"unstable rounds on {state.card}")
        state.continuation_used = False
        return RecoveryAction(
            ACT_RESTART,
            "instability evidence: " + ", ".join(sorted(diagnosis.signals)),
            lr_cap=budgets.lr_cap, grad_clip=budgets.grad_clip_tight)

    state.consecutive_unstable = 0
    if diagnosis.state == CONVERGING and not state.continuation_used:
        state.continuation_used = True
        return RecoveryAction(ACT_CONTINUE,
                              "still improving; resuming for extra epochs",
                              e_extra=budgets.e_extra)

    reason = ("plateau confirmed after continuation"
              if diagnosis.state == UNDERPERFORMING
              else "continuation already spent on this round")
    if state.remaining_cards():
        return _switch(state, reason)
    return RecoveryAction(ACT_FALLBACK, reason + "; no architectures left to try")


def _switch(state: CorrectionState, reason: str) -> RecoveryAction:
    state.continuation_used = False
    state.consecutive_unstable = 0
    return RecoveryAction(ACT_SWITCH, reason)


def meets_quality(score: Optional[float], target: TargetSpec) -> bool:
    """Strict exceedance for threshold targets; a maximize target is never met."""
    if score is None or not math.isfinite(score) or target.mode == "maximize":
        return False
    return score > target.threshold


@dataclass(frozen=True)
class GlobalBest:
    qoi: str
    architecture: str
    round_index: int
    val_score: float
    checkpoint: CheckpointRef
    hyperparams: Dict

    def to_dict(self) -> Dict:
        return {"qoi": self.qoi, "architecture": self.architecture,
                "round_index": self.round_index, "val_score": self.val_score,
                "checkpoint": self.checkpoint.to_dict(),
                "hyperparams": dict(self.hyperparams)}

    @staticmethod
    def from_dict(d: Dict) -> "GlobalBest":
        return GlobalBest(d["qoi"], d["architecture"], d["round_index"],
                          d["val_score"], CheckpointRef.from_dict(d["checkpoint"]),
                          d["hyperparams"])


def update_global_best(current: Optional[GlobalBest],
                       candidate: Optional[GlobalBest]) -> Optional[GlobalBest]:
    """Keep the strictly better score; ties keep the incumbent."""
    if candidate is None or not math.isfinite(candidate.val_score):
        return current
    if current is None or candidate.val_score > current.val_score:
        return candidate
    return current


def upper_bound_hp(space: SearchSpace) -> Dict:
    """Worst-case assignment for memory probing: numeric domains at their
    ceiling, non-numeric categoricals at their first (default) choice."""
    hp = {}
    for name, dom in space.effective():
        if isinstance(dom, Categorical):
            numeric = [v for v in dom.values
                       if isinstance(v, (int, float)) and not isinstance(v, bool)]
            hp[name] = max(numeric) if len(numeric) == len(dom.values) \
                else dom.values[0]
        else:
            hp[name] = dom.hi
    return hp


@dataclass(frozen=True)
class ArchitectureSelection:
    qoi: str
    ranking: List[str]
    chosen: str
    rationale: str
    memory_reports: List[Dict]

    def to_dict(self) -> Dict:
        return {"qoi": self.qoi, "ranking": list(self.ranking),
                "chosen": self.chosen, "rationale": self.rationale,
                "memory_reports": [dict(r) for r in self.memory_reports]}


def select_architecture(qoi: str, sparse: bool, cards: Sequence[ModelCard],
                        reasoner: Callable[[str, Dict], Dict],
                        shape: ModelShape, budget_bytes: int,
                        space_for: Callable[[ModelCard], SearchSpace],
                        on_step: Optional[Callable] = None,
                        exclude: Sequence[str] = (),
                        performance: Optional[Dict] = None) -> ArchitectureSelection:
    """Pick the best-ranked card whose worst-case memory estimate fits.

    Runs as a small tool loop (rank, then probe candidates in order, then
    commit) so every decision lands in the audit via ``on_step``. When every
    ranked card is infeasible this raises with all the probe reports, since
    silently training an unrankable model would hide a sizing mistake.
    """
    from surroflow.agents.loop import agent_loop

    by_name = {c.name: c for c in cards}
    stage = "switch_ranking" if performance is not None else "ranking"
    context = {"qoi": qoi, "sparse": sparse,
               "cards": sorted(by_name), "exclude": sorted(exclude),
               "grid": list(shape.spatial), "n_timesteps": shape.n_timesteps}
    if performance is not None:
        context["performance"] = performance

    def rank_models() -> Dict:
        return reasoner(stage, context)

    def probe(name: str) -> Dict:
        card = by_name[name]
        hp = upper_bound_hp(space_for(card))
        batch = hp.get("batch_size", 1)
        est = estimate_memory(card, hp, shape, batch, budget_bytes)
        return est.to_dict()

    def commit(name: str) -> Dict:
        return {"chosen": name}

    tools = {"rank_models": rank_models, "estimate_memory": probe,
             "commit_selection": commit}

    def policy(loop_state: Dict) -> Dict:
        steps = loop_state["steps"]
        if not steps:
            return {"tool": "rank_models", "args": {}}
        doc = steps[0].observation
        ranking = [n for n in doc["ranking"] if n not in set(exclude)]
        if not ranking:
            raise ConfigurationError(f"no candidate architectures left for {qoi} "
                                     f"after excluding {sorted(exclude)}")
        if steps[-1].tool == "commit_selection":
            return {"finish": steps[-1].observation}
        probes = [s.observation for s in steps[1:] if s.tool == "estimate_memory"]
        if probes and probes[-1]["feasible"]:
            return {"tool": "commit_selection",
                    "args": {"name": probes[-1]["model"]}}
        if len(probes) == len(ranking):
            lines = [f"{p['model']}: {p.get('reason') or p['total_bytes']} bytes"
                     for p in probes]
            raise ConfigurationError(
                f"every ranked architecture exceeds the {budget_bytes} byte "
                f"memory budget for {qoi}: " + "; ".join(lines))
        return {"tool": "estimate_memory", "args": {"name": ranking[len(probes)]}}

    loop_state: Dict = {}
    result = agent_loop(policy, tools, loop_state,
                        max_steps=2 * len(by_name) + 3, on_step=on_step)
    doc = loop_state["steps"][0].observation
    reports = [s.observation for s in loop_state["steps"]
               if s.tool == "estimate_memory"]
    ranking = [n for n in doc["ranking"] if n not in set(exclude)]
    return ArchitectureSelection(qoi=qoi, ranking=ranking,
                                 chosen=result["chosen"],
                                 rationale=doc.get("rationale", ""),
                                 memory_reports=reports)
