"""End-to-end run orchestration.

Stage 1 profiles the dataset and fixes preprocessing and targets. Stage 2
ranks and memory-checks an architecture for every output quantity. Stage 3
alternates hyperparameter search, training, and the recovery controller
until the target is met or budgets run out. Stage 4 evaluates the deployed
global-best checkpoints and consolidates the report.
"""

import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy
import torch

from surroflow import __version__
from surroflow.agents.client import ReasonerConfig, make_reasoner
from surroflow.agents.instructions import parse_instruction_report
from surroflow.control import (ACT_CONTINUE, ACT_FALLBACK, ACT_RESTART,
                               ACT_SWITCH, ArchitectureSelection,
                               ControlBudgets, CorrectionState, GlobalBest,
                               RoundEvidence, diagnose, meets_quality,
                               select_architecture, self_correct,
                               update_global_best)
from surroflow.core import (QOIS, SharedContext, append_audit, resolve_targets,
                            validate_audit, validate_stage_order)
from surroflow.datagen.bundle import DatasetBundle, load_bundle
from surroflow.datagen.grf import GridSpec
from surroflow.errors import ConfigurationError, PipelineError
from surroflow.hpo.space import Categorical, SearchSpace, tighten_space
from surroflow.hpo.study import (HPOBudget, StudyRecord, TrialFailed,
                                 TrialPruned, run_hpo)
from surroflow.profiling import (PreprocessingConfig, configure_preprocessing,
                                 denormalize_pressure, normalize_pressure,
                                 profile_dataset)
from surroflow.report import consolidate, render_summary
from surroflow.training.checkpoint import (CheckpointRef, CheckpointStore,
                                           load_into)
from surroflow.training.loop import (TrainConfig, TrainingHooks, TrainResult,
                                     loss_for, predict, train)
from surroflow.training.metrics import Metrics, compute_metrics
from surroflow.zoo import (ModelCard, ModelShape, build_model, get_card,
                           list_models, qoi_search_space, zoo_manifest)

INJECT_MODES = ("nan-round-1", "plateau", "grad-explosion")

DEFAULT_MEMORY_BUDGET = 8 * 1024 ** 3


@dataclass(frozen=True)
class RunConfig:
    data_dir: str
    out_dir: str
    qois: Tuple[str, ...] = QOIS
    instruction: Optional[str] = None
    seed: int = 0
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)
    budgets: ControlBudgets = field(default_factory=ControlBudgets)
    hpo: HPOBudget = field(default_factory=HPOBudget)
    epochs: int = 30
    patience: int = 15
    max_train_batches: Optional[int] = None
    max_val_batches: Optional[int] = None
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET
    max_base_channels: Optional[int] = None
    inject: Optional[str] = None
    verify_checksums: bool = False

    def __post_init__(self):
        if self.inject is not None and self.inject not in INJECT_MODES:
            raise ConfigurationError(
                f"unknown fault injection {self.inject!r}; choose from {INJECT_MODES}")
        unknown = [q for q in self.qois if q not in QOIS]
        if unknown:
            raise ConfigurationError(f"unknown quantities {unknown}; valid: {QOIS}")

    def document(self) -> Dict:
        """Behavioral settings only: everything that can change the artifacts
        except filesystem locations, so run ids survive relocation."""
        return {
            "qois": list(self.qois),
            "instruction": self.instruction,
            "reasoner": {"backend": self.reasoner.backend,
                         "model": self.reasoner.model},
            "budgets": {
                "max_rounds_per_qoi": self.budgets.max_rounds_per_qoi,
                "e_extra": self.budgets.e_extra,
                "lr_cap": self.budgets.lr_cap,
                "grad_clip_tight": self.budgets.grad_clip_tight,
                "unstable_escalation": self.budgets.unstable_escalation,
                "plateau_tol": self.budgets.plateau_tol,
            },
            "hpo": {"n_trials": self.hpo.n_trials,
                    "epochs_per_trial": self.hpo.epochs_per_trial,
                    "train_batches": self.hpo.train_batches,
                    "val_batches": self.hpo.val_batches},
            "epochs": self.epochs,
            "patience": self.patience,
            "max_train_batches": self.max_train_batches,
            "max_val_batches": self.max_val_batches,
            "memory_budget_bytes": self.memory_budget_bytes,
            "max_base_channels": self.max_base_channels,
            "inject": self.inject,
        }


def compute_run_id(dataset_hash: str, config_doc: Dict, seed: int) -> str:
    canonical = json.dumps({"dataset": dataset_hash, "config": config_doc,
                            "seed": seed}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


class FaultInjector:
    """Deterministic training faults for exercising the recovery loop.

    nan-round-1 poisons the first full-training round with a non-finite loss
    at its second epoch; plateau pins the learning rate of the first card's
    initial round and its continuation near zero; grad-explosion scales the
    first round's losses so pre-clip gradient norms trip the explosion
    detector.
    """

    def __init__(self, mode: Optional[str]):
        if mode is not None and mode not in INJECT_MODES:
            raise ConfigurationError(f"unknown fault injection {mode!r}")
        self.mode = mode

    def hooks(self, strategy: str, round_number: int, architecture: str,
              first_architecture: str) -> Optional[TrainingHooks]:
        if self.mode is None:
            return None
        if self.mode == "nan-round-1" and round_number == 1:
            def poison(loss, epoch, step):
                if epoch >= 2:
                    return loss * float("nan")
                return loss
            return TrainingHooks(transform_loss=poison)
        if self.mode == "plateau" and architecture == first_architecture \
                and strategy in ("initial", "continuation"):
            return TrainingHooks(lr_override=1e-12)
        if self.mode == "grad-explosion" and round_number == 1:
            return TrainingHooks(transform_loss=lambda loss, e, s: loss * 1e12)
        return None


def _environment(cfg: RunConfig,
                 config_sources: Optional[Dict[str, str]] = None) -> Dict:
    env = {
        "seed": cfg.seed,
        "versions": {
            "python": platform.python_version(),
            "surroflow": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "torch": torch.__version__,
        },
        "reasoner_backend": cfg.reasoner.backend,
    }
    if config_sources:
        env["config_sources"] = dict(sorted(config_sources.items()))
    return env


def _squeeze(arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    # models for flat grids (nz == 1) run in 2-D
    return arr[..., 0] if grid.nz == 1 else arr


def _model_inputs(bundle: DatasetBundle, split: str, mean: float,
                  std: float) -> np.ndarray:
    # bundle inputs already carry the channel axis: (n, 1, nx, ny[, nz])
    raw = _squeeze(bundle.split_arrays(split)[0], bundle.grid)
    return (raw.astype(np.float32) - np.float32(mean)) / np.float32(std)


def _training_targets(bundle: DatasetBundle, qoi: str, split: str,
                      prep: PreprocessingConfig) -> np.ndarray:
    _, pressure, saturation = bundle.split_arrays(split)
    if qoi == "pressure":
        return _squeeze(normalize_pressure(pressure, prep),
                        bundle.grid).astype(np.float32)
    return _squeeze(saturation, bundle.grid).astype(np.float32)


def _physical_targets(bundle: DatasetBundle, qoi: str, split: str) -> np.ndarray:
    _, pressure, saturation = bundle.split_arrays(split)
    arr = pressure if qoi == "pressure" else saturation
    return _squeeze(arr, bundle.grid)


def _physical_predictions(model: torch.nn.Module, x: np.ndarray, qoi: str,
                          prep: PreprocessingConfig) -> np.ndarray:
    out = predict(model, x)
    if qoi == "pressure":
        return denormalize_pressure(out, prep)
    return 1.0 / (1.0 + np.exp(-out.astype(np.float64)))


def _evaluate(model: torch.nn.Module, x: np.ndarray, truth: np.ndarray,
              qoi: str, prep: PreprocessingConfig) -> Metrics:
    return compute_metrics(_physical_predictions(model, x, qoi, prep), truth)


def _capped_space(card: ModelCard, qoi: str,
                  max_base_channels: Optional[int]) -> SearchSpace:
    space = qoi_search_space(card, qoi)
    if max_base_channels is None:
        return space
    params = []
    for name, dom in space.params:
        if name == "base_channels" and isinstance(dom, Categorical):
            kept = tuple(v for v in dom.values if v <= max_base_channels)
            if not kept:
                raise ConfigurationError(
                    f"base-channel cap {max_base_channels} empties the domain")
            dom = Categorical(kept)
        params.append((name, dom))
    return SearchSpace(tuple(params), space.lr_upper_bound, space.grad_clip)


def _round_seed(run_seed: int, qoi: str, round_number: int) -> int:
    digest = hashlib.sha256(f"{run_seed}/{qoi}/{round_number}".encode()).digest()
    return int.from_bytes(digest[:4], "little") % (2 ** 31)


def _make_objective(card: ModelCard, shape: ModelShape, qoi: str,
                    train_xy, val_xy, space: SearchSpace, budget: HPOBudget):
    def objective(params: Dict, report: Callable[[int, float], bool],
                  trial_seed: int) -> float:
        cfg = TrainConfig.pipeline(
            epochs=budget.epochs_per_trial,
            patience=budget.epochs_per_trial + 1,
            max_train_batches=budget.train_batches,
            max_val_batches=budget.val_batches,
            grad_clip=space.grad_clip,
            seed=trial_seed,
        ).with_trial_params(params)
        torch.manual_seed(trial_seed)
        try:
            model = build_model(card, params, shape)
        except Exception as exc:
            raise TrialFailed(f"model construction failed: {exc}") from exc

        def on_epoch(stats):
            # prune steps count completed epochs before this one, so the
            # one-epoch warmup protects every trial's first report
            if np.isfinite(stats.val_loss) and report(stats.epoch - 1,
                                                      stats.val_loss):
                raise TrialPruned()

        result = train(model, loss_for(qoi, cfg), train_xy, val_xy, cfg,
                       on_epoch=on_epoch)
        if result.stopped_reason == "instability":
            raise TrialFailed("non-finite loss during the trial")
        finite = [h.val_loss for h in result.history if np.isfinite(h.val_loss)]
        if not finite:
            raise TrialFailed(f"no finite validation loss "
                              f"({result.stopped_reason})")
        return finite[-1]

    return objective


@dataclass
class _Lineage:
    """Weights thread that a continuation resumes."""

    params: Dict
    history: List
    best_ref: CheckpointRef
    best_epoch: int
    train_seed: int
    grad_clip: float = 1.0


def _study_summary(study: StudyRecord, architecture: str) -> Dict:
    best = study.best_trial
    return {
        "round_index": study.round_index,
        "architecture": architecture,
        "counts": study.counts(),
        "best": None if best is None else {"params": best.params,
                                           "value": best.final_value,
                                           "trial_id": best.trial_id},
    }


def _train_summary(result: TrainResult) -> Dict:
    return {
        "epochs_run": result.epochs_run,
        "best_epoch": result.best_epoch,
        "best_score": None if not np.isfinite(result.best_score)
        else float(result.best_score),
        "stopped_reason": result.stopped_reason,
        "grad_explosion": result.grad_explosion,
        "grad_vanish": result.grad_vanish,
    }


class _QoiRunner:
    """Stage-3 loop for one output quantity."""

    def __init__(self, ctx: SharedContext, cfg: RunConfig, bundle: DatasetBundle,
                 shape: ModelShape, qoi: str, reasoner, injector: FaultInjector,
                 store: CheckpointStore, prep: PreprocessingConfig,
                 input_stats: Tuple[float, float], sparse: bool,
                 out_dir: str):
        self.ctx = ctx
        self.cfg = cfg
        self.bundle = bundle
        self.shape = shape
        self.qoi = qoi
        self.reasoner = reasoner
        self.injector = injector
        self.store = store
        self.prep = prep
        self.sparse = sparse
        self.out_dir = out_dir
        mean, std = input_stats
        self.x_train = _model_inputs(bundle, "train", mean, std)
        self.x_val = _model_inputs(bundle, "val", mean, std)
        self.y_train = _training_targets(bundle, qoi, "train", prep)
        self.y_val = _training_targets(bundle, qoi, "val", prep)
        self.val_truth = _physical_targets(bundle, qoi, "val")
        self.rounds: List[Dict] = []
        self.global_best: Optional[GlobalBest] = None
        self.lineage: Optional[_Lineage] = None
        self.prev_r2: Optional[float] = None

    # -- audit helpers -----------------------------------------------------

    def _audit(self, stage: str, actor: str, action: str, payload: Dict,
               wall_time: float = 0.0):
        append_audit(self.ctx, stage, actor, action, payload, qoi=self.qoi,
                     wall_time=wall_time)

    # -- round executors ---------------------------------------------------

    def _run_study(self, card: ModelCard, space: SearchSpace,
                   round_number: int) -> StudyRecord:
        objective = _make_objective(card, self.shape, self.qoi,
                                    (self.x_train, self.y_train),
                                    (self.x_val, self.y_val), space, self.cfg.hpo)

        def on_trial(record):
            self._audit("hpo", "hpo_agent", "trial_finished", {
                "trial_id": record.trial_id, "state": record.state.value,
                "value": record.final_value, "params": record.params,
                "error": record.error})

        started = time.perf_counter()
        study = run_hpo(objective, space, self.cfg.hpo, seed=self.cfg.seed,
                        qoi=self.qoi, round_index=round_number,
                        on_trial=on_trial)
        os.makedirs(os.path.join(self.out_dir, "studies"), exist_ok=True)
        study.save(os.path.join(self.out_dir, "studies",
                                f"{self.qoi}-{round_number}.json"))
        self._audit("hpo", "hpo_agent", "study_completed",
                    _study_summary(study, card.name),
                    wall_time=time.perf_counter() - started)
        return study

    def _history_path(self, round_number: int) -> str:
        os.makedirs(os.path.join(self.out_dir, "history"), exist_ok=True)
        return os.path.join(self.out_dir, "history",
                            f"{self.qoi}-{round_number}.jsonl")

    def _write_history(self, result: TrainResult, round_number: int) -> str:
        path = self._history_path(round_number)
        with open(path, "w") as fh:
            for stats in result.history:
                fh.write(json.dumps(stats.to_dict(), sort_keys=True) + "\n")
        return os.path.relpath(path, self.out_dir)

    def _train_full(self, card: ModelCard, params: Dict, space: SearchSpace,
                    strategy: str, round_number: int,
                    first_card: str) -> Tuple[TrainResult, torch.nn.Module, int]:
        seed = _round_seed(self.cfg.seed, self.qoi, round_number)
        cfg = TrainConfig.pipeline(
            epochs=self.cfg.epochs, patience=self.cfg.patience,
            max_train_batches=self.cfg.max_train_batches,
            max_val_batches=self.cfg.max_val_batches,
            grad_clip=space.grad_clip, seed=seed,
        ).with_trial_params(params)
        torch.manual_seed(seed)
        model = build_model(card, params, self.shape)
        hooks = self.injector.hooks(strategy, round_number, card.name, first_card)
        result = train(model, loss_for(self.qoi, cfg),
                       (self.x_train, self.y_train), (self.x_val, self.y_val),
                       cfg, hooks=hooks)
        return result, model, seed

    def _resume(self, card: ModelCard, e_extra: int, round_number: int,
                first_card: str) -> Tuple[TrainResult, torch.nn.Module]:
        lineage = self.lineage
        if lineage is None:
            raise PipelineError("continuation requested without a prior round")
        cfg = TrainConfig.pipeline(
            epochs=e_extra, patience=self.cfg.patience,
            max_train_batches=self.cfg.max_train_batches,
            max_val_batches=self.cfg.max_val_batches,
            grad_clip=lineage.grad_clip, seed=lineage.train_seed,
        ).with_trial_params(lineage.params)
        torch.manual_seed(lineage.train_seed)
        model = build_model(card, lineage.params, self.shape)
        load_into(model, self.store.resolve(lineage.best_ref))
        start = lineage.history[-1].epoch
        hooks = self.injector.hooks("continuation", round_number, card.name,
                                    first_card)

        def on_epoch(stats):
            self._audit("self_correction", "trainer", "continuation_epoch",
                        stats.to_dict())

        result = train(model, loss_for(self.qoi, cfg),
                       (self.x_train, self.y_train), (self.x_val, self.y_val),
                       cfg, hooks=hooks, start_epoch=start,
                       prior_history=lineage.history, on_epoch=on_epoch)
        return result, model

    def _score_round(self, model: torch.nn.Module,
                     result: TrainResult) -> Optional[float]:
        if not result.best_state:
            return None
        model.load_state_dict(result.best_state)
        return _evaluate(model, self.x_val, self.val_truth, self.qoi,
                         self.prep).r2

    def _performance_map(self) -> Dict[str, float]:
        seen: Dict[str, float] = {}
        for record in self.rounds:
            r2 = record.get("r2")
            arch = record["architecture"]
            if r2 is not None and (arch not in seen or r2 > seen[arch]):
                seen[arch] = r2
        return seen

    # -- main loop ---------------------------------------------------------

    def run(self, selection: ArchitectureSelection,
            budgets: ControlBudgets) -> None:
        target = self.ctx.targets.per_qoi[self.qoi]
        state = CorrectionState(ranking=list(selection.ranking),
                                card=selection.chosen)
        first_card = selection.chosen
        space = _capped_space(get_card(state.card), self.qoi,
                              self.cfg.max_base_channels)
        strategy = "initial"
        pending_extra = 0
        guard = 3 * budgets.max_rounds_per_qoi + len(state.ranking) + 4

        for _ in range(guard):
            round_number = len(self.rounds) + 1
            card = get_card(state.card)
            if state.card not in state.cards_tried:
                state.cards_tried.append(state.card)
            record: Dict = {"round": round_number, "strategy": strategy,
                            "architecture": card.name, "r2": None,
                            "status": "", "wall_time": 0.0}
            started = time.perf_counter()
            evidence: RoundEvidence

            if strategy == "continuation":
                result, model = self._resume(card, pending_extra, round_number,
                                             first_card)
                state.trained_rounds += 1
                record["training"] = _train_summary(result)
                record["training"]["history_file"] = \
                    self._write_history(result, round_number)
                improved = result.best_epoch > self.lineage.best_epoch
                if improved:
                    ref = self.store.save(result.best_state, self.qoi,
                                          round_number, "best",
                                          score=float(result.best_score),
                                          epoch=result.best_epoch,
                                          meta={"architecture": card.name})
                else:
                    ref = self.lineage.best_ref
                self.lineage = _Lineage(self.lineage.params, result.history,
                                        ref, max(result.best_epoch,
                                                 self.lineage.best_epoch),
                                        self.lineage.train_seed,
                                        self.lineage.grad_clip)
                r2 = self._score_round(model, result)
                improvement = None if (r2 is None or self.prev_r2 is None) \
                    else r2 - self.prev_r2
                evidence = RoundEvidence(
                    val_score=r2, target_met=meets_quality(r2, target),
                    stopped_reason=result.stopped_reason,
                    grad_explosion=result.grad_explosion,
                    grad_vanish=result.grad_vanish,
                    improvement=improvement,
                    continuation_used=state.continuation_used)
                record["r2"] = r2
                record["hyperparams"] = dict(self.lineage.params)
                record["checkpoint"] = ref.to_dict()
            else:
                study = self._run_study(card, space, round_number)
                record["study"] = _study_summary(study, card.name)
                best_trial = study.best_trial
                if best_trial is None:
                    state.trained_rounds += 1
                    self._audit("training", "trainer", "training_skipped",
                                {"reason": "no completed trials in the study",
                                 "round": round_number})
                    record["status"] = "unstable"
                    record["error"] = "no completed trials in the study"
                    evidence = RoundEvidence(val_score=None, target_met=False,
                                             no_completed_trials=True)
                    ref = None
                else:
                    result, model, seed = self._train_full(
                        card, best_trial.params, space, strategy,
                        round_number, first_card)
                    state.trained_rounds += 1
                    record["training"] = _train_summary(result)
                    record["training"]["history_file"] = \
                        self._write_history(result, round_number)
                    record["hyperparams"] = dict(best_trial.params)
                    self._audit("training", "trainer", "training_completed",
                                {**record["training"], "round": round_number,
                                 "params": best_trial.params})
                    ref = None
                    r2 = None
                    if result.best_epoch >= 0 and result.best_state:
                        ref = self.store.save(result.best_state, self.qoi,
                                              round_number, "best",
                                              score=float(result.best_score),
                                              epoch=result.best_epoch,
                                              meta={"architecture": card.name})
                        self.store.save(result.final_state, self.qoi,
                                        round_number, "final",
                                        score=float(result.history[-1].score)
                                        if result.history else float("nan"),
                                        epoch=result.history[-1].epoch
                                        if result.history else -1,
                                        meta={"architecture": card.name})
                        record["checkpoint"] = ref.to_dict()
                        self.lineage = _Lineage(best_trial.params,
                                                result.history, ref,
                                                result.best_epoch, seed,
                                                space.grad_clip)
                        r2 = self._score_round(model, result)
                    record["r2"] = r2
                    evidence = RoundEvidence(
                        val_score=r2, target_met=meets_quality(r2, target),
                        stopped_reason=result.stopped_reason,
                        grad_explosion=result.grad_explosion,
                        grad_vanish=result.grad_vanish,
                        improvement=None,
                        continuation_used=state.continuation_used)

            record["wall_time"] = time.perf_counter() - started
            if record.get("checkpoint") and record["r2"] is not None:
                candidate = GlobalBest(self.qoi, record["architecture"],
                                       round_number, record["r2"],
                                       CheckpointRef.from_dict(record["checkpoint"]),
                                       record.get("hyperparams", {}))
                updated = update_global_best(self.global_best, candidate)
                if updated is not self.global_best:
                    self.global_best = updated
                    # continuation rounds have no training-stage events, and a
                    # training event after a self-correction one would break
                    # the audit stage grammar
                    stage = "self_correction" if strategy == "continuation" \
                        else "training"
                    self._audit(stage, "controller", "global_best_updated",
                                {"round": round_number, "val_score": record["r2"],
                                 "architecture": record["architecture"]})
            self.prev_r2 = record["r2"]

            if evidence.target_met:
                record["status"] = "target_met"
                self.rounds.append(record)
                break

            diagnosis = diagnose(evidence, budgets.plateau_tol)
            action = self_correct(diagnosis, state, budgets)
            if not record["status"]:
                record["status"] = {"converging": "below_target",
                                    "unstable": "unstable",
                                    "underperforming": "plateau"}[diagnosis.state]
            record["diagnosis"] = diagnosis.to_dict()
            record["action"] = action.to_dict()
            self._audit("self_correction", "controller", "diagnosis",
                        diagnosis.to_dict())
            self._audit("self_correction", "controller", "recovery_action",
                        action.to_dict())
            narration = self.reasoner("diagnosis_narration", {
                "qoi": self.qoi, "round": round_number,
                "diagnosis": diagnosis.to_dict(), "action": action.to_dict(),
                "val_score": record["r2"], "target": target.to_dict()})
            record["rationale"] = narration["rationale"]
            self._audit("self_correction", "reasoner", "narration", narration)
            self.rounds.append(record)

            if action.kind == ACT_CONTINUE:
                strategy = "continuation"
                pending_extra = action.e_extra
            elif action.kind == ACT_RESTART:
                space = tighten_space(space, action.lr_cap, action.grad_clip)
                self.rounds.append({
                    "round": len(self.rounds) + 1,
                    "strategy": "stability_restart",
                    "architecture": card.name, "r2": None,
                    "status": f"search space tightened: lr <= {action.lr_cap:g}, "
                              f"grad clip {action.grad_clip:g}",
                    "wall_time": 0.0})
                strategy = "retrain"
                self.lineage = None
                self.prev_r2 = None
            elif action.kind == ACT_SWITCH:
                reselection = select_architecture(
                    self.qoi, self.sparse, list_models(), self.reasoner,
                    self.shape, self.cfg.memory_budget_bytes,
                    lambda c: _capped_space(c, self.qoi,
                                            self.cfg.max_base_channels),
                    on_step=lambda step: self._audit(
                        "self_correction", "selection_agent", step.tool,
                        {"args": step.args, "observation": step.observation}),
                    exclude=tuple(state.cards_tried),
                    performance=self._performance_map())
                self.ctx.selections[self.qoi].append(reselection.to_dict())
                state.card = reselection.chosen
                space = _capped_space(get_card(state.card), self.qoi,
                                      self.cfg.max_base_channels)
                self.rounds.append({
                    "round": len(self.rounds) + 1, "strategy": "switch",
                    "architecture": reselection.chosen, "r2": None,
                    "status": "selected", "rationale": reselection.rationale,
                    "wall_time": 0.0})
                strategy = "retrain"
                self.lineage = None
                self.prev_r2 = None
            else:  # global-best fallback
                fallback = {
                    "round": len(self.rounds) + 1,
                    "strategy": ACT_FALLBACK,
                    "architecture": card.name, "r2": None,
                    "status": action.reason, "wall_time": 0.0}
                if self.global_best is not None:
                    fallback["architecture"] = self.global_best.architecture
                    fallback["r2"] = self.global_best.val_score
                    fallback["checkpoint"] = self.global_best.checkpoint.to_dict()
                self.rounds.append(fallback)
                break
        else:
            raise PipelineError(f"{self.qoi} loop exceeded its iteration guard")

        self.ctx.rounds[self.qoi] = self.rounds
        if self.global_best is not None:
            self.ctx.global_best[self.qoi] = self.global_best.to_dict()


def run_pipeline(cfg: RunConfig,
                 config_sources: Optional[Dict[str, str]] = None
                 ) -> Tuple[SharedContext, Dict]:
    """Execute a full run; returns the shared context and the report."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    bundle = load_bundle(cfg.data_dir, verify=cfg.verify_checksums)
    run_id = compute_run_id(bundle.manifest["content_hash"], cfg.document(),
                            cfg.seed)
    # source_dir lets plotting find the bundle later; it stays out of the
    # run id so relocated copies of the same data hash identically
    dataset_entry = dict(bundle.manifest)
    dataset_entry["source_dir"] = os.path.abspath(cfg.data_dir)
    ctx = SharedContext(run_id=run_id, seed=cfg.seed, qois=list(cfg.qois),
                        config=cfg.document(), dataset=dataset_entry,
                        environment=_environment(cfg, config_sources))
    reasoner = make_reasoner(cfg.reasoner,
                             archive_dir=os.path.join(cfg.out_dir, "llm"))
    injector = FaultInjector(cfg.inject)
    store = CheckpointStore(cfg.out_dir)
    started = time.perf_counter()

    try:
        # stage 1: profile, preprocessing, targets
        profile = profile_dataset(bundle)
        ctx.profile = profile.to_dict()
        append_audit(ctx, "data_analysis", "profiler", "dataset_profiled",
                     ctx.profile)
        prep = configure_preprocessing(bundle)
        train_inputs = bundle.split_arrays("train")[0]
        input_mean = float(np.mean(train_inputs))
        input_std = float(np.std(train_inputs)) or 1.0
        review = reasoner("preprocessing", {
            "pressure_stats": ctx.profile["qoi_stats"]["pressure"],
            "proposal": {"pressure": "per-dataset bar-scale standardization",
                         "saturation": "passthrough with presence-aware loss"}})
        ctx.preprocessing = {
            "pressure": prep.to_dict(),
            "inputs": {"mean": input_mean, "std": input_std},
            "saturation": {"transform": "none"},
            "review": review,
        }
        append_audit(ctx, "data_analysis", "reasoner", "preprocessing_review",
                     review)
        if cfg.instruction:
            targets, recognized, note = parse_instruction_report(
                cfg.instruction, cfg.qois)
            append_audit(ctx, "data_analysis", "instruction_parser",
                         "targets_resolved",
                         {"recognized": recognized, "note": note,
                          "targets": targets.to_dict()})
        else:
            targets = resolve_targets(None, qois=cfg.qois)
            append_audit(ctx, "data_analysis", "instruction_parser",
                         "targets_resolved",
                         {"recognized": False, "note": "defaults applied",
                          "targets": targets.to_dict()})
        ctx.targets = targets

        # stage 2: architecture selection for every quantity up front
        shape = ModelShape.from_grid(bundle.grid, bundle.n_timesteps)
        selections: Dict[str, ArchitectureSelection] = {}
        for qoi in cfg.qois:
            selection = select_architecture(
                qoi, profile.is_sparse(qoi), list_models(), reasoner, shape,
                cfg.memory_budget_bytes,
                lambda c: _capped_space(c, qoi, cfg.max_base_channels),
                on_step=lambda step, q=qoi: append_audit(
                    ctx, "model_selection", "selection_agent", step.tool,
                    {"args": step.args, "observation": step.observation}, qoi=q))
            selections[qoi] = selection
            ctx.selections[qoi] = [selection.to_dict()]

        # stage 3: per-QoI HPO + training + recovery
        for qoi in cfg.qois:
            runner = _QoiRunner(ctx, cfg, bundle, shape, qoi, reasoner,
                                injector, store, prep,
                                (input_mean, input_std),
                                profile.is_sparse(qoi), cfg.out_dir)
            runner.run(selections[qoi], cfg.budgets)

        # stage 4: deployment evaluation and consolidation
        input_stats = (input_mean, input_std)
        for qoi in cfg.qois:
            best = ctx.global_best.get(qoi)
            if best is None:
                append_audit(ctx, "reporting", "deployer", "no_model",
                             {"reason": "no round produced a usable checkpoint"},
                             qoi=qoi)
                continue
            gb = GlobalBest.from_dict(best)
            model = build_model(gb.architecture, gb.hyperparams, shape)
            load_into(model, store.resolve(gb.checkpoint))
            x_test = _model_inputs(bundle, "test", *input_stats)
            test_truth = _physical_targets(bundle, qoi, "test")
            metrics = _evaluate(model, x_test, test_truth, qoi, prep)
            ctx.deployed[qoi] = {
                "architecture": gb.architecture,
                "checkpoint": gb.checkpoint.to_dict(),
                "val_score": gb.val_score,
                "hyperparams": dict(gb.hyperparams),
                "test_metrics": metrics.to_dict(),
            }
            append_audit(ctx, "reporting", "deployer", "deployed",
                         ctx.deployed[qoi], qoi=qoi)

        report = consolidate(ctx, run_dir=cfg.out_dir)
        report["wall_time"] = time.perf_counter() - started
        append_audit(ctx, "reporting", "consolidator", "report_written",
                     {"path": "report.json",
                      "audit_digest": report["audit_digest"]})
        validate_audit(ctx.audit)
        validate_stage_order(ctx.audit)
    finally:
        ctx.save(os.path.join(cfg.out_dir, "context.json"))
        with open(os.path.join(cfg.out_dir, "audit.jsonl"), "w") as fh:
            for event in ctx.audit:
                fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
        with open(os.path.join(cfg.out_dir, "zoo.json"), "w") as fh:
            json.dump(zoo_manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    with open(os.path.join(cfg.out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(cfg.out_dir, "summary.md"), "w") as fh:
        fh.write(render_summary(report))
    return ctx, report


def load_deployed_model(run_dir: str, qoi: str):
    """Rebuild the deployed network for a finished run directory."""
    ctx = SharedContext.load(os.path.join(run_dir, "context.json"))
    deployed = ctx.deployed.get(qoi)
    if deployed is None:
        raise ConfigurationError(f"run has no deployed model for {qoi!r}")
    grid = GridSpec(**ctx.dataset["grid"])
    shape = ModelShape.from_grid(grid, int(ctx.dataset["n_timesteps"]))
    model = build_model(deployed["architecture"], deployed["hyperparams"], shape)
    load_into(model, os.path.join(run_dir, deployed["checkpoint"]["prefix"]))
    prep = PreprocessingConfig.from_dict(ctx.preprocessing["pressure"])
    return ctx, model, prep
