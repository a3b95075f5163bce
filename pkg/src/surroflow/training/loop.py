"""Budgeted training loop with early stopping and stability telemetry."""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import torch

from surroflow.training.losses import early_stop_score, pressure_loss, saturation_loss

GRAD_EXPLOSION_NORM = 1e3
GRAD_EXPLOSION_STREAK = 3
GRAD_VANISH_NORM = 1e-10

ArrayPair = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 1
    grad_clip: float = 1.0
    epochs: int = 500
    patience: int = 20
    lambda_bce: float = 0.01
    tau: float = 1e-4
    max_train_batches: Optional[int] = None
    max_val_batches: Optional[int] = None
    improvement_eps: float = 1e-6
    seed: int = 0

    @staticmethod
    def baseline(**overrides) -> "TrainConfig":
        """Long-haul single-model preset."""
        return replace(TrainConfig(), **overrides)

    @staticmethod
    def pipeline(**overrides) -> "TrainConfig":
        """Per-round preset used inside the automated loop."""
        return replace(TrainConfig(epochs=30, patience=15), **overrides)

    def with_trial_params(self, params: Dict) -> "TrainConfig":
        known = {k: params[k] for k in
                 ("learning_rate", "weight_decay", "batch_size", "lambda_bce")
                 if k in params}
        if "batch_size" in known:
            known["batch_size"] = int(known["batch_size"])
        return replace(self, **known)


def loss_for(qoi: str, cfg: TrainConfig) -> Callable[[torch.Tensor, torch.Tensor], torch.Tensor]:
    if qoi == "pressure":
        return pressure_loss
    if qoi == "saturation":
        return lambda pred, target: saturation_loss(pred, target, cfg.lambda_bce, cfg.tau)
    raise ValueError(f"unknown qoi {qoi!r}")


@dataclass
class TrainingHooks:
    """Fault-injection points; production runs pass none of these."""

    transform_loss: Optional[Callable[[torch.Tensor, int, int], torch.Tensor]] = None
    lr_override: Optional[float] = None


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    score: float
    grad_norm_max: float

    def to_dict(self) -> Dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_loss": self.val_loss, "score": self.score,
                "grad_norm_max": self.grad_norm_max}


@dataclass
class TrainResult:
    history: List[EpochStats]
    best_epoch: int
    best_score: float
    stopped_reason: str
    grad_explosion: bool = False
    grad_vanish: bool = False
    best_state: Dict[str, torch.Tensor] = field(default_factory=dict, repr=False)
    final_state: Dict[str, torch.Tensor] = field(default_factory=dict, repr=False)

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def _batches(x: np.ndarray, y: np.ndarray, batch_size: int, cap: Optional[int],
             order: Optional[np.ndarray]):
    idx = np.arange(len(x)) if order is None else order
    n_batches = math.ceil(len(idx) / batch_size)
    if cap is not None:
        n_batches = min(n_batches, cap)
    for b in range(n_batches):
        sel = idx[b * batch_size:(b + 1) * batch_size]
        yield (torch.from_numpy(np.ascontiguousarray(x[sel])).float(),
               torch.from_numpy(np.ascontiguousarray(y[sel])).float())


def _snapshot(model: torch.nn.Module) -> Dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def evaluate_loss(model: torch.nn.Module, loss_fn, data: ArrayPair,
                  batch_size: int, cap: Optional[int] = None) -> float:
    model.eval()
    losses = []
    with torch.no_grad():
        for bx, by in _batches(data[0], data[1], batch_size, cap, None):
            losses.append(float(loss_fn(model(bx), by)))
    return float(np.mean(losses)) if losses else float("nan")


def predict(model: torch.nn.Module, x: np.ndarray, batch_size: int = 8) -> np.ndarray:
    model.eval()
    outs = []
    with torch.no_grad():
        for b in range(0, len(x), batch_size):
            bx = torch.from_numpy(np.ascontiguousarray(x[b:b + batch_size])).float()
            outs.append(model(bx).numpy())
    return np.concatenate(outs, axis=0)


def train(model: torch.nn.Module, loss_fn, train_data: ArrayPair,
          val_data: ArrayPair, cfg: TrainConfig,
          hooks: Optional[TrainingHooks] = None, start_epoch: int = 0,
          prior_history: Optional[List[EpochStats]] = None,
          on_epoch: Optional[Callable[[EpochStats], None]] = None) -> TrainResult:
    """Train until the epoch budget, early stop, or an instability abort.

    Epochs are numbered from 1. Pass ``start_epoch`` (the number of epochs
    already run) and ``prior_history`` to resume: the counter and history
    continue from the previous run (optimizer moments start fresh). Early
    stopping fires once the score has gone ``patience`` consecutive epochs
    without improving by more than ``improvement_eps``; the best checkpoint
    tracks any strict improvement, so its score is the exact history minimum.
    """
    hooks = hooks or TrainingHooks()
    torch.manual_seed(cfg.seed)
    lr = hooks.lr_override if hooks.lr_override is not None else cfg.learning_rate
    opt = torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=cfg.weight_decay)

    history: List[EpochStats] = list(prior_history or [])
    best_score = math.inf
    best_epoch = -1
    for h in history:
        if np.isfinite(h.score) and h.score < best_score:
            best_score, best_epoch = h.score, h.epoch
    best_state = _snapshot(model)
    bad_epochs = 0
    explosion = False
    vanish = False
    streak = 0
    stopped = "max_epochs"

    for epoch in range(start_epoch + 1, start_epoch + cfg.epochs + 1):
        model.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_data[0]))
        losses = []
        epoch_max_norm = 0.0
        aborted = False
        for step, (bx, by) in enumerate(_batches(
                train_data[0], train_data[1], cfg.batch_size,
                cfg.max_train_batches, order)):
            opt.zero_grad()
            loss = loss_fn(model(bx), by)
            if hooks.transform_loss is not None:
                loss = hooks.transform_loss(loss, epoch, step)
            if not torch.isfinite(loss):
                losses.append(float(loss.detach()))
                aborted = True
                break
            loss.backward()
            norm = float(torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip))
            # clip_grad_norm_ reports the pre-clip norm; the streak needs it
            # raw, the history records what actually reached the optimizer
            epoch_max_norm = max(epoch_max_norm, min(norm, cfg.grad_clip))
            streak = streak + 1 if norm > GRAD_EXPLOSION_NORM else 0
            explosion = explosion or streak >= GRAD_EXPLOSION_STREAK
            opt.step()
            losses.append(float(loss.detach()))

        train_loss = float(np.mean(losses)) if losses else float("nan")
        if aborted:
            stats = EpochStats(epoch, train_loss, float("nan"), float("nan"),
                               epoch_max_norm)
            history.append(stats)
            if on_epoch is not None:
                on_epoch(stats)
            stopped = "instability"
            break

        if losses and epoch_max_norm < GRAD_VANISH_NORM:
            vanish = True
        val_loss = evaluate_loss(model, loss_fn, val_data, cfg.batch_size,
                                 cfg.max_val_batches)
        score = early_stop_score(train_loss, val_loss)
        stats = EpochStats(epoch, train_loss, val_loss, score, epoch_max_norm)
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)

        if not np.isfinite(score):
            stopped = "instability"
            break
        if score < best_score - cfg.improvement_eps:
            bad_epochs = 0
        else:
            bad_epochs += 1
        if score < best_score:
            best_score, best_epoch = score, epoch
            best_state = _snapshot(model)
        if bad_epochs >= cfg.patience:
            stopped = "early_stop"
            break

    return TrainResult(history=history, best_epoch=best_epoch, best_score=best_score,
                       stopped_reason=stopped, grad_explosion=explosion,
                       grad_vanish=vanish, best_state=best_state,
                       final_state=_snapshot(model))
