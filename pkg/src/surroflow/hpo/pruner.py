"""Median pruning rule over intermediate trial values."""

import statistics
from dataclasses import dataclass
from typing import Dict, Optional, Sequence


@dataclass(frozen=True)
class MedianPrunerConfig:
    n_warmup: int = 1
    n_min_trials: int = 2


def median_prune_decision(step: int, value: float,
                          prior_steps: Sequence[Dict[int, float]],
                          cfg: MedianPrunerConfig = MedianPrunerConfig()) -> bool:
    """True iff the running trial should stop after reporting ``value``.

    ``prior_steps`` holds the intermediate maps (step -> value, lower is
    better) of trials started before the current one. Pruning requires the
    step to be past warmup, at least ``n_min_trials`` prior trials to have
    reported at this step, and the current value to be strictly worse than
    their median; ties never prune, and the first trial is never pruned.
    """
    if step < cfg.n_warmup:
        return False
    at_step = [steps[step] for steps in prior_steps if step in steps]
    if len(at_step) < cfg.n_min_trials:
        return False
    return value > statistics.median(at_step)
