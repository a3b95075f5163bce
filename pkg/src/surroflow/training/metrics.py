"""Regression metrics on the physical scale."""

from dataclasses import dataclass
from typing import Dict

import numpy as np

from surroflow.errors import NumericalError


@dataclass(frozen=True)
class Metrics:
    r2: float
    rmse: float
    rel_l2: float

    def to_dict(self) -> Dict[str, float]:
        return {"r2": self.r2, "rmse": self.rmse, "rel_l2": self.rel_l2}


def compute_metrics(pred: np.ndarray, truth: np.ndarray) -> Metrics:
    """R^2 and RMSE pooled over every element; relative L2 averaged per
    sample (leading axis, or the whole array when 1-d)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    n_samples = pred.shape[0] if pred.ndim >= 2 else 1
    pred = pred.reshape(n_samples, -1)
    truth = truth.reshape(n_samples, -1)
    err = (pred - truth).ravel()
    ss_res = float(err @ err)
    centered = truth.ravel() - truth.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        raise NumericalError("R^2 is undefined for all-constant truth")
    rmse = float(np.sqrt(ss_res / err.size))
    err_norms = np.linalg.norm(pred - truth, axis=1)
    truth_norms = np.linalg.norm(truth, axis=1)
    ratios = np.divide(err_norms, truth_norms,
                       out=np.where(err_norms == 0.0, 0.0, np.inf),
                       where=truth_norms > 0)
    return Metrics(r2=1.0 - ss_res / ss_tot, rmse=rmse,
                   rel_l2=float(ratios.mean()))
