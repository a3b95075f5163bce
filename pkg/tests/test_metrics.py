"""Metrics against hand-written formulas."""

import numpy as np
import pytest

from surroflow.errors import NumericalError
from surroflow.training.metrics import compute_metrics


def test_hand_computed_values():
    pred = np.array([1.0, 2.0, 4.0])
    truth = np.array([1.0, 3.0, 5.0])
    m = compute_metrics(pred, truth)
    ss_res = 0.0 + 1.0 + 1.0
    ss_tot = 4.0 + 0.0 + 4.0
    assert abs(m.r2 - (1 - ss_res / ss_tot)) < 1e-15
    assert abs(m.rmse - np.sqrt(ss_res / 3)) < 1e-15
    assert abs(m.rel_l2 - np.sqrt(ss_res) / np.linalg.norm(truth)) < 1e-15


def test_perfect_prediction():
    truth = np.random.default_rng(0).normal(size=(3, 4, 4))
    m = compute_metrics(truth.copy(), truth)
    assert m.r2 == 1.0 and m.rmse == 0.0 and m.rel_l2 == 0.0


def test_mean_predictor_scores_zero():
    truth = np.random.default_rng(1).normal(2.0, 3.0, size=200)
    pred = np.full_like(truth, truth.mean())
    m = compute_metrics(pred, truth)
    assert abs(m.r2) < 1e-12


def test_constant_truth_is_undefined():
    truth = np.full(10, 5.0)
    with pytest.raises(NumericalError):
        compute_metrics(truth.copy(), truth)


def test_r2_and_rmse_pool_over_all_elements():
    rng = np.random.default_rng(2)
    truth = rng.normal(size=(2, 3, 4))
    pred = truth + rng.normal(0, 0.1, size=truth.shape)
    shaped = compute_metrics(pred, truth)
    pooled = compute_metrics(pred.ravel(), truth.ravel())
    assert shaped.r2 == pooled.r2 and shaped.rmse == pooled.rmse
    # Relative L2 averages per-sample norm ratios along the leading axis.
    want = np.mean([np.linalg.norm(pred[i] - truth[i]) / np.linalg.norm(truth[i])
                    for i in range(2)])
    assert abs(shaped.rel_l2 - want) < 1e-15


def test_r2_invariant_under_shared_affine_rescale():
    rng = np.random.default_rng(3)
    truth = rng.normal(size=(4, 5))
    pred = truth + rng.normal(0, 0.3, size=truth.shape)
    base = compute_metrics(pred, truth).r2
    scaled = compute_metrics(3.0 * pred + 7.0, 3.0 * truth + 7.0).r2
    assert scaled == pytest.approx(base, abs=1e-12)


def test_r2_never_exceeds_one():
    rng = np.random.default_rng(4)
    truth = rng.normal(size=50)
    for _ in range(20):
        pred = truth + rng.normal(0, rng.uniform(0, 5), size=50)
        assert compute_metrics(pred, truth).r2 <= 1.0


def test_size_mismatch_rejected():
    with pytest.raises(ValueError):
        compute_metrics(np.zeros(3), np.zeros(4))
