"""Profiling stats, pressure standardization, and structural checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surroflow.datagen.bundle import DatasetConfig, build_dataset
from surroflow.datagen.grf import GridSpec
from surroflow.errors import StructuralValidationError
from surroflow.profiling import (
    PA_PER_BAR,
    PreprocessingConfig,
    configure_preprocessing,
    denormalize_pressure,
    field_stats,
    normalize_pressure,
    profile_dataset,
)


def _tiny_bundle(seed=0):
    cfg = DatasetConfig(n_samples=12, grid=GridSpec(6, 6, 1),
                        n_timesteps=3, seed=seed)
    return build_dataset(cfg)


def test_field_stats_hand_computed():
    arr = np.array([0.0, 5e-5, -5e-5, 1.0, 3.0])
    s = field_stats(arr, tau=1e-4)
    assert s.min == -5e-5 and s.max == 3.0
    assert abs(s.mean - np.mean(arr)) < 1e-15
    assert abs(s.std - np.std(arr)) < 1e-15
    assert s.fraction_near_zero == 3 / 5


def test_profile_reports_splits_and_sparsity():
    bundle = _tiny_bundle()
    prof = profile_dataset(bundle)
    assert prof.n_samples == 12 and prof.grid == (6, 6, 1)
    assert prof.split_sizes == {"train": 8, "val": 1, "test": 3}
    # Pressure fills the domain; the plume covers a small fraction of it.
    assert not prof.is_sparse("pressure")
    assert prof.is_sparse("saturation")
    d = prof.to_dict()
    assert d["stats_split"] == "train"
    assert set(d["qoi_stats"]) == {"pressure", "saturation"}


def test_normalization_constants_from_train_split_only():
    bundle = _tiny_bundle(seed=4)
    prep = configure_preprocessing(bundle)
    train_p = bundle.split_arrays("train")[1].astype(np.float64) / PA_PER_BAR
    assert abs(prep.mu_p - train_p.mean()) < 1e-9
    assert abs(prep.sigma_p - train_p.std()) < 1e-9
    # Normalized training pressure is standard at float32 precision (the
    # arrays stay in their storage dtype).
    z = normalize_pressure(bundle.split_arrays("train")[1], prep)
    assert abs(z.mean()) < 1e-5
    assert abs(z.std() - 1.0) < 1e-5


def test_normalize_mean_maps_to_zero():
    prep = PreprocessingConfig(mu_p=208.14, sigma_p=6.01)
    z = normalize_pressure(np.array(208.14 * PA_PER_BAR), prep)
    assert abs(float(z)) < 1e-12


def test_round_trip_relative_error():
    prep = PreprocessingConfig(mu_p=208.14, sigma_p=6.01)
    p = np.linspace(1.9e7, 2.4e7, 50)
    back = denormalize_pressure(normalize_pressure(p, prep), prep)
    assert np.max(np.abs(back - p) / p) < 1e-9


@settings(max_examples=60, deadline=None)
@given(mu=st.floats(-500, 500), sigma=st.floats(0.0, 50.0),
       bar=st.floats(-1000, 1000))
def test_round_trip_property(mu, sigma, bar):
    # Holds for any constants, including sigma exactly zero thanks to the
    # epsilon guard in the denominator.
    prep = PreprocessingConfig(mu_p=mu, sigma_p=sigma)
    p = bar * PA_PER_BAR
    z = normalize_pressure(np.array(p), prep)
    assert np.isfinite(z)
    back = float(denormalize_pressure(z, prep))
    assert abs(back - p) <= 1e-6 * max(1.0, abs(p))


def test_constant_field_epsilon_guard():
    field = np.full((4, 4), 2.0e7)
    prep = PreprocessingConfig(mu_p=200.0, sigma_p=0.0)
    z = normalize_pressure(field, prep)
    assert np.all(np.isfinite(z)) and np.all(z == 0.0)
    assert np.allclose(denormalize_pressure(z, prep), field)


def test_preprocessing_config_round_trips_through_dict():
    prep = PreprocessingConfig(mu_p=208.14, sigma_p=6.01)
    again = PreprocessingConfig.from_dict(prep.to_dict())
    assert again == prep


def test_truncated_array_fails_structural_check():
    bundle = _tiny_bundle()
    bundle.pressure = bundle.pressure[:, :2]
    with pytest.raises(StructuralValidationError):
        profile_dataset(bundle)


def test_manifest_shape_mismatch_fails_structural_check():
    bundle = _tiny_bundle()
    bundle.manifest["arrays"]["inputs"]["shape"] = [12, 1, 6, 7, 1]
    with pytest.raises(StructuralValidationError):
        profile_dataset(bundle)
