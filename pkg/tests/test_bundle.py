"""Dataset assembly, on-disk layout, and integrity checks."""

import json
import os

import numpy as np
import pytest

from surroflow.datagen.bundle import (DatasetConfig, build_dataset, load_bundle,
                                      split_sizes, write_bundle)
from surroflow.datagen.grf import GridSpec
from surroflow.errors import ConfigurationError, StructuralValidationError


@pytest.fixture(scope="module")
def tiny_bundle():
    cfg = DatasetConfig(grid=GridSpec(12, 12, 1), n_samples=20,
                        n_timesteps=4, seed=5)
    return cfg, build_dataset(cfg)


def test_split_size_convention():
    assert split_sizes(1000) == (700, 100, 200)
    assert split_sizes(10) == (7, 1, 2)
    assert split_sizes(15) == (10, 1, 4)
    for n in range(10, 200):
        tr, va, te = split_sizes(n)
        assert tr + va + te == n and min(tr, va, te) >= 1


def test_bundle_shapes_and_invariants(tiny_bundle):
    cfg, bundle = tiny_bundle
    assert bundle.inputs.shape == (20, 1, 12, 12, 1)
    assert bundle.pressure.shape == (20, 4, 12, 12, 1)
    assert bundle.saturation.shape == bundle.pressure.shape
    assert np.all(np.isfinite(bundle.pressure))
    assert bundle.saturation.min() >= 0.0 and bundle.saturation.max() <= 1.0
    assert np.all(np.diff(bundle.saturation, axis=1) >= -1e-6)
    lo, hi = bundle.split_range("train")
    assert (lo, hi) == (0, 14)
    assert bundle.split_range("val") == (14, 16)
    assert bundle.split_range("test") == (16, 20)


def test_rate_control_pins_peak_buildup(tiny_bundle):
    cfg, bundle = tiny_bundle
    peaks = bundle.pressure[:, -1].max(axis=(1, 2, 3)) - cfg.datum_pa
    assert np.allclose(peaks, cfg.target_buildup_pa, rtol=1e-5)
    # pre-injection snapshot sits at the datum
    assert np.allclose(bundle.pressure[:, 0], cfg.datum_pa, rtol=1e-6)


def test_manifest_hash_deterministic(tiny_bundle):
    cfg, bundle = tiny_bundle
    again = build_dataset(cfg)
    assert bundle.manifest["content_hash"] == again.manifest["content_hash"]
    other = build_dataset(DatasetConfig(grid=GridSpec(12, 12, 1), n_samples=20,
                                        n_timesteps=4, seed=6))
    assert other.manifest["content_hash"] != bundle.manifest["content_hash"]


def test_write_load_round_trip(tiny_bundle, tmp_path):
    _, bundle = tiny_bundle
    out = tmp_path / "ds"
    write_bundle(bundle, str(out))
    loaded = load_bundle(str(out), verify=True)
    assert np.array_equal(loaded.pressure, bundle.pressure)
    assert loaded.manifest["content_hash"] == bundle.manifest["content_hash"]
    # refuses to clobber without force
    with pytest.raises(ConfigurationError):
        write_bundle(bundle, str(out))
    write_bundle(bundle, str(out), force=True)


def test_structural_validation(tiny_bundle, tmp_path):
    _, bundle = tiny_bundle
    out = tmp_path / "ds"
    write_bundle(bundle, str(out))

    with pytest.raises(StructuralValidationError):
        load_bundle(str(tmp_path / "missing"))

    os.truncate(out / "pressure.f32", 64)
    with pytest.raises(StructuralValidationError):
        load_bundle(str(out))

    write_bundle(bundle, str(out), force=True)
    raw = np.fromfile(out / "saturation.f32", dtype="<f4")
    raw[0] += 1.0
    raw.tofile(out / "saturation.f32")
    load_bundle(str(out))  # checksums are opt-in
    with pytest.raises(StructuralValidationError):
        load_bundle(str(out), verify=True)

    manifest = json.loads((out / "manifest.json").read_text())
    manifest["format"] = "other/v9"
    (out / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(StructuralValidationError):
        load_bundle(str(out))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DatasetConfig(n_samples=9)
    with pytest.raises(ConfigurationError):
        DatasetConfig(n_timesteps=1)
    with pytest.raises(ConfigurationError):
        DatasetConfig(target_buildup_pa=0.0)
