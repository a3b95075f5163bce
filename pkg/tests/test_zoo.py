"""Model registry, builders, the spectral layer, and the memory probe."""

import numpy as np
import pytest
import torch

from surroflow.errors import ConfigurationError
from surroflow.hpo.space import Categorical, LogUniform
from surroflow.zoo import (
    LAMBDA_BCE_PARAM,
    ModelShape,
    build_model,
    estimate_memory,
    get_card,
    list_models,
    qoi_search_space,
    zoo_manifest,
)
from surroflow.zoo.blocks import SpectralConv

FAMILIES = {"UNet", "ResUNet", "RecurrentRUNet", "EDConvLSTM",
            "CNNTransformer", "UDeepONet", "FNO", "UFNO"}


def _minimal_hp(card):
    hp = {"base_channels": 8}
    if "norm" in card.search_space.names:
        hp["norm"] = "group"
    if "transformer_layers" in card.search_space.names:
        hp.update(transformer_layers=1, transformer_heads=2)
    return hp


def test_registry_lists_eight_families():
    cards = list_models()
    assert {c.name for c in cards} == FAMILIES
    assert len(cards) == 8
    with pytest.raises(ConfigurationError):
        get_card("PerceiverIO")


def test_every_card_declares_trainer_domains():
    for card in list_models():
        space = card.search_space
        lr = space.domain("learning_rate")
        assert isinstance(lr, LogUniform) and (lr.lo, lr.hi) == (1e-5, 1e-2)
        wd = space.domain("weight_decay")
        assert (wd.lo, wd.hi) == (1e-6, 1e-3)
        assert space.domain("batch_size") == Categorical((1, 2, 4))
        assert space.domain("base_channels") == Categorical((8, 16, 32, 64))


def test_aux_bce_support_is_unet_variants_only():
    flags = {c.name: c.supports_aux_bce for c in list_models()}
    assert flags == {name: name in ("UNet", "ResUNet") for name in flags}


def test_saturation_space_appends_bce_weight():
    for card in list_models():
        sat = qoi_search_space(card, "saturation")
        lam = sat.domain(LAMBDA_BCE_PARAM)
        assert isinstance(lam, LogUniform) and (lam.lo, lam.hi) == (1e-4, 0.1)
        assert qoi_search_space(card, "pressure") == card.search_space


def test_manifest_is_serializable_and_complete():
    import json
    manifest = zoo_manifest()
    assert manifest["format"] == "surroflow-zoo/v1"
    assert {m["name"] for m in manifest["models"]} == FAMILIES
    json.dumps(manifest)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_output_shape_2d(name):
    card = get_card(name)
    shape = ModelShape((8, 8), n_timesteps=3)
    torch.manual_seed(0)
    model = build_model(card, _minimal_hp(card), shape)
    with torch.no_grad():
        out = model(torch.randn(2, 1, 8, 8))
    assert out.shape == (2, 3, 8, 8)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_output_shape_3d(name):
    card = get_card(name)
    shape = ModelShape((8, 8, 8), n_timesteps=2)
    torch.manual_seed(0)
    model = build_model(card, _minimal_hp(card), shape)
    with torch.no_grad():
        out = model(torch.randn(1, 1, 8, 8, 8))
    assert out.shape == (1, 2, 8, 8, 8)


def test_builder_rejects_bad_configs():
    card = get_card("ResUNet")
    shape = ModelShape((8, 8), 2)
    with pytest.raises(ConfigurationError):
        build_model(card, {"base_channels": 7}, shape)
    with pytest.raises(ConfigurationError):
        build_model(card, {"dropout": 0.5}, shape)
    with pytest.raises(ConfigurationError):
        build_model(card, {"base_channels": 8}, ModelShape((6, 8), 2))


def test_builder_ignores_trainer_side_params():
    card = get_card("FNO")
    hp = {"base_channels": 8, "learning_rate": 1e-3, "weight_decay": 1e-5,
          "batch_size": 2, LAMBDA_BCE_PARAM: 0.01}
    model = build_model(card, hp, ModelShape((8, 8), 2))
    assert isinstance(model, torch.nn.Module)


def test_parameter_count_grows_with_base_channels():
    for name in sorted(FAMILIES):
        card = get_card(name)
        counts = []
        for bc in (8, 16):
            hp = _minimal_hp(card)
            hp["base_channels"] = bc
            model = build_model(card, hp, ModelShape((8, 8), 2))
            counts.append(sum(p.numel() for p in model.parameters()))
        assert counts[0] < counts[1], name


def _spectral_reference(module, x):
    """Recompute the spectral layer with element-wise frequency arithmetic.

    For every retained rfft frequency the corner block and in-block index
    are derived from the frequency value itself (k < m keeps index k,
    k >= n-m is the negative corner at index k-(n-m)); channel mixing is a
    plain matrix product per frequency. No slicing shared with the layer.
    """
    axes = tuple(range(2, x.ndim))
    xf = np.fft.rfftn(x, axes=axes)
    m = module.modes
    out = np.zeros((x.shape[0], module.cout) + xf.shape[2:], dtype=complex)
    corners = [w.detach().double().numpy() for w in module.weights]
    corners = [w[..., 0] + 1j * w[..., 1] for w in corners]
    for idx in np.ndindex(*xf.shape[2:]):
        if idx[-1] >= m[-1]:
            continue
        bits, widx, keep = 0, [], True
        for axis, k in enumerate(idx[:-1]):
            n_ax = xf.shape[2 + axis]
            if k < m[axis]:
                widx.append(k)
            elif k >= n_ax - m[axis]:
                bits |= 1 << axis
                widx.append(k - (n_ax - m[axis]))
            else:
                keep = False
                break
        if not keep:
            continue
        w = corners[bits][(slice(None), slice(None)) + tuple(widx) + (idx[-1],)]
        for b in range(x.shape[0]):
            out[(b, slice(None)) + idx] = xf[(b, slice(None)) + idx] @ w
    return np.fft.irfftn(out, s=x.shape[2:], axes=axes)


def test_spectral_conv_matches_reference_2d():
    torch.manual_seed(7)
    layer = SpectralConv(2, 3, modes=(3, 2)).double()
    x = np.random.default_rng(7).normal(size=(2, 2, 12, 10))
    with torch.no_grad():
        got = layer(torch.from_numpy(x)).numpy()
    want = _spectral_reference(layer, x)
    assert np.max(np.abs(got - want)) < 1e-12


def test_spectral_conv_matches_reference_3d():
    torch.manual_seed(8)
    layer = SpectralConv(2, 2, modes=(2, 2, 2)).double()
    x = np.random.default_rng(8).normal(size=(1, 2, 8, 6, 4))
    with torch.no_grad():
        got = layer(torch.from_numpy(x)).numpy()
    want = _spectral_reference(layer, x)
    assert np.max(np.abs(got - want)) < 1e-12


def test_spectral_conv_rejects_undersized_grid():
    layer = SpectralConv(1, 1, modes=(4, 4))
    with pytest.raises(ConfigurationError):
        layer(torch.zeros(1, 1, 7, 8))


def test_memory_estimate_accounting():
    card = get_card("ResUNet")
    shape = ModelShape((8, 8), 2)
    hp = _minimal_hp(card)
    est = estimate_memory(card, hp, shape, batch_size=2,
                          budget_bytes=8 * 1024 ** 3)
    assert est.feasible and est.reason is None
    assert est.param_count > 0 and est.activation_bytes > 0
    assert est.total_bytes == 16 * est.param_count + 2 * 2 * est.activation_bytes
    # Larger batches only scale the activation term.
    est4 = estimate_memory(card, hp, shape, batch_size=4,
                           budget_bytes=8 * 1024 ** 3)
    assert est4.total_bytes - est.total_bytes == 2 * 2 * est.activation_bytes


def test_memory_estimate_is_deterministic():
    card = get_card("UFNO")
    shape = ModelShape((8, 8), 2)
    a = estimate_memory(card, {"base_channels": 16}, shape, 1, 8 * 1024 ** 3)
    b = estimate_memory(card, {"base_channels": 16}, shape, 1, 8 * 1024 ** 3)
    assert a == b


def test_memory_estimate_infeasible_and_failed():
    card = get_card("ResUNet")
    shape = ModelShape((8, 8), 2)
    tight = estimate_memory(card, _minimal_hp(card), shape, 1, budget_bytes=1000)
    assert not tight.feasible and "budget" in tight.reason
    broken = estimate_memory(card, {"base_channels": 9}, shape, 1, 8 * 1024 ** 3)
    assert not broken.feasible and broken.reason.startswith("construction failed")
