"""Model registry: cards describing each family, builders, memory probing."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import torch.nn as nn

from surroflow.errors import ConfigurationError
from surroflow.hpo.space import Categorical, LogUniform, IntUniform, SearchSpace
from surroflow.zoo.attention import CNNTransformer
from surroflow.zoo.operator import FNO, UDeepONet, UFNO
from surroflow.zoo.recurrent import EDConvLSTM, RecurrentRUNet
from surroflow.zoo.unet import ResUNet, UNet

LAMBDA_BCE_PARAM = "lambda_bce"
_TRAINER_PARAMS = ("learning_rate", "weight_decay", "batch_size", LAMBDA_BCE_PARAM)
MIN_GRID_DIM = 8


@dataclass(frozen=True)
class ModelShape:
    """Spatial extent (2 or 3 dims) and the number of output timesteps."""

    spatial: Tuple[int, ...]
    n_timesteps: int

    def __post_init__(self):
        if len(self.spatial) not in (2, 3):
            raise ConfigurationError("spatial must have 2 or 3 dims")
        if self.n_timesteps < 1:
            raise ConfigurationError("n_timesteps must be >= 1")

    @staticmethod
    def from_grid(grid, n_timesteps: int) -> "ModelShape":
        spatial = (grid.nx, grid.ny) if grid.nz == 1 else (grid.nx, grid.ny, grid.nz)
        return ModelShape(spatial, n_timesteps)

    @property
    def ndim(self) -> int:
        return len(self.spatial)


@dataclass(frozen=True)
class ModelCard:
    name: str
    description: str
    temporal_mechanism: str
    supports_aux_bce: bool
    constructor_params: Tuple[str, ...]
    search_space: SearchSpace


def _base_domains(extra: Optional[Dict] = None, norm: bool = True) -> SearchSpace:
    params = {
        "learning_rate": LogUniform(1e-5, 1e-2),
        "weight_decay": LogUniform(1e-6, 1e-3),
        "batch_size": Categorical((1, 2, 4)),
        "base_channels": Categorical((8, 16, 32, 64)),
    }
    if norm:
        params["norm"] = Categorical(("group", "instance"))
    params.update(extra or {})
    return SearchSpace.of(params)


_CARDS: Tuple[ModelCard, ...] = (
    ModelCard(
        "UNet",
        "Plain U-Net; timesteps emitted as output channels. Multi-scale local "
        "features, cheap and robust on sparse front-like targets.",
        "channels", True, ("base_channels", "norm"), _base_domains()),
    ModelCard(
        "ResUNet",
        "Residual U-Net; timesteps as output channels. Residual blocks ease "
        "optimization and sharpen multi-scale reconstruction.",
        "channels", True, ("base_channels", "norm"), _base_domains()),
    ModelCard(
        "RecurrentRUNet",
        "Residual U-Net with a ConvLSTM bottleneck unrolled over timesteps; "
        "strong when the target evolves smoothly step to step.",
        "recurrent", False, ("base_channels", "norm"), _base_domains()),
    ModelCard(
        "EDConvLSTM",
        "Strided-conv encoder, ConvLSTM propagator with channel/spatial "
        "attention, shared deconv decoder per step.",
        "recurrent", False, ("base_channels", "norm"), _base_domains()),
    ModelCard(
        "CNNTransformer",
        "CNN encoder pooled to a latent; causal self-attention over timestep "
        "tokens modulates a shared decoder.",
        "attention", False,
        ("base_channels", "norm", "transformer_layers", "transformer_heads"),
        _base_domains({"transformer_layers": IntUniform(1, 3),
                       "transformer_heads": Categorical((2, 4))})),
    ModelCard(
        "UDeepONet",
        "Branch-trunk operator: U-Net branch over the input field, MLP trunk "
        "over the timestep index, combined by inner product.",
        "trunk", False, ("base_channels",), _base_domains(norm=False)),
    ModelCard(
        "FNO",
        "Fourier neural operator: spectral convolutions with 1x1 bypasses; "
        "global receptive field, favors smooth fields.",
        "channels", False, ("base_channels",), _base_domains(norm=False)),
    ModelCard(
        "UFNO",
        "FNO whose later blocks add a parallel mini U-Net path for local "
        "detail on top of the spectral mixing.",
        "channels", False, ("base_channels",), _base_domains(norm=False)),
)

_BY_NAME = {card.name: card for card in _CARDS}


def list_models() -> List[ModelCard]:
    return list(_CARDS)


def get_card(name: str) -> ModelCard:
    if name not in _BY_NAME:
        raise ConfigurationError(
            f"unknown model {name!r}; known: {sorted(_BY_NAME)}")
    return _BY_NAME[name]


def qoi_search_space(card: ModelCard, qoi: str) -> SearchSpace:
    """The card's space, with the BCE weight appended for saturation runs."""
    if qoi != "saturation":
        return card.search_space
    params = dict(card.search_space.params)
    params[LAMBDA_BCE_PARAM] = LogUniform(1e-4, 0.1)
    return SearchSpace.of(params, card.search_space.lr_upper_bound,
                          card.search_space.grad_clip)


def _fno_modes(spatial: Sequence[int]) -> Tuple[int, ...]:
    return tuple(min(8, n // 2) for n in spatial)


def build_model(card: ModelCard, hp: Dict, shape: ModelShape) -> nn.Module:
    """Construct the family named by ``card`` for the given shape.

    ``hp`` entries must lie inside the card's declared domains; trainer-side
    names (learning rate, weight decay, batch size, BCE weight) are ignored
    here. Spatial dims below 8 cannot feed the three downsampling levels.
    """
    if isinstance(card, str):
        card = get_card(card)
    for axis, n in enumerate(shape.spatial):
        if n < MIN_GRID_DIM:
            raise ConfigurationError(
                f"spatial dim {axis} is {n}, below the minimum {MIN_GRID_DIM}")
    domains = dict(card.search_space.params)
    kwargs = {}
    for name, value in hp.items():
        if name in _TRAINER_PARAMS:
            continue
        if name not in domains:
            raise ConfigurationError(f"{card.name} does not take parameter {name!r}")
        if not domains[name].contains(value):
            raise ConfigurationError(
                f"value {value!r} outside the {card.name} domain for {name!r}")
        kwargs[name] = value

    ndim = shape.ndim
    t = shape.n_timesteps
    name = card.name
    if name in ("UNet", "ResUNet"):
        cls = UNet if name == "UNet" else ResUNet
        return cls(out_channels=t, ndim=ndim, **kwargs)
    if name == "RecurrentRUNet":
        return RecurrentRUNet(n_timesteps=t, ndim=ndim, **kwargs)
    if name == "EDConvLSTM":
        return EDConvLSTM(n_timesteps=t, ndim=ndim, **kwargs)
    if name == "CNNTransformer":
        return CNNTransformer(n_timesteps=t, ndim=ndim, **kwargs)
    if name == "UDeepONet":
        return UDeepONet(n_timesteps=t, ndim=ndim, **kwargs)
    if name in ("FNO", "UFNO"):
        cls = FNO if name == "FNO" else UFNO
        return cls(n_timesteps=t, modes=_fno_modes(shape.spatial), ndim=ndim, **kwargs)
    raise ConfigurationError(f"no builder for {name!r}")


def zoo_manifest() -> Dict:
    """Serializable registry dump (written to the run dir, fed to prompts)."""
    return {
        "format": "surroflow-zoo/v1",
        "models": [
            {
                "name": c.name,
                "description": c.description,
                "temporal_mechanism": c.temporal_mechanism,
                "supports_aux_bce": c.supports_aux_bce,
                "constructor_params": list(c.constructor_params),
                "search_space": c.search_space.to_dict(),
            }
            for c in _CARDS
        ],
    }


from surroflow.zoo.memory import MemoryEstimate, estimate_memory  # noqa: E402

__all__ = [
    "ModelShape",
    "ModelCard",
    "list_models",
    "get_card",
    "qoi_search_space",
    "build_model",
    "zoo_manifest",
    "MemoryEstimate",
    "estimate_memory",
    "LAMBDA_BCE_PARAM",
]
