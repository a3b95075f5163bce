"""Search-space definition: named parameters over typed domains."""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple, Union

from surroflow.errors import ConfigurationError

LR_PARAM = "learning_rate"


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError(f"uniform domain needs lo < hi, got [{self.lo}, {self.hi}]")

    def contains(self, value) -> bool:
        return isinstance(value, (int, float)) and self.lo <= value <= self.hi


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ConfigurationError(
                f"log-uniform domain needs 0 < lo < hi, got [{self.lo}, {self.hi}]")

    def contains(self, value) -> bool:
        return isinstance(value, (int, float)) and self.lo <= value <= self.hi


@dataclass(frozen=True)
class IntUniform:
    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigurationError(f"int domain needs lo <= hi, got [{self.lo}, {self.hi}]")

    def contains(self, value) -> bool:
        return isinstance(value, int) and not isinstance(value, bool) \
            and self.lo <= value <= self.hi


@dataclass(frozen=True)
class Categorical:
    values: Tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise ConfigurationError("categorical domain needs at least one value")

    def contains(self, value) -> bool:
        return value in self.values


Domain = Union[Uniform, LogUniform, IntUniform, Categorical]

_TAGS = {"uniform": Uniform, "log_uniform": LogUniform,
         "int_uniform": IntUniform, "categorical": Categorical}


def domain_to_dict(domain: Domain) -> Dict:
    if isinstance(domain, Categorical):
        return {"type": "categorical", "values": list(domain.values)}
    tag = {Uniform: "uniform", LogUniform: "log_uniform", IntUniform: "int_uniform"}
    return {"type": tag[type(domain)], "lo": domain.lo, "hi": domain.hi}


def domain_from_dict(d: Dict) -> Domain:
    kind = d.get("type")
    if kind not in _TAGS:
        raise ConfigurationError(f"unknown domain type {kind!r}")
    if kind == "categorical":
        return Categorical(tuple(d["values"]))
    return _TAGS[kind](d["lo"], d["hi"])


@dataclass(frozen=True)
class SearchSpace:
    """Ordered parameter domains plus trainer-side stability constraints."""

    params: Tuple[Tuple[str, Domain], ...]
    lr_upper_bound: Optional[float] = None
    grad_clip: float = 1.0

    @staticmethod
    def of(params: Dict[str, Domain], lr_upper_bound: Optional[float] = None,
           grad_clip: float = 1.0) -> "SearchSpace":
        return SearchSpace(tuple(params.items()), lr_upper_bound, grad_clip)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.params)

    def domain(self, name: str) -> Domain:
        for key, dom in self.params:
            if key == name:
                return dom
        raise KeyError(name)

    def effective(self) -> Tuple[Tuple[str, Domain], ...]:
        """Domains with the learning-rate cap folded in."""
        if self.lr_upper_bound is None:
            return self.params
        out = []
        for name, dom in self.params:
            if name == LR_PARAM and isinstance(dom, (Uniform, LogUniform)):
                dom = replace(dom, hi=min(dom.hi, self.lr_upper_bound))
            out.append((name, dom))
        return tuple(out)

    def contains(self, values: Dict) -> bool:
        effective = dict(self.effective())
        if set(values) != set(effective):
            return False
        return all(effective[name].contains(v) for name, v in values.items())

    def to_dict(self) -> Dict:
        return {
            "params": [{"name": n, "domain": domain_to_dict(d)} for n, d in self.params],
            "lr_upper_bound": self.lr_upper_bound,
            "grad_clip": self.grad_clip,
        }

    @staticmethod
    def from_dict(d: Dict) -> "SearchSpace":
        params = tuple((p["name"], domain_from_dict(p["domain"])) for p in d["params"])
        return SearchSpace(params, d.get("lr_upper_bound"), d.get("grad_clip", 1.0))


def tighten_space(space: SearchSpace, lr_cap: float, grad_clip: float) -> SearchSpace:
    """Stability-constrained copy: cap the learning rate, shrink the clip.

    Idempotent: re-applying the same caps returns an equal space. The clip
    only ever shrinks; a cap at or below the learning-rate domain floor is a
    configuration error.
    """
    if lr_cap <= 0 or grad_clip <= 0:
        raise ConfigurationError("lr cap and grad clip must be positive")
    params = []
    for name, dom in space.params:
        if name == LR_PARAM:
            if not isinstance(dom, (Uniform, LogUniform)):
                raise ConfigurationError(f"{LR_PARAM} domain must be continuous")
            if lr_cap <= dom.lo:
                raise ConfigurationError(
                    f"lr cap {lr_cap:g} is at or below the domain floor {dom.lo:g}")
            dom = replace(dom, hi=min(dom.hi, lr_cap))
        params.append((name, dom))
    bound = lr_cap if space.lr_upper_bound is None else min(space.lr_upper_bound, lr_cap)
    return SearchSpace(tuple(params), bound, min(space.grad_clip, grad_clip))


def transform(domain: Domain, value: float) -> float:
    """Map a numeric domain value into the (possibly log) sampling scale."""
    return math.log(value) if isinstance(domain, LogUniform) else float(value)


def untransform(domain: Domain, value: float):
    if isinstance(domain, LogUniform):
        # exp(log(lo)) can land one ulp outside the domain; clamp back.
        return min(max(math.exp(value), domain.lo), domain.hi)
    if isinstance(domain, IntUniform):
        return int(min(max(round(value), domain.lo), domain.hi))
    return min(max(float(value), domain.lo), domain.hi)


def bounds(domain: Domain) -> Tuple[float, float]:
    return transform(domain, domain.lo), transform(domain, domain.hi)
