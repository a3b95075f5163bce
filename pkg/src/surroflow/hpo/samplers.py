"""Random and tree-structured Parzen estimator (TPE) suggestion.

TPE here is the classic independent-factor form: split observed trials into
a good fraction ("below") and the rest ("above") by objective value, fit a
Parzen mixture per parameter on each side, draw candidates from the good
densities and keep the candidate with the best l(x)/g(x) ratio. Pruned
trials participate with their last reported value; failed trials are
excluded from the fit (they still consume budget upstream).
"""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from surroflow.hpo.space import (
    Categorical,
    Domain,
    SearchSpace,
    bounds,
    transform,
    untransform,
)

N_STARTUP = 5
GAMMA_FRACTION = 0.25
GAMMA_CAP = 25
N_CANDIDATES = 24
_BW_FLOOR_FRAC = 0.05
_LOG_EPS = 1e-300


def sample_domain(domain: Domain, rng: np.random.Generator):
    if isinstance(domain, Categorical):
        return domain.values[int(rng.integers(len(domain.values)))]
    lo, hi = bounds(domain)
    return untransform(domain, float(rng.uniform(lo, hi)))


def random_suggest(space: SearchSpace, rng: np.random.Generator) -> Dict:
    """Independent draw from every (cap-adjusted) domain."""
    return {name: sample_domain(dom, rng) for name, dom in space.effective()}


class _NumericParzen:
    """Gaussian mixture over observations plus a wide domain prior."""

    def __init__(self, domain: Domain, observations: Sequence[float]):
        self.domain = domain
        lo, hi = bounds(domain)
        self.lo, self.hi = lo, hi
        width = hi - lo
        obs = np.array([transform(domain, v) for v in observations])
        bw = float(np.clip(obs.std(), _BW_FLOOR_FRAC * width, width)) if obs.size \
            else width
        self.means = np.append(obs, 0.5 * (lo + hi))
        self.bws = np.append(np.full(obs.size, bw), width)

    def sample(self, rng: np.random.Generator):
        i = int(rng.integers(self.means.size))
        x = rng.normal(self.means[i], self.bws[i])
        return untransform(self.domain, float(np.clip(x, self.lo, self.hi)))

    def log_pdf(self, value) -> float:
        x = transform(self.domain, value)
        z = (x - self.means) / self.bws
        comps = np.exp(-0.5 * z * z) / (self.bws * math.sqrt(2 * math.pi))
        return math.log(max(float(comps.mean()), _LOG_EPS))


class _CategoricalParzen:
    """Add-one smoothed frequencies over the category values."""

    def __init__(self, domain: Categorical, observations: Sequence):
        self.values = domain.values
        counts = np.array([sum(1 for o in observations if o == v) for v in self.values],
                          dtype=float)
        self.probs = (counts + 1.0) / (counts.sum() + len(self.values))

    def sample(self, rng: np.random.Generator):
        return self.values[int(rng.choice(len(self.values), p=self.probs))]

    def log_pdf(self, value) -> float:
        return math.log(self.probs[self.values.index(value)])


def _parzen(domain: Domain, observations: Sequence):
    if isinstance(domain, Categorical):
        return _CategoricalParzen(domain, observations)
    return _NumericParzen(domain, observations)


def tpe_suggest(space: SearchSpace, observed: Sequence[Tuple[Dict, float]],
                rng: np.random.Generator, n_startup: int = N_STARTUP,
                n_candidates: int = N_CANDIDATES) -> Dict:
    """Suggest parameters given ``(params, objective)`` pairs (lower better).

    Falls back to a pure random draw until ``n_startup`` observations exist.
    """
    if len(observed) < n_startup:
        return random_suggest(space, rng)

    order = sorted(range(len(observed)), key=lambda i: observed[i][1])
    n_below = min(math.ceil(GAMMA_FRACTION * len(observed)), GAMMA_CAP)
    below = [observed[i][0] for i in order[:n_below]]
    above = [observed[i][0] for i in order[n_below:]]

    domains = space.effective()
    good = {name: _parzen(dom, [p[name] for p in below if name in p])
            for name, dom in domains}
    bad = {name: _parzen(dom, [p[name] for p in above if name in p])
           for name, dom in domains}

    best_score, best = -math.inf, None
    for _ in range(n_candidates):
        cand = {name: good[name].sample(rng) for name, _ in domains}
        score = sum(good[n].log_pdf(v) - bad[n].log_pdf(v) for n, v in cand.items())
        if score > best_score:
            best_score, best = score, cand
    return best
