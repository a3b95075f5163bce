"""Search space, samplers, pruning rule, and the budgeted study driver."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surroflow.errors import ConfigurationError
from surroflow.hpo.pruner import MedianPrunerConfig, median_prune_decision
from surroflow.hpo.samplers import random_suggest, tpe_suggest
from surroflow.hpo.space import (
    Categorical,
    IntUniform,
    LogUniform,
    SearchSpace,
    Uniform,
    tighten_space,
)
from surroflow.hpo.study import (
    HPOBudget,
    StudyRecord,
    TrialFailed,
    TrialPruned,
    TrialState,
    run_hpo,
)


def _space(lr_cap=None):
    return SearchSpace.of({
        "learning_rate": LogUniform(1e-5, 1e-2),
        "weight_decay": LogUniform(1e-6, 1e-3),
        "batch_size": Categorical((1, 2, 4)),
        "depth": IntUniform(1, 3),
        "mix": Uniform(0.0, 1.0),
    }, lr_upper_bound=lr_cap)


# ---------------------------------------------------------------- domains

def test_domain_membership():
    assert Uniform(0, 1).contains(0.5) and not Uniform(0, 1).contains(1.5)
    assert LogUniform(1e-5, 1e-2).contains(1e-3)
    assert not LogUniform(1e-5, 1e-2).contains(0.1)
    assert IntUniform(1, 3).contains(2) and not IntUniform(1, 3).contains(2.0)
    assert not IntUniform(0, 1).contains(True)
    assert Categorical((1, 2, 4)).contains(4) and not Categorical((1, 2)).contains(3)


def test_domain_validation():
    with pytest.raises(ConfigurationError):
        Uniform(1.0, 1.0)
    with pytest.raises(ConfigurationError):
        LogUniform(0.0, 1.0)
    with pytest.raises(ConfigurationError):
        IntUniform(3, 1)
    with pytest.raises(ConfigurationError):
        Categorical(())


def test_space_round_trips_through_dict():
    space = _space(lr_cap=5e-4)
    assert SearchSpace.from_dict(space.to_dict()) == space


def test_effective_folds_lr_cap():
    space = _space(lr_cap=5e-4)
    assert dict(space.effective())["learning_rate"].hi == 5e-4
    # Other domains untouched.
    assert dict(space.effective())["weight_decay"].hi == 1e-3


def test_contains_requires_exact_name_set():
    space = _space()
    good = {"learning_rate": 1e-4, "weight_decay": 1e-5, "batch_size": 2,
            "depth": 2, "mix": 0.5}
    assert space.contains(good)
    assert not space.contains({**good, "extra": 1})
    assert not space.contains({k: v for k, v in good.items() if k != "mix"})
    assert not space.contains({**good, "learning_rate": 1.0})


def test_tighten_space_caps_and_idempotent():
    space = _space()
    tight = tighten_space(space, lr_cap=5e-4, grad_clip=0.25)
    assert tight.lr_upper_bound == 5e-4 and tight.grad_clip == 0.25
    assert dict(tight.params)["learning_rate"].hi == 5e-4
    assert tighten_space(tight, 5e-4, 0.25) == tight
    # The clip never relaxes.
    assert tighten_space(tight, 5e-4, 1.0).grad_clip == 0.25
    with pytest.raises(ConfigurationError):
        tighten_space(space, lr_cap=1e-5, grad_clip=0.25)
    with pytest.raises(ConfigurationError):
        tighten_space(space, lr_cap=-1.0, grad_clip=0.25)


# ---------------------------------------------------------------- samplers

@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_random_suggest_stays_in_domain(seed):
    space = _space(lr_cap=5e-4)
    params = random_suggest(space, np.random.default_rng(seed))
    assert space.contains(params)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_tpe_suggest_stays_in_domain(seed):
    space = _space()
    rng = np.random.default_rng(seed)
    observed = [(random_suggest(space, rng), float(v))
                for v in rng.normal(size=12)]
    params = tpe_suggest(space, observed, rng)
    assert space.contains(params)


def test_tpe_survives_degenerate_identical_history():
    # Every observation shares one parameter vector and one value; the
    # per-parameter fits collapse to zero spread and must still sample
    # inside the domain.
    space = _space()
    fixed = {"learning_rate": 1e-4, "weight_decay": 1e-5, "batch_size": 2,
             "depth": 2, "mix": 0.5}
    observed = [(dict(fixed), 0.7) for _ in range(10)]
    for seed in range(20):
        params = tpe_suggest(space, observed, np.random.default_rng(seed))
        assert space.contains(params)


def test_tpe_is_deterministic_given_rng_state():
    space = _space()
    rng = np.random.default_rng(0)
    observed = [(random_suggest(space, rng), float(i)) for i in range(8)]
    a = tpe_suggest(space, observed, np.random.default_rng(42))
    b = tpe_suggest(space, observed, np.random.default_rng(42))
    assert a == b


def test_tpe_random_fallback_before_startup():
    space = _space()
    observed = [(random_suggest(space, np.random.default_rng(1)), 0.5)]
    a = tpe_suggest(space, observed, np.random.default_rng(9))
    b = random_suggest(space, np.random.default_rng(9))
    assert a == b


# ------------------------------------------------------------------ pruner

def test_pruner_pinned_decisions():
    cfg = MedianPrunerConfig(n_warmup=1, n_min_trials=2)
    prior = [{0: 1.0, 1: 0.8}, {0: 0.6, 1: 0.5}, {0: 0.9}]
    # Warmup step never prunes, however bad the value.
    assert not median_prune_decision(0, 99.0, prior, cfg)
    # Step 1 has two priors (0.8, 0.5), median 0.65.
    assert median_prune_decision(1, 0.66, prior, cfg)
    assert not median_prune_decision(1, 0.65, prior, cfg)  # tie survives
    assert not median_prune_decision(1, 0.64, prior, cfg)
    # Step 2 has no priors at all.
    assert not median_prune_decision(2, 99.0, prior, cfg)


def test_pruner_needs_min_trials_at_step():
    cfg = MedianPrunerConfig(n_warmup=1, n_min_trials=3)
    prior = [{1: 0.5}, {1: 0.6}]
    assert not median_prune_decision(1, 10.0, prior, cfg)
    prior.append({1: 0.7})
    assert median_prune_decision(1, 10.0, prior, cfg)


# ------------------------------------------------------------------- study

def _quad_objective(params, report, trial_seed):
    # Smooth objective with a known minimum at lr=1e-3, mix=0.25.
    val = (math.log10(params["learning_rate"]) + 3) ** 2 \
        + (params["mix"] - 0.25) ** 2
    for step in range(3):
        if report(step, val + (2 - step) * 0.1):
            raise TrialPruned()
    return val


def test_run_hpo_completes_and_is_deterministic():
    space = _space()
    budget = HPOBudget(n_trials=8, epochs_per_trial=3)
    a = run_hpo(_quad_objective, space, budget, seed=5, qoi="pressure")
    b = run_hpo(_quad_objective, space, budget, seed=5, qoi="pressure")
    assert a.to_dict() == b.to_dict()
    assert len(a.trials) == 8
    assert a.best_trial is not None
    assert a.best_trial.final_value == min(
        t.final_value for t in a.trials if t.state == TrialState.COMPLETED)
    # A different seed explores differently.
    c = run_hpo(_quad_objective, space, budget, seed=6, qoi="pressure")
    assert c.to_dict() != a.to_dict()


def test_run_hpo_prunes_bad_trials():
    # First trial sets the bar; everything reporting above its median gets
    # cut before finishing.
    calls = []

    def objective(params, report, trial_seed):
        base = len(calls) * 1.0  # monotonically worse trials
        calls.append(base)
        for step in range(4):
            if report(step, base):
                raise TrialPruned()
        return base

    study = run_hpo(objective, _space(), HPOBudget(n_trials=6), seed=0)
    counts = study.counts()
    assert counts["pruned"] > 0
    assert counts["completed"] + counts["pruned"] + counts["failed"] == 6
    pruned = [t for t in study.trials if t.state == TrialState.PRUNED]
    for t in pruned:
        assert t.final_value is None
        assert t.objective == t.intermediates[max(t.intermediates)]


def test_run_hpo_failed_trials_consume_budget():
    def objective(params, report, trial_seed):
        raise TrialFailed("synthetic fault")

    study = run_hpo(objective, _space(), HPOBudget(n_trials=4), seed=1)
    assert study.counts() == {"completed": 0, "pruned": 0, "failed": 4}
    assert study.best_trial is None
    for t in study.trials:
        assert t.error == "synthetic fault" and t.objective is None


def test_run_hpo_non_finite_final_value_fails_trial():
    def objective(params, report, trial_seed):
        return float("nan")

    study = run_hpo(objective, _space(), HPOBudget(n_trials=3), seed=2)
    assert study.counts()["failed"] == 3
    assert study.best_trial is None
    assert study.to_dict()["best_trial_id"] is None


def test_trial_seeds_are_distinct_and_reproducible():
    seen = {}

    def objective(params, report, trial_seed):
        seen[len(seen)] = trial_seed
        return 1.0

    run_hpo(objective, _space(), HPOBudget(n_trials=5), seed=3)
    first = dict(seen)
    seen.clear()
    run_hpo(objective, _space(), HPOBudget(n_trials=5), seed=3)
    assert seen == first
    assert len(set(first.values())) == 5


def test_study_record_save_load_round_trip(tmp_path):
    study = run_hpo(_quad_objective, _space(), HPOBudget(n_trials=6), seed=4,
                    qoi="saturation", round_index=2)
    path = str(tmp_path / "study.json")
    study.save(path)
    again = StudyRecord.load(path)
    assert again.to_dict() == study.to_dict()
    assert again.space == study.space
