"""Deterministic decision rules standing in for a language-model reasoner.

Every stage takes a context dict and returns a decision document with a
``rationale`` string, so the audit trail reads the same regardless of
backend. Rankings come from fixed preference orders: sparse targets put the
families with an auxiliary presence loss first, smooth targets favor
residual multi-scale and spectral families; memory-infeasible or
already-tried cards are dropped to the back or removed.
"""

from typing import Dict, List

from surroflow.errors import ConfigurationError

# Most-voxels-zero targets: presence-aware heads first, then spectral models
# with a local path, recurrent rollouts last.
SPARSE_ORDER = ("ResUNet", "UNet", "UFNO", "FNO", "EDConvLSTM",
                "RecurrentRUNet", "CNNTransformer", "UDeepONet")
# Smooth dense targets: residual multi-scale first, then spectral operators
# whose global mixing suits elliptic fields; recurrent and attention stacks
# cost far more per step without helping a smooth monotone evolution.
SMOOTH_ORDER = ("ResUNet", "UFNO", "FNO", "UNet", "EDConvLSTM",
                "RecurrentRUNet", "CNNTransformer", "UDeepONet")


def _ranking(context: Dict) -> Dict:
    sparse = bool(context["sparse"])
    known: List[str] = list(context["cards"])
    exclude = set(context.get("exclude", ()))
    order = SPARSE_ORDER if sparse else SMOOTH_ORDER
    ranking = [name for name in order if name in known and name not in exclude]
    ranking += [name for name in known if name not in ranking and name not in exclude]
    kind = "sparse (mostly near-zero voxels)" if sparse else "smooth dense field"
    rationale = (
        f"{context.get('qoi', 'target')} profiles as a {kind}; "
        + ("presence-aware losses matter most, so families with the auxiliary "
           "mask objective rank first"
           if sparse else
           "residual multi-scale reconstruction ranks first, spectral global "
           "mixing second")
        + (f"; excluded: {sorted(exclude)}" if exclude else ""))
    return {"ranking": ranking, "rationale": rationale}


def _switch_ranking(context: Dict) -> Dict:
    doc = _ranking(context)
    history = context.get("performance") or {}
    if history:
        tried = ", ".join(
            f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
            for k, v in sorted(history.items()))
        doc["rationale"] += f"; prior round quality: {tried}"
    return doc


def _preprocessing(context: Dict) -> Dict:
    stats = context["pressure_stats"]
    return {
        "decision": {"normalize_pressure": True, "saturation_passthrough": True},
        "rationale": (
            f"pressure spans [{stats['min'] / 1e5:.1f}, {stats['max'] / 1e5:.1f}] bar, "
            "so it is rescaled to bar and standardized on train-split moments; "
            "saturation already lies in [0, 1]"),
    }


def _diagnosis_narration(context: Dict) -> Dict:
    d = context["diagnosis"]
    signals = d.get("signals", {})
    evidence = ", ".join(f"{k}={v}" for k, v in sorted(signals.items())) \
        or "no adverse telemetry"
    text = f"diagnosed {d['state']} ({evidence})"
    action = context.get("action")
    if action:
        text += f"; action: {action['kind']} because {action['reason']}"
    return {"rationale": text}


_STAGES = {
    "ranking": _ranking,
    "switch_ranking": _switch_ranking,
    "preprocessing": _preprocessing,
    "diagnosis_narration": _diagnosis_narration,
}


def scripted_reason(stage: str, context: Dict) -> Dict:
    """Pure function of (stage, context); raises on unknown stages."""
    if stage not in _STAGES:
        raise ConfigurationError(
            f"scripted reasoner has no stage {stage!r}; known: {sorted(_STAGES)}")
    return _STAGES[stage](context)
