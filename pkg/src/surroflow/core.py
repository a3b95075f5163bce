"""Shared run context, audit log, and task targets."""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from surroflow.errors import ConfigurationError

STAGES = ("data_analysis", "model_selection", "hpo", "training",
          "self_correction", "reporting")

QOIS = ("pressure", "saturation")

DEFAULT_TARGET_THRESHOLD = 0.95


@dataclass(frozen=True)
class TargetSpec:
    """Quality goal for one output quantity.

    ``threshold`` mode is met by strictly exceeding the value; ``maximize``
    mode is never met, the loop runs until its budgets are exhausted.
    """

    mode: str
    threshold: Optional[float] = None
    metric: str = "r2"

    def __post_init__(self):
        if self.mode not in ("threshold", "maximize"):
            raise ConfigurationError(f"unknown target mode {self.mode!r}")
        if self.mode == "threshold" and self.threshold is None:
            raise ConfigurationError("threshold mode needs a threshold value")

    def to_dict(self) -> Dict:
        return {"mode": self.mode, "threshold": self.threshold, "metric": self.metric}

    @staticmethod
    def from_dict(d: Dict) -> "TargetSpec":
        return TargetSpec(d["mode"], d.get("threshold"), d.get("metric", "r2"))


@dataclass(frozen=True)
class TaskTargets:
    per_qoi: Dict[str, TargetSpec]
    source: str = "default"
    instruction: Optional[str] = None

    def to_dict(self) -> Dict:
        return {"per_qoi": {q: t.to_dict() for q, t in self.per_qoi.items()},
                "source": self.source, "instruction": self.instruction}

    @staticmethod
    def from_dict(d: Dict) -> "TaskTargets":
        return TaskTargets({q: TargetSpec.from_dict(t) for q, t in d["per_qoi"].items()},
                           d.get("source", "default"), d.get("instruction"))


def default_targets(qois: Sequence[str] = QOIS) -> TaskTargets:
    return TaskTargets({q: TargetSpec("threshold", DEFAULT_TARGET_THRESHOLD)
                        for q in qois})


def resolve_targets(instruction: Optional[str] = None,
                    parsed: Optional[TaskTargets] = None,
                    qois: Sequence[str] = QOIS) -> TaskTargets:
    """Already-parsed targets win; otherwise parse the instruction text;
    otherwise every quantity defaults to the 0.95 threshold."""
    if parsed is not None:
        return parsed
    if instruction:
        from surroflow.agents.instructions import parse_instruction
        return parse_instruction(instruction, qois)
    return default_targets(qois)


@dataclass
class AuditEvent:
    seq: int
    stage: str
    actor: str
    action: str
    payload: Dict = field(default_factory=dict)
    qoi: Optional[str] = None
    wall_time: float = 0.0

    def to_dict(self) -> Dict:
        return {"seq": self.seq, "stage": self.stage, "actor": self.actor,
                "action": self.action, "payload": self.payload, "qoi": self.qoi,
                "wall_time": self.wall_time}

    @staticmethod
    def from_dict(d: Dict) -> "AuditEvent":
        return AuditEvent(d["seq"], d["stage"], d["actor"], d["action"],
                          d.get("payload", {}), d.get("qoi"), d.get("wall_time", 0.0))


@dataclass
class SharedContext:
    """Blackboard shared by the pipeline stages; persisted as context.json."""

    run_id: str
    seed: int
    qois: List[str]
    config: Dict = field(default_factory=dict)
    dataset: Dict = field(default_factory=dict)
    environment: Dict = field(default_factory=dict)
    targets: Optional[TaskTargets] = None
    profile: Optional[Dict] = None
    preprocessing: Optional[Dict] = None
    selections: Dict[str, List[Dict]] = field(default_factory=dict)
    rounds: Dict[str, List[Dict]] = field(default_factory=dict)
    global_best: Dict[str, Dict] = field(default_factory=dict)
    deployed: Dict[str, Dict] = field(default_factory=dict)
    audit: List[AuditEvent] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "qois": list(self.qois),
            "config": self.config,
            "dataset": self.dataset,
            "environment": self.environment,
            "targets": None if self.targets is None else self.targets.to_dict(),
            "profile": self.profile,
            "preprocessing": self.preprocessing,
            "selections": self.selections,
            "rounds": self.rounds,
            "global_best": self.global_best,
            "deployed": self.deployed,
            "audit": [e.to_dict() for e in self.audit],
        }

    @staticmethod
    def from_dict(d: Dict) -> "SharedContext":
        targets = d.get("targets")
        return SharedContext(
            run_id=d["run_id"], seed=d["seed"], qois=list(d["qois"]),
            config=d.get("config", {}), dataset=d.get("dataset", {}),
            environment=d.get("environment", {}),
            targets=None if targets is None else TaskTargets.from_dict(targets),
            profile=d.get("profile"), preprocessing=d.get("preprocessing"),
            selections=d.get("selections", {}), rounds=d.get("rounds", {}),
            global_best=d.get("global_best", {}), deployed=d.get("deployed", {}),
            audit=[AuditEvent.from_dict(e) for e in d.get("audit", [])])

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path: str) -> "SharedContext":
        with open(path) as fh:
            return SharedContext.from_dict(json.load(fh))


def append_audit(ctx: SharedContext, stage: str, actor: str, action: str,
                 payload: Optional[Dict] = None, qoi: Optional[str] = None,
                 wall_time: float = 0.0) -> AuditEvent:
    """Append one event; sequence numbers are dense and start at 0."""
    if stage not in STAGES:
        raise ConfigurationError(f"unknown stage {stage!r}; valid: {STAGES}")
    event = AuditEvent(seq=len(ctx.audit), stage=stage, actor=actor, action=action,
                       payload=payload or {}, qoi=qoi, wall_time=wall_time)
    ctx.audit.append(event)
    return event


def validate_audit(events: Sequence[AuditEvent]) -> None:
    """Raise if sequence numbers are not dense from 0 or a stage is unknown."""
    for i, event in enumerate(events):
        if event.seq != i:
            raise ConfigurationError(f"audit seq {event.seq} at position {i}")
        if event.stage not in STAGES:
            raise ConfigurationError(f"audit event {i} has unknown stage {event.stage!r}")


def strip_wall_times(obj):
    """Deep copy with every timing field removed.

    All wall-clock measurements in run artifacts live in keys named
    ``wall_time`` (or suffixed ``_wall_time``); stripping them must leave two
    same-seed runs byte-identical when serialized.
    """
    if isinstance(obj, dict):
        return {k: strip_wall_times(v) for k, v in obj.items()
                if not (k == "wall_time" or k.endswith("_wall_time"))}
    if isinstance(obj, list):
        return [strip_wall_times(v) for v in obj]
    return obj


_STAGE_CODE = {stage: code for stage, code in zip(STAGES, "dmhtsr")}


def validate_stage_order(events: Sequence[AuditEvent]) -> None:
    """Enforce the pipeline grammar over the audit trail.

    Profiling events come first, then all architecture selections, then one
    or more (hpo, training, self-correction) round groups, then reporting.
    """
    import re

    text = "".join(_STAGE_CODE[e.stage] for e in events)
    if not re.fullmatch(r"d+m+(h+t+s*)+r+", text):
        raise ConfigurationError(f"audit stages out of order: {text}")
