"""Fold the shared context into the final, schema-checked report document."""

import hashlib
import json
import os
from importlib import resources
from typing import Dict, List, Optional

import jsonschema

from surroflow.core import SharedContext, strip_wall_times
from surroflow.errors import ConsolidationError

REPORT_FORMAT = "surroflow-report/v1"

TIMELINE_COLUMNS = ("round", "strategy", "architecture", "r2", "status")


def _schema() -> Dict:
    text = (resources.files("surroflow.report") / "schema.json").read_text()
    return json.loads(text)


def validate_report(report: Dict) -> None:
    try:
        jsonschema.validate(report, _schema())
    except jsonschema.ValidationError as exc:
        raise ConsolidationError(f"report fails schema validation: {exc.message} "
                                 f"at {list(exc.absolute_path)}") from exc


def audit_digest(events: List[Dict]) -> Dict:
    """Stable summary of the audit trail; the hash ignores timing fields."""
    by_stage: Dict[str, int] = {}
    for event in events:
        by_stage[event["stage"]] = by_stage.get(event["stage"], 0) + 1
    canonical = json.dumps(strip_wall_times(events), sort_keys=True,
                           separators=(",", ":"))
    return {"n_events": len(events), "by_stage": by_stage,
            "sha256": hashlib.sha256(canonical.encode()).hexdigest()}


def timeline_from_rounds(rounds: List[Dict]) -> List[Dict]:
    """Project round records onto the report's five timeline columns and
    check that round numbers run contiguously from 1."""
    timeline = []
    for i, record in enumerate(rounds):
        if record.get("round") != i + 1:
            raise ConsolidationError(
                f"timeline rounds must be contiguous from 1; "
                f"position {i} has round {record.get('round')!r}")
        timeline.append({col: record.get(col) for col in TIMELINE_COLUMNS})
    return timeline


def _require(mapping: Dict, keys: List[str], what: str) -> None:
    missing = [k for k in keys if mapping.get(k) in (None, {}, [])]
    if missing:
        raise ConsolidationError(f"cannot consolidate: {what} missing "
                                 + ", ".join(missing))


def consolidate(ctx: SharedContext, run_dir: Optional[str] = None) -> Dict:
    """Build and validate the report from a finished run's context.

    ``run_dir`` enables the artifact check: every deployed checkpoint
    reference must resolve to files on disk.
    """
    _require(ctx.to_dict(),
             ["targets", "profile", "preprocessing", "selections", "rounds"],
             "context fields")

    qois: Dict[str, Dict] = {}
    error_traces: List[Dict] = []
    for qoi in ctx.qois:
        _require({"selection": ctx.selections.get(qoi),
                  "rounds": ctx.rounds.get(qoi)},
                 ["selection", "rounds"], f"{qoi} records")
        rounds = ctx.rounds[qoi]
        deployed = ctx.deployed.get(qoi)
        if deployed is not None and run_dir is not None:
            prefix = os.path.join(run_dir, deployed["checkpoint"]["prefix"])
            if not (os.path.isfile(prefix + ".bin")
                    and os.path.isfile(prefix + ".json")):
                raise ConsolidationError(
                    f"deployed checkpoint for {qoi} does not resolve: {prefix}")

        studies = [r["study"] for r in rounds if r.get("study")]
        training = [
            {"round": r["round"], "architecture": r["architecture"],
             "strategy": r["strategy"], **r["training"]}
            for r in rounds if r.get("training")
        ]
        rationales = [r["rationale"] for r in rounds if r.get("rationale")]
        for r in rounds:
            if r.get("error"):
                error_traces.append({"qoi": qoi, "round": r["round"],
                                     "error": r["error"]})
        qois[qoi] = {
            "selection": ctx.selections[qoi][0],
            "reselections": ctx.selections[qoi][1:],
            "studies": studies,
            "training": training,
            "timeline": timeline_from_rounds(rounds),
            "deployed": deployed,
            "test_metrics": None if deployed is None
            else deployed.get("test_metrics"),
            "rationales": rationales,
        }

    report = {
        "format": REPORT_FORMAT,
        "run_id": ctx.run_id,
        "seed": ctx.seed,
        "instruction": None if ctx.targets is None else ctx.targets.instruction,
        "targets": {} if ctx.targets is None
        else {q: t.to_dict() for q, t in ctx.targets.per_qoi.items()},
        "dataset_config": ctx.dataset,
        "preprocessing": ctx.preprocessing,
        "qois": qois,
        "error_traces": error_traces,
        "audit_digest": audit_digest([e.to_dict() for e in ctx.audit]),
        "environment": ctx.environment,
    }
    validate_report(report)
    return report
