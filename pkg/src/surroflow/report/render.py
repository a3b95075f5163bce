"""Markdown summary of a consolidated report."""

from typing import Dict, List, Optional


def _f4(value: Optional[float]) -> str:
    return "--" if value is None else f"{value:.4f}"


def _sci(value: Optional[float]) -> str:
    return "--" if value is None else f"{value:.2e}"


def _table(header: List[str], rows: List[List[str]]) -> List[str]:
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(" --- " for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return lines


def _target_text(target: Dict) -> str:
    if target["mode"] == "maximize":
        return f"maximize {target['metric']}"
    return f"{target['metric']} > {target['threshold']}"


def render_summary(report: Dict) -> str:
    lines = [f"# Surrogate run `{report['run_id']}`", ""]
    if report.get("instruction"):
        lines += [f"Instruction: {report['instruction']!r}", ""]
    lines += ["Targets: " + "; ".join(
        f"{q}: {_target_text(t)}" for q, t in sorted(report["targets"].items())), ""]

    lines += ["## Test metrics", ""]
    rows = []
    for qoi, block in sorted(report["qois"].items()):
        m = block.get("test_metrics")
        if m is None:
            rows.append([qoi, "--", "--", "--"])
        else:
            rows.append([qoi, _f4(m["r2"]), _sci(m["rmse"]), _f4(m["rel_l2"])])
    lines += _table(["QoI", "R2", "RMSE", "RelL2"], rows) + [""]

    for qoi, block in sorted(report["qois"].items()):
        lines += [f"## {qoi}", ""]
        sel = block["selection"]
        lines += [f"Selected architecture: **{sel['chosen']}** "
                  f"(ranking: {', '.join(sel['ranking'])})", "",
                  f"> {sel['rationale']}", ""]

        if block["studies"]:
            lines += ["### Hyperparameter search", ""]
            rows = []
            for study in block["studies"]:
                counts = study.get("counts", {})
                best = study.get("best", {})
                rows.append([
                    str(study.get("round_index", "--")),
                    study.get("architecture", "--"),
                    f"{counts.get('completed', 0)}/{counts.get('pruned', 0)}"
                    f"/{counts.get('failed', 0)}",
                    _sci(best.get("value")),
                    ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}"
                              for k, v in sorted(best.get("params", {}).items())),
                ])
            lines += _table(["Round", "Architecture", "done/pruned/failed",
                             "Best val loss", "Best params"], rows) + [""]

        lines += ["### Recovery timeline", ""]
        rows = [[qoi, str(r["round"]), r["strategy"], r["architecture"],
                 _f4(r["r2"]), r["status"]] for r in block["timeline"]]
        lines += _table(["Task", "Round", "Strategy", "Architecture", "R2",
                         "Status"], rows) + [""]

        deployed = block.get("deployed")
        if deployed is None:
            lines += ["No deployable model was produced for this quantity.", ""]
        else:
            lines += [f"Deployed: **{deployed['architecture']}** from round "
                      f"{deployed['checkpoint']['round_index']} "
                      f"(validation {_f4(deployed['val_score'])}, "
                      f"weights `{deployed['checkpoint']['prefix']}`)", ""]
        if block.get("rationales"):
            lines += ["### Recovery rationale", ""]
            lines += [f"- {r}" for r in block["rationales"]] + [""]

    if report["error_traces"]:
        lines += ["## Errors encountered", ""]
        lines += [f"- {t['qoi']} round {t['round']}: {t['error']}"
                  for t in report["error_traces"]] + [""]

    env = report["environment"]
    digest = report["audit_digest"]
    lines += ["## Environment", "",
              f"- seed: {env['seed']}",
              f"- reasoner backend: {env['reasoner_backend']}",
              "- versions: " + ", ".join(f"{k} {v}" for k, v
                                         in sorted(env["versions"].items())),
              f"- audit: {digest['n_events']} events, sha256 "
              f"`{digest['sha256'][:16]}...`", ""]
    return "\n".join(lines)
