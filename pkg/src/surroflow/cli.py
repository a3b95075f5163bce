"""Command-line entry points: gen-data, run, report, plot.

Exit codes: 0 success, 2 usage or configuration error, 3 pipeline failure.
Flag values win over the JSON config file, which wins over environment
variables, which win over built-in defaults.
"""

import argparse
import json
import os
import sys
from typing import Dict, Optional, Tuple

from surroflow.errors import (ConfigurationError, StructuralValidationError,
                              SurroflowError)

# Desk-scale run defaults: small budgets that finish on a laptop-class CPU
# while leaving the library defaults at their full-scale values.
DESK_DEFAULTS = {
    "seed": 0,
    "qois": "pressure,saturation",
    "instruction": None,
    "reasoner": "scripted",
    "llm_endpoint": None,
    "llm_model": None,
    "fallback_scripted": True,
    "trials": 12,
    "trial_epochs": 5,
    "trial_train_batches": 50,
    "trial_val_batches": 20,
    "max_rounds": 3,
    "epochs": 30,
    "patience": 15,
    "max_train_batches": 64,
    "max_val_batches": None,
    "memory_budget": 8 * 1024 ** 3,
    "max_base_channels": 32,
    "inject": None,
    "verify_checksums": False,
}


def _parse_grid(text: str):
    from surroflow.datagen.grf import GridSpec

    parts = text.lower().split("x")
    if len(parts) not in (2, 3) or not all(p.isdigit() for p in parts):
        raise ConfigurationError(
            f"grid must look like NXxNY or NXxNYxNZ, got {text!r}")
    dims = [int(p) for p in parts] + [1] * (3 - len(parts))
    return GridSpec(nx=dims[0], ny=dims[1], nz=dims[2])


def cmd_gen_data(args) -> int:
    from surroflow.datagen.bundle import DatasetConfig, build_dataset, write_bundle

    if args.samples < 10:
        raise ConfigurationError("need at least 10 samples for the splits")
    if args.timesteps < 2:
        raise ConfigurationError("need at least 2 timesteps")
    cfg = DatasetConfig(grid=_parse_grid(args.grid), n_samples=args.samples,
                        n_timesteps=args.timesteps, seed=args.seed)
    bundle = build_dataset(cfg)
    write_bundle(bundle, args.out, force=args.force)
    m = bundle.manifest
    print(f"wrote {args.out}: {m['n_samples']} samples, "
          f"{m['n_timesteps']} timesteps, grid {args.grid}, "
          f"content hash {m['content_hash'][:16]}")
    return 0


def _resolve(args, config_file: Dict, key: str,
             sources: Dict[str, str]):
    flag = getattr(args, key, None)
    if flag is not None:
        sources[key] = "flag"
        return flag
    if key in config_file:
        sources[key] = "config"
        return config_file[key]
    env_key = "SURROFLOW_" + key.upper()
    if env_key in os.environ:
        sources[key] = "env"
        raw = os.environ[env_key]
        default = DESK_DEFAULTS.get(key)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        return raw
    sources[key] = "default"
    return DESK_DEFAULTS.get(key)


def _build_run_config(args) -> Tuple["RunConfig", Dict[str, str]]:
    from surroflow.agents.client import ReasonerConfig
    from surroflow.control import ControlBudgets
    from surroflow.hpo.study import HPOBudget
    from surroflow.pipeline import RunConfig

    config_file: Dict = {}
    if args.config:
        if not os.path.isfile(args.config):
            raise ConfigurationError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            config_file = json.load(fh)
        unknown = sorted(set(config_file) - set(DESK_DEFAULTS))
        if unknown:
            raise ConfigurationError(f"unknown config file keys: {unknown}")

    sources: Dict[str, str] = {}
    v = {key: _resolve(args, config_file, key, sources) for key in DESK_DEFAULTS}

    qois = tuple(q.strip() for q in str(v["qois"]).split(",") if q.strip())
    reasoner = ReasonerConfig(
        backend=v["reasoner"], endpoint=v["llm_endpoint"],
        model=v["llm_model"],
        fallback_scripted=bool(v["fallback_scripted"])).resolved()
    if reasoner.backend not in ("scripted", "llm"):
        raise ConfigurationError(
            f"reasoner must be 'scripted' or 'llm', got {reasoner.backend!r}")

    cfg = RunConfig(
        data_dir=args.data, out_dir=args.out, qois=qois,
        instruction=v["instruction"], seed=int(v["seed"]), reasoner=reasoner,
        budgets=ControlBudgets(max_rounds_per_qoi=int(v["max_rounds"])),
        hpo=HPOBudget(n_trials=int(v["trials"]),
                      epochs_per_trial=int(v["trial_epochs"]),
                      train_batches=int(v["trial_train_batches"]),
                      val_batches=int(v["trial_val_batches"])),
        epochs=int(v["epochs"]), patience=int(v["patience"]),
        max_train_batches=None if v["max_train_batches"] in (None, "none")
        else int(v["max_train_batches"]),
        max_val_batches=None if v["max_val_batches"] in (None, "none")
        else int(v["max_val_batches"]),
        memory_budget_bytes=int(v["memory_budget"]),
        max_base_channels=None if v["max_base_channels"] in (None, "none")
        else int(v["max_base_channels"]),
        inject=v["inject"], verify_checksums=bool(v["verify_checksums"]))
    return cfg, sources


def _preflight_llm(reasoner) -> None:
    """Fail fast, before any training, when the backend cannot answer."""
    from surroflow.agents.client import AgentMessage, LLMError, llm_complete

    if reasoner.backend != "llm" or reasoner.fallback_scripted:
        return
    try:
        llm_complete(reasoner, [AgentMessage("user", "reply with the word ok")])
    except LLMError as exc:
        raise ConfigurationError(
            f"LLM backend unreachable and scripted fallback disabled: {exc}")


def cmd_run(args) -> int:
    from surroflow.pipeline import run_pipeline

    if not os.path.isdir(args.data):
        raise ConfigurationError(f"dataset directory not found: {args.data}")
    cfg, sources = _build_run_config(args)
    _preflight_llm(cfg.reasoner)
    ctx, report = run_pipeline(cfg, config_sources=sources)
    for qoi in ctx.qois:
        m = (ctx.deployed.get(qoi) or {}).get("test_metrics")
        if m:
            print(f"{qoi}: test R2 {m['r2']:.4f}, RMSE {m['rmse']:.4g}, "
                  f"relative L2 {m['rel_l2']:.4f}")
        else:
            print(f"{qoi}: no deployable model")
    print(f"run {ctx.run_id} written to {args.out}")
    return 0


def _require_run_dir(path: str) -> str:
    if not os.path.isdir(path) or \
            not os.path.isfile(os.path.join(path, "report.json")):
        raise ConfigurationError(f"not a finished run directory: {path}")
    return path


def cmd_report(args) -> int:
    from surroflow.report import render_summary, validate_report

    run_dir = _require_run_dir(args.run)
    with open(os.path.join(run_dir, "report.json")) as fh:
        report = json.load(fh)
    validate_report(report)
    if args.format == "json":
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        path = os.path.join(run_dir, "report.md")
        with open(path, "w") as fh:
            fh.write(render_summary(report))
        print(path)
    return 0


def cmd_plot(args) -> int:
    import numpy as np

    from surroflow.datagen.bundle import load_bundle
    from surroflow.pipeline import (_model_inputs, _physical_predictions,
                                    _physical_targets, load_deployed_model)
    from surroflow.report.plots import plot_field_comparison

    run_dir = _require_run_dir(args.run)
    ctx, model, prep = load_deployed_model(run_dir, args.qoi)
    data_dir = args.data or ctx.dataset.get("source_dir")
    if not data_dir or not os.path.isdir(data_dir):
        raise ConfigurationError(
            "dataset directory unavailable; pass --data explicitly")
    bundle = load_bundle(data_dir)
    stats = ctx.preprocessing["inputs"]
    x = _model_inputs(bundle, "test", stats["mean"], stats["std"])
    truth = _physical_targets(bundle, args.qoi, "test")
    n = len(x)
    if not -n <= args.sample < n:
        raise ConfigurationError(f"sample index {args.sample} outside the "
                                 f"{n}-sample test split")
    pred = _physical_predictions(model, x[args.sample:args.sample + 1]
                                 if args.sample != -1 else x[-1:],
                                 args.qoi, prep)[0]
    true_sample = truth[args.sample]
    t = args.timestep
    pred_t, true_t = np.asarray(pred[t]), np.asarray(true_sample[t])
    if pred_t.ndim == 3:
        mid = pred_t.shape[-1] // 2
        pred_t, true_t = pred_t[..., mid], true_t[..., mid]
    if args.qoi == "pressure":
        pred_t, true_t = pred_t / 1e5, true_t / 1e5
    out = args.out or os.path.join(
        run_dir, "plots", f"{args.qoi}-sample{args.sample}-t{t}.png")
    step = t if t >= 0 else true_sample.shape[0] + t
    plot_field_comparison(true_t, pred_t, args.qoi, out,
                          title=f"{args.qoi}, test sample {args.sample}, "
                                f"timestep {step}")
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surroflow",
        description="Self-configuring surrogate models for subsurface flow")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset bundle")
    g.add_argument("--samples", type=int, default=200)
    g.add_argument("--grid", default="32x32", help="NXxNY or NXxNYxNZ")
    g.add_argument("--timesteps", type=int, default=8)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out", required=True)
    g.add_argument("--force", action="store_true",
                   help="overwrite a non-empty output directory")
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="run the full pipeline on a dataset")
    r.add_argument("--data", required=True, help="dataset directory")
    r.add_argument("--out", required=True, help="run output directory")
    r.add_argument("--qois", help="comma-separated subset of pressure,saturation")
    r.add_argument("--instruction", help="natural-language quality target")
    r.add_argument("--reasoner", choices=["scripted", "llm"])
    r.add_argument("--llm-endpoint", dest="llm_endpoint")
    r.add_argument("--llm-model", dest="llm_model")
    r.add_argument("--no-fallback-scripted", dest="fallback_scripted",
                   action="store_false", default=None,
                   help="fail instead of falling back to scripted decisions")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int, help="HPO trials per round")
    r.add_argument("--trial-epochs", dest="trial_epochs", type=int)
    r.add_argument("--max-rounds", dest="max_rounds", type=int,
                   help="training rounds per quantity before fallback")
    r.add_argument("--epochs", type=int, help="full-training epochs per round")
    r.add_argument("--patience", type=int)
    r.add_argument("--max-train-batches", dest="max_train_batches")
    r.add_argument("--max-val-batches", dest="max_val_batches")
    r.add_argument("--memory-budget", dest="memory_budget", type=int,
                   help="feasibility budget in bytes")
    r.add_argument("--max-base-channels", dest="max_base_channels")
    r.add_argument("--inject",
                   choices=["nan-round-1", "plateau", "grad-explosion"],
                   help="deterministic training fault for recovery testing")
    r.add_argument("--verify-checksums", dest="verify_checksums",
                   action="store_true", default=None)
    r.add_argument("--config", help="JSON file with run settings")
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render a finished run's report")
    p.add_argument("--run", required=True)
    p.add_argument("--format", choices=["md", "json"], default="md")
    p.set_defaults(func=cmd_report)

    q = sub.add_parser("plot", help="plot prediction vs truth for one sample")
    q.add_argument("--run", required=True)
    q.add_argument("--qoi", default="saturation",
                   choices=["pressure", "saturation"])
    q.add_argument("--sample", type=int, default=0, help="test-split index")
    q.add_argument("--timestep", type=int, default=-1)
    q.add_argument("--data", help="dataset directory override")
    q.add_argument("--out", help="output image path")
    q.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, StructuralValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SurroflowError as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - contract pins nonzero codes
        print(f"pipeline failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
