"""Command-line entry point: train, march, bench, verify, inspect.

Exit codes: 0 on success, 2 for invalid configuration or input files, 3 for
numeric failures (training blow-ups, marching out of domain, failed checks).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from .bench import (
    load_experiment_config,
    model_from_run_config,
    rows_to_csv,
    run_experiment,
    verify_flow_theorems,
)
from .configio import load_run_config
from .decomp import DecomposedModel
from .errors import ConfigError, FlowmarchError, ModelFormatError
from .marcher import MarchConfig, march
from .modelio import load_model, model_manifest, save_model
from .trainer import train_decomposed, train_model

_LOG = logging.getLogger("flowmarch")


def _parse_vector(text: str) -> np.ndarray:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse vector {text!r}; "
                          "expected comma-separated numbers") from None
    if not values:
        raise ConfigError("empty state vector")
    return np.asarray(values, dtype=float)


def _write_trajectory(traj, fh) -> None:
    fh.write("t," + ",".join(f"y{i + 1}" for i in range(traj.dim)) + "\n")
    for t, y in zip(traj.times, traj.states):
        row = [format(t, ".17g")] + [format(v, ".17g") for v in y]
        fh.write(",".join(row) + "\n")


def cmd_train(args) -> int:
    cfg = load_run_config(args.config) if args.config else {}
    if args.problem:
        cfg["problem"] = args.problem
    if "problem" not in cfg:
        raise ConfigError("no problem given (positional argument or config file)")
    if args.kind:
        cfg["kind"] = args.kind
    if args.seed is not None:
        cfg["seed"] = args.seed
    model, train_cfg, entry = model_from_run_config(cfg)
    _LOG.info("training %s (%s)", entry.problem_id, cfg.get("kind", "default kind"))
    if isinstance(model, DecomposedModel):
        model, reports = train_decomposed(model, train_cfg, jobs=args.jobs)
    else:
        model, report = train_model(model, train_cfg)
        reports = [report]
    for i, rep in enumerate(reports):
        print(f"subdomain {i}: residual {rep.residual_norm:.6e}  "
              f"iterations {rep.iterations}  restarts {rep.restarts}  "
              f"status {rep.status}")
    save_model(model, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_march(args) -> int:
    model = load_model(args.model)
    trained = model.trained if hasattr(model, "trained") else False
    if not trained:
        _LOG.warning("model %s is untrained; marching its baseline scheme",
                     args.model)
    y0 = _parse_vector(args.y0)
    mode = "quasi_adaptive" if args.quasi_adaptive else "fixed"
    if mode == "fixed" and args.dt is None:
        raise ConfigError("--dt is required unless --quasi-adaptive is set")
    config = MarchConfig(
        t_span=(args.t0, args.tf),
        mode=mode,
        dt=args.dt,
        safety=args.safety,
        periodicity_exploit={"auto": None, "on": True, "off": False}[
            args.periodicity
        ],
        allow_extrapolation=args.allow_extrapolation,
    )
    traj = march(model, y0, args.t0, config)
    if args.out:
        traj.to_csv(args.out)
        print(f"wrote {args.out} ({len(traj.times)} states)")
    else:
        _write_trajectory(traj, sys.stdout)
    return 0


def cmd_bench(args) -> int:
    config = load_experiment_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.out:
        config = dataclasses.replace(config, output=args.out)
    rows = run_experiment(config, jobs=args.jobs,
                          record_timings=not args.no_timings)
    failed = sum(1 for row in rows if row.error)
    if failed:
        _LOG.warning("%d of %d rows failed", failed, len(rows))
    if config.output is None:
        rows_to_csv(rows, sys.stdout)
    else:
        print(f"wrote {config.output}.csv and {config.output}.json "
              f"({len(rows)} rows)")
    return 0


def cmd_verify(args) -> int:
    theorems = None
    if args.theorems:
        theorems = [name.strip() for name in args.theorems.split(",")
                    if name.strip()]
    report = verify_flow_theorems(
        args.problem,
        samples=args.samples,
        tol=args.tol,
        seed=args.seed if args.seed is not None else 0,
        theorems=theorems,
    )
    for check in report.checks:
        verdict = "PASS" if check.passed else "FAIL"
        print(f"{report.problem}: {check.name:<15s} max_defect "
              f"{check.max_defect:.3e}  tol {check.tol:.1e}  {verdict}")
    return 0 if report.passed else 3


def cmd_inspect(args) -> int:
    manifest = model_manifest(args.model)
    json.dump(manifest, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the random seed")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for sub-domains / sweep rows")
    common.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))

    parser = argparse.ArgumentParser(
        prog="flowmarch",
        description="Learn exact time-stepping maps for ODE systems and "
                    "march, benchmark, and inspect them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common],
                       help="train a flow-map model for a catalog problem")
    p.add_argument("problem", nargs="?",
                   help="catalog problem id (may instead come from --config)")
    p.add_argument("--kind", help="representation kind, e.g. exp_s1 or imp_s2")
    p.add_argument("--config", help="run-config TOML file")
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("march", parents=[common],
                       help="time-march a saved model from an initial state")
    p.add_argument("model", help="model file written by `train`")
    p.add_argument("--y0", required=True,
                   help="initial state, comma-separated (e.g. '1,-1')")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tf", type=float, required=True)
    p.add_argument("--dt", type=float, help="fixed step size")
    p.add_argument("--quasi-adaptive", action="store_true",
                   help="per-sub-domain step sizes instead of a fixed dt")
    p.add_argument("--safety", type=float, default=0.95)
    p.add_argument("--periodicity", choices=("auto", "on", "off"),
                   default="auto",
                   help="exploit declared periodicity during marching")
    p.add_argument("--allow-extrapolation", action="store_true",
                   help="step outside the training box with a warning")
    p.add_argument("--out", help="trajectory CSV path (default: stdout)")
    p.set_defaults(func=cmd_march)

    p = sub.add_parser("bench", parents=[common],
                       help="run a sweep experiment and emit CSV/JSON")
    p.add_argument("config", help="experiment TOML file")
    p.add_argument("--out", help="output base path (overrides the config)")
    p.add_argument("--no-timings", action="store_true",
                   help="zero the wall-time columns (byte-stable output)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", parents=[common],
                       help="check flow symmetries against an oracle")
    p.add_argument("problem", help="catalog problem id")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--theorems",
                   help="comma-separated subset: temporal_shift, state_shift, "
                        "periodic_orbit")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("inspect", parents=[common],
                       help="print a saved model's manifest as JSON")
    p.add_argument("model", help="model file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except (ConfigError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FlowmarchError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
