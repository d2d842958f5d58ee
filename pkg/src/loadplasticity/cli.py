"""Batch command line: planning, dispatch, TCL capacity, case studies and M&V checks."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .harness.config import ExperimentConfig, RunReport, _plain
from .harness.studies import STUDIES, run_capacity, run_phev_study
from .telemetry import MvProfile, mv_verify


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {"output_dir": args.out}
    if args.scale is not None:
        changes.update(phev_scale=args.scale, tcl_scale=args.scale)
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    return cfg.replace(**changes)


def _finish(report: RunReport, cfg: ExperimentConfig) -> int:
    paths = report.write(cfg.output_dir)
    print(json.dumps({"study": report.study, "summary": _plain(report.summary), "invariants": report.invariants}, indent=2))
    for p in paths:
        print(f"wrote {p}", file=sys.stderr)
    failed = [k for k, v in report.invariants.items() if not v]
    if failed:
        print(f"invariant checks failed: {', '.join(failed)}", file=sys.stderr)
    return 0 if report.ok else 1


def cmd_plan(args) -> int:
    cfg = _config(args).replace(schedulers=[])
    cfg.seeds = cfg.seeds[:1]
    report = run_phev_study(cfg)
    report.study = "plan"
    return _finish(report, cfg)


def cmd_dispatch(args) -> int:
    cfg = _config(args)
    if args.scheduler:
        cfg = cfg.replace(schedulers=[args.scheduler])
    cfg.seeds = cfg.seeds[:1]
    report = run_phev_study(cfg)
    report.study = "dispatch"
    return _finish(report, cfg)


def cmd_capacity(args) -> int:
    cfg = _config(args)
    return _finish(run_capacity(cfg), cfg)


def cmd_study(args) -> int:
    cfg = _config(args)
    return _finish(STUDIES[args.name](cfg), cfg)


def cmd_verify(args) -> int:
    observed = np.loadtxt(args.observed, ndmin=1)
    mu = np.loadtxt(args.mean, ndmin=1)
    W = np.loadtxt(args.cov, ndmin=2)
    dispatched = np.loadtxt(args.dispatched, ndmin=1) if args.dispatched else np.zeros_like(mu)
    profile = MvProfile.with_false_reject(mu, W, dispatched, args.false_reject)
    res = mv_verify(observed, profile)
    print(json.dumps({"accept": res.accept, "statistic": res.statistic, "threshold": profile.eta}))
    return 0 if res.accept else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment configuration")
    common.add_argument("--scale", type=float, help="population scale for PHEVs and TCLs")
    common.add_argument("--seed", type=int, help="run a single seed")
    common.add_argument("--out", help="output directory for tables")

    ap = argparse.ArgumentParser(prog="loadplasticity", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("plan", parents=[common], help="forward purchase under both PHEV models").set_defaults(func=cmd_plan)
    p = sub.add_parser("dispatch", parents=[common], help="plan, then dispatch one arrival realization")
    p.add_argument("--scheduler", choices=["mpc", "edf"])
    p.set_defaults(func=cmd_dispatch)
    sub.add_parser("capacity", parents=[common], help="TCL envelopes and simulated capacity").set_defaults(func=cmd_capacity)
    p = sub.add_parser("study", parents=[common], help="run a full case study")
    p.add_argument("name", choices=sorted(STUDIES))
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("verify", help="whole-house test of a household's daily profile")
    p.add_argument("observed", help="observed load, one value per step")
    p.add_argument("--mean", required=True, help="inflexible load mean vector")
    p.add_argument("--cov", required=True, help="inflexible load covariance matrix")
    p.add_argument("--dispatched", help="dispatched flexible profile (default zeros)")
    p.add_argument("--false-reject", type=float, default=0.01, help="false rejection rate of a compliant household")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
