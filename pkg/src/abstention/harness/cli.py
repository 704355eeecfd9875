"""Command-line entry point.

Exit status is 0 when every check passes, 2 when a guarantee check fails and
1 on bad input or a numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..core import CapacityError, InfeasibleError, InvalidInputError, NumericError
from .config import ExperimentConfig
from .experiments import run_experiment
from .report import emit_report, format_summary

log = logging.getLogger("abstention")

COMMANDS = {
    "classify-shift": "classification_shift",
    "adversarial": "adversarial",
    "regress": "regression",
    "generalize": "generalization",
    "pq-metrics": "pq_metrics",
}


def _common(p):
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--out", type=Path, help="output directory for the report")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--trials", type=int, help="number of trials (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abstention", description="Transductive abstention experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        _common(sub.add_parser(name, help=f"run a {kind.replace('_', ' ')} experiment"))
    st = sub.add_parser("selftest", help="run seeded invariant checks")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--trials", type=int, default=20)
    st.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args, kind) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.load(args.config)
        if cfg.kind != kind:
            raise InvalidInputError(f"config is for {cfg.kind!r}, not {kind!r}")
    else:
        cfg = ExperimentConfig(kind=kind)
    base = getattr(cfg, "_base", None)
    doc = cfg.to_dict()
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.trials is not None:
        doc["trials"] = args.trials
    cfg = ExperimentConfig.from_dict(doc)
    if base is not None:
        cfg._base = base
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        if args.command == "selftest":
            from ..selftest import run_selftest

            failures = run_selftest(seed=args.seed, trials=args.trials, echo=log.info)
            return 2 if failures else 0
        cfg = _config(args, COMMANDS[args.command])
        if args.jobs < 1:
            raise InvalidInputError("--jobs must be at least 1")
        report = run_experiment(cfg, jobs=args.jobs)
        out = args.out or (Path(cfg.out) if cfg.out else None)
        if out is not None:
            paths = emit_report(report, out)
            log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
        log.info(format_summary(report.summary))
        return 0 if report.passed else 2
    except (InvalidInputError, CapacityError, InfeasibleError, NumericError) as err:
        log.error("error: %s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
