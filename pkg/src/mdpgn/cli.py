"""Command-line entry point: ``validate``, ``train``, ``diagnose-hessian``, ``sweep``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .exceptions import ConfigError, NumericalFailure

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="mdpgn", description="Gauss-Newton policy search experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="run the invariant suites")
    v.add_argument("--suite", default="all")
    v.add_argument("--seed", type=int, default=0)
    t = sub.add_parser("train", help="run an experiment config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default="results")
    d = sub.add_parser("diagnose-hessian", help="Hessian-term norms along a run")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    s = sub.add_parser("sweep", help="repeat an experiment over values of one config field")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, help="dotted path, e.g. schedule.alpha")
    s.add_argument("--values", required=True, help="comma-separated JSON values")
    s.add_argument("--out", default="sweep")
    return p


def _validate(args):
    from .validation import SUITES, run_validation

    if args.suite != "all" and args.suite not in SUITES:
        raise ConfigError(f"--suite: unknown suite {args.suite!r}; expected 'all' or one of {sorted(SUITES)}")
    results = run_validation(args.suite, args.seed)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def _summary(label, result):
    finals = [t.rows[-1]["return"] for t in result.traces]
    mean = sum(finals) / len(finals)
    print(f"{label}: {len(finals)} repeat(s), final return mean {mean:.6g}")


def _train(args):
    from .config import load_config
    from .experiments import run_experiment

    cfg = load_config(args.config)
    result = run_experiment(cfg, args.out)
    _summary(args.config, result)
    for f in result.files:
        print(f"wrote {f}")
    return EXIT_OK


def _diagnose(args):
    from .config import load_config
    from .experiments import hessian_diagnostics

    cfg = load_config(args.config)
    rows = hessian_diagnostics(cfg, args.out)
    if rows:
        last = rows[-1]
        print(f"final checkpoint {last['iteration']}: |A1|/|H12+H12^T| = {last['ratio_a1_h12']:.6g}")
    print(f"wrote {os.path.join(args.out, 'hessian_diagnostics.csv')}")
    return EXIT_OK


def _sweep(args):
    from .config import parse_config, set_path
    from .experiments import run_experiment

    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load {args.config}: {exc}") from exc
    try:
        values = [json.loads(v) for v in args.values.split(",")]
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--values: {exc}") from exc
    for v in values:
        cfg = parse_config(set_path(doc, args.param, v))
        out = os.path.join(args.out, f"{args.param}={v}")
        _summary(f"{args.param}={v}", run_experiment(cfg, out))
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"validate": _validate, "train": _train, "diagnose-hessian": _diagnose, "sweep": _sweep}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
