"""Command line entry point: ``run``, ``gen-synthetic`` and ``summarize``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .data import gen_synthetic
from .experiment import ExperimentConfig, run_experiment, summarize_dir


def _run(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {k: v for k, v in (("seed", args.seed), ("trials", args.trials), ("out", args.out))
                 if v is not None}
    cfg = cfg.replace(**overrides)
    report = run_experiment(cfg, progress=args.verbose)
    print(f"wrote {len(report.rows)} rows to {report.out_dir / 'trials.csv'}")
    if report.failed:
        print(f"failed trials: {report.failed}", file=sys.stderr)
        return 1
    return 0


def _gen(args) -> int:
    ds = gen_synthetic(args.n, args.seed, noise=args.noise)
    header = ",".join([*ds.column_names, "y"])
    np.savetxt(args.out, np.column_stack([ds.features, ds.labels]), delimiter=",",
               header=header, comments="", fmt="%.17g")
    return 0


def _summarize(args) -> int:
    summary = summarize_dir(args.input)
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pvagg", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", help="experiment config (JSON); defaults if omitted")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--out", help="output directory (created if missing)")
    run.set_defaults(func=_run)

    gen = sub.add_parser("gen-synthetic", help="write a synthetic regression CSV")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_gen)

    summ = sub.add_parser("summarize", help="recompute summary.json from trials.csv")
    summ.add_argument("--in", dest="input", required=True)
    summ.set_defaults(func=_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
