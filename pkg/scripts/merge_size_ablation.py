"""Mean coverage against merge-set size, per feature assignment and per WA variant.

    python scripts/merge_size_ablation.py --trials 100 --sizes 40 80 160 320
"""

import argparse

import numpy as np

from pvagg.data import Assignment
from pvagg.experiment import ExperimentConfig, run_trial


def mean_cov(cfg, method):
    rows = [r for t in range(cfg.trials) for r in run_trial(cfg, t).rows if r["method"] == method]
    return float(np.mean([r["marginal_cov"] for r in rows]))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--sizes", type=int, nargs="+", default=[40, 80, 160, 320])
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--test-size", type=int, default=500)
    args = ap.parse_args()

    base = dict(trials=args.trials, alphas=[args.alpha], test_size=args.test_size, n_slabs=10)
    print("WA targeted, by feature assignment")
    print("assignment   " + "".join(f"{m:>9d}" for m in args.sizes))
    for a in Assignment:
        covs = [mean_cov(ExperimentConfig(dataset={"assignment": a.value}, methods=["wa_targeted"],
                                          merge_size=m, **base), "wa_targeted") for m in args.sizes]
        print(f"{a.value:<13}" + "".join(f"{c:9.4f}" for c in covs))

    print("\nNoOverlap, by variant")
    variants = ["wa_star", "wa_targeted", "wa_precise"]
    table = {v: [] for v in variants}
    for m in args.sizes:
        cfg = ExperimentConfig(methods=variants, merge_size=m, **base)
        rows = [r for t in range(cfg.trials) for r in run_trial(cfg, t).rows]
        for v in variants:
            table[v].append(np.mean([r["marginal_cov"] for r in rows if r["method"] == v]))
    for v in variants:
        print(f"{v:<13}" + "".join(f"{c:9.4f}" for c in table[v]))


if __name__ == "__main__":
    main()
