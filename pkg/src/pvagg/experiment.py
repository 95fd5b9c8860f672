"""End-to-end trials: split, fit the mixture, calibrate, merge, build sets, score.

One trial produces one :class:`TrialResult` per (score kind, alpha, method).
Per-trial rows go to ``trials.csv``, ``summary.json`` holds means with
normal-approximation 95% intervals, and ``manifest.json`` records what is
needed to replay the run.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .aggregation import (ConfigurationError, DkwBudget, MergeSample, WeightVector, ecdf_set,
                          m_precise, m_star, m_targeted, scaled_set)
from .data import (Dataset, FeatureAssignment, SplitMode, SplitSizes, gen_piecewise, gen_synthetic, load_csv,
                   load_feature_groups, make_split, synthetic_assignment)
from .evaluation import TrialResult, marginal_coverage, mean_set_size, tag_by_quantile, worst_slice
from .intervals import contains, measure
from .moe import fit_expert, fit_router
from .pvalue import CalibratedExpert, combine, profile_from_context
from .scores import ScoreContext, ScoreKind

log = logging.getLogger(__name__)

METHODS = ("split", "fixed", "wa_star", "wa_targeted", "wa_precise", "ecdf", "ecdf_dkw")
MERGE_METHODS = {"wa_star", "wa_targeted", "wa_precise", "ecdf", "ecdf_dkw"}

CSV_COLUMNS = ("trial", "method", "score_kind", "alpha", "marginal_cov", "ws_cov", "delta_cov",
               "mean_size", "unbounded_count", "m_hat", "seed")


@dataclass
class ExpertSpec:
    """One expert: its feature columns and, optionally, the rows it owns.

    ``region`` is ``(column, lo, hi)``; the expert is trained and calibrated
    only on rows with ``lo <= x[column] < hi``.
    """

    features: list
    name: str = ""
    region: list | None = None


@dataclass
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | piecewise | csv
    assignment: str = "NoOverlap"
    noise: float = 0.1
    path: str | None = None
    label: str | None = None
    features: list | None = None
    feature_groups: dict | str | None = None
    categorical: list = field(default_factory=list)
    normalize: bool = True
    experts: list | None = None
    group_column: str | None = None
    group_quantile: float = 0.5


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    methods: list = field(default_factory=lambda: ["split", "wa_targeted", "wa_precise"])
    score_kinds: list = field(default_factory=lambda: ["abs_residual"])
    alphas: list = field(default_factory=lambda: [0.1])
    alpha_prime: float | None = None  # None: target each alpha in the grid
    quantile_alpha: float = 0.1
    fixed_weights: list | None = None
    trials: int = 200
    budget: int = 400
    merge_size: int | None = None
    test_size: int | None = 2000
    delta_dkw: float = 0.05
    delta_ws: float = 0.2
    n_slabs: int = 1000
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        if isinstance(self.dataset, dict):
            self.dataset = DatasetConfig(**self.dataset)
        self.validate()

    def validate(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown methods {unknown}; choose from {METHODS}")
        for k in self.score_kinds:
            ScoreKind.parse(k)
        levels = list(self.alphas) + ([self.alpha_prime] if self.alpha_prime is not None else [])
        if not levels or any(not 0 < a < 1 for a in levels + [self.quantile_alpha]):
            raise ConfigurationError("alpha, alpha_prime and quantile_alpha must lie in (0, 1)")
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if self.dataset.kind not in ("synthetic", "piecewise", "csv"):
            raise ConfigurationError(f"unknown dataset kind {self.dataset.kind!r}")
        if self.dataset.kind == "csv" and not (self.dataset.path and self.dataset.label):
            raise ConfigurationError("csv datasets need 'path' and 'label'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigurationError(f"unknown config fields {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def target_level(self, alpha: float) -> float:
        return alpha if self.alpha_prime is None else self.alpha_prime


# -- dataset materialisation ---------------------------------------------------

@dataclass
class TrialData:
    dataset: Dataset
    experts: list[ExpertSpec]
    group_values: np.ndarray | None = None


def _csv_cache_key(cfg: DatasetConfig):
    return (cfg.path, cfg.label, tuple(cfg.features or ()), tuple(cfg.categorical))


_CSV_CACHE: dict = {}


def _expert_specs(cfg: DatasetConfig, ds: Dataset, default: FeatureAssignment | None) -> list[ExpertSpec]:
    if cfg.experts:
        specs = []
        for k, e in enumerate(cfg.experts):
            e = e if isinstance(e, ExpertSpec) else ExpertSpec(**e)
            feats = [f if isinstance(f, int) else ds.columns([f])[0] for f in e.features]
            specs.append(ExpertSpec(feats, e.name or f"expert{k}", e.region))
        return specs
    return [ExpertSpec(list(g), n) for g, n in zip(default.groups, default.names)]


def materialize(cfg: ExperimentConfig, seed: int) -> TrialData:
    dcfg = cfg.dataset
    n_total = SplitSizes.from_budget(cfg.budget, cfg.merge_size).rows_needed(cfg.budget) + (cfg.test_size or 2000)
    if dcfg.kind == "synthetic":
        ds = gen_synthetic(n_total, seed, noise=dcfg.noise)
        return TrialData(ds, _expert_specs(dcfg, ds, synthetic_assignment(dcfg.assignment)))
    if dcfg.kind == "piecewise":
        ds = gen_piecewise(n_total, seed)
        experts = dcfg.experts or [
            {"features": [0], "name": "left", "region": [0, -math.inf, 0.0]},
            {"features": [0], "name": "right", "region": [0, 0.0, math.inf]},
        ]
        return TrialData(ds, _expert_specs(dataclasses.replace(dcfg, experts=experts), ds, None))
    key = _csv_cache_key(dcfg)
    if key not in _CSV_CACHE:
        _CSV_CACHE[key] = load_csv(dcfg.path, dcfg.label, dcfg.features, categorical=dcfg.categorical)
    ds = _CSV_CACHE[key]
    groups = load_feature_groups(dcfg.feature_groups, ds) if dcfg.feature_groups else None
    if groups is None and not dcfg.experts:
        groups = FeatureAssignment((tuple(range(ds.d)),), ("all",))
    gv = ds.features[:, ds.columns([dcfg.group_column])[0]] if dcfg.group_column else None
    return TrialData(ds, _expert_specs(dcfg, ds, groups), gv)


def _region_mask(X: np.ndarray, region) -> np.ndarray:
    if region is None:
        return np.ones(len(X), dtype=bool)
    col, lo, hi = region
    v = X[:, int(col)]
    return (v >= float(lo)) & (v < float(hi))


# -- one trial -----------------------------------------------------------------

@dataclass
class TrialOutput:
    trial: int
    seed: int
    results: list[TrialResult]
    rows: list[dict]
    corrections: dict
    dropped_rows: int


def _corrections(cfg: ExperimentConfig, sample: MergeSample | None) -> dict:
    """Learned factor per (method, alpha); split and fixed weights stay unscaled."""
    out = {}
    for alpha in cfg.alphas:
        level = cfg.target_level(alpha)
        for m in cfg.methods:
            if m in ("split", "fixed"):
                out[m, alpha] = 1.0
            elif m == "wa_star":
                out[m, alpha] = m_star(sample).factor
            elif m == "wa_targeted":
                out[m, alpha] = m_targeted(sample, level).factor
            elif m == "wa_precise":
                out[m, alpha] = m_precise(sample, level).factor
            else:
                out[m, alpha] = float("nan")
    return out


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialOutput:
    seed = cfg.seed + trial
    td = materialize(cfg, seed)
    ds = td.dataset
    split_kw = dict(budget=cfg.budget, seed=seed, merge_size=cfg.merge_size, test_size=cfg.test_size)
    plan = make_split(ds.n, mode=SplitMode.WITH_MERGE, **split_kw)
    plan_nm = make_split(ds.n, mode=SplitMode.NO_MERGE, **split_kw)
    if cfg.dataset.kind == "csv" and cfg.dataset.normalize:
        ds = ds.standardized(plan.train_idx)
    X, y = ds.features, np.asarray(ds.labels, dtype=float)
    tr, cal, mg, te = plan.train_idx, plan.cal_idx, plan.merge_idx, plan.test_idx
    cal_nm = plan_nm.cal_idx
    needs_merge = any(m in MERGE_METHODS for m in cfg.methods)
    if needs_merge and len(mg) == 0:
        raise ConfigurationError("merge-based methods need a nonempty merge set")

    specs = td.experts
    masks_tr = [_region_mask(X[tr], s.region) for s in specs]
    experts = [fit_expert(X[tr][m], y[tr][m], s.features, "point", name=s.name)
               for s, m in zip(specs, masks_tr)]
    moe = fit_router(experts, X[tr], y[tr])
    K = moe.K

    W_test = moe.route(X[te])
    W_merge = moe.route(X[mg]) if len(mg) else None
    if cfg.fixed_weights is not None:
        fixed_w = WeightVector(cfg.fixed_weights).w
    else:
        fixed_w = np.full(K, 1.0 / K)
    if "fixed" in cfg.methods and len(fixed_w) != K:
        raise ConfigurationError(f"fixed_weights has {len(fixed_w)} entries for {K} experts")

    tags = None
    if td.group_values is not None:
        tags = tag_by_quantile(td.group_values[te], cfg.dataset.group_quantile)

    results, rows, corrections = [], [], {}
    for kind_name in cfg.score_kinds:
        kind = ScoreKind.parse(kind_name)
        if kind is ScoreKind.CQR:
            members = [fit_expert(X[tr][m], y[tr][m], s.features, "quantile", cfg.quantile_alpha, s.name)
                       for s, m in zip(specs, masks_tr)]
            blended = moe.with_experts(members)
        else:
            members, blended = experts, moe

        cal_experts = []
        for s, e in zip(specs, members):
            m = _region_mask(X[cal], s.region)
            cal_experts.append(CalibratedExpert.calibrate(kind, e.bounds, X[cal][m], y[cal][m], s.name))
        split_expert = CalibratedExpert.calibrate(kind, blended.bounds, X[cal_nm], y[cal_nm], "split")

        sample = None
        if needs_merge:
            P = np.column_stack([ce.p_values(X[mg], y[mg]) for ce in cal_experts])
            sample = MergeSample(np.sum(W_merge * P, axis=1))
        factors = _corrections(cfg, sample)
        corrections[kind.value] = {f"{m}@{a}": f for (m, a), f in factors.items()}
        if sample is not None:
            corrections[kind.value]["m_star"] = m_star(sample).factor
        eps = DkwBudget(cfg.delta_dkw, len(sample)).epsilon if "ecdf_dkw" in cfg.methods else 0.0

        bounds = [ce.outputs(X[te]) for ce in cal_experts]
        split_lo, split_hi = split_expert.outputs(X[te])
        n_test = len(te)
        keys = [(a, m) for a in cfg.alphas for m in cfg.methods]
        covered = {k: np.zeros(n_test, dtype=bool) for k in keys}
        size = {k: np.zeros(n_test) for k in keys}
        wants_agg = any(m != "split" for m in cfg.methods)
        for i in range(n_test):
            yi = y[te[i]]
            split_prof = profile_from_context(ScoreContext(kind, split_lo[i], split_hi[i]),
                                              split_expert.calib_scores)
            if wants_agg:
                profs = [profile_from_context(ScoreContext(kind, lo[i], hi[i]), ce.calib_scores)
                         for (lo, hi), ce in zip(bounds, cal_experts)]
                p_all = combine(profs, W_test[i])
                p_fixed = combine(profs, fixed_w) if "fixed" in cfg.methods else None
            for a, m in keys:
                if m == "split":
                    s = scaled_set(split_prof, 1.0, a)
                elif m == "fixed":
                    s = scaled_set(p_fixed, 1.0, a)
                elif m == "ecdf":
                    s = ecdf_set(p_all, sample, a)
                elif m == "ecdf_dkw":
                    s = ecdf_set(p_all, sample, a, eps)
                else:
                    s = scaled_set(p_all, factors[m, a], a)
                covered[a, m][i] = contains(s, yi)
                size[a, m][i] = measure(s)

        ws_seed = seed  # identical slabs for every method in a trial
        for a, m in keys:
            r = TrialResult(covered[a, m], size[a, m], X[te], m, kind.value, a, factors[m, a], seed, tags)
            results.append(r)
            marg = marginal_coverage(r)
            ws = worst_slice(r, X[te], cfg.delta_ws, cfg.n_slabs, ws_seed).coverage
            sz = mean_set_size(r)
            rows.append({"trial": trial, "method": m, "score_kind": kind.value, "alpha": a,
                         "marginal_cov": marg, "ws_cov": ws, "delta_cov": marg - ws,
                         "mean_size": sz.mean, "unbounded_count": sz.unbounded_count,
                         "m_hat": factors[m, a], "seed": seed})
    return TrialOutput(trial, seed, results, rows, corrections, ds.dropped_count)


# -- whole experiment ----------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: Path, rows: Sequence[dict]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for c in ("alpha", "marginal_cov", "ws_cov", "delta_cov", "mean_size", "m_hat"):
            r[c] = float(r[c])
        for c in ("trial", "unbounded_count", "seed"):
            r[c] = int(r[c])
    return rows


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _json_num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_num(x) for x in v]
    return v


def summarize_rows(rows: Sequence[dict]) -> list[dict]:
    """Mean and mean ± 1.96·sd/√n per (method, score kind, alpha)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["method"], r["score_kind"], r["alpha"]), []).append(r)
    out = []
    for (method, kind, alpha), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0])):
        entry = {"method": method, "score_kind": kind, "alpha": alpha, "trials": len(rs)}
        for c in ("marginal_cov", "ws_cov", "delta_cov", "mean_size", "m_hat", "unbounded_count"):
            v = np.array([r[c] for r in rs], dtype=float)
            mean = float(v.mean())
            if len(v) > 1 and np.all(np.isfinite(v)):
                half = 1.96 * float(v.std(ddof=1)) / math.sqrt(len(v))
            else:
                half = 0.0 if len(v) == 1 else float("nan")
            entry[c] = {"mean": _json_num(mean), "ci_low": _json_num(mean - half),
                        "ci_high": _json_num(mean + half)}
        out.append(entry)
    return out


@dataclass
class RunReport:
    out_dir: Path
    rows: list[dict]
    failed: list[int]
    manifest: dict

    @property
    def ok(self) -> bool:
        return not self.failed


def run_experiment(cfg: ExperimentConfig, out_dir=None, progress: bool = False) -> RunReport:
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    rows, failed, per_trial = [], [], []
    for t in range(cfg.trials):
        t0 = time.time()
        try:
            res = run_trial(cfg, t)
        except Exception as e:  # a failed trial must not abort the whole run
            log.exception("trial %d failed", t)
            failed.append(t)
            per_trial.append({"trial": t, "seed": cfg.seed + t, "error": f"{type(e).__name__}: {e}"})
            continue
        rows.extend(res.rows)
        per_trial.append({"trial": t, "seed": res.seed, "seconds": round(time.time() - t0, 3),
                          "dropped_rows": res.dropped_rows, "corrections": res.corrections})
        if progress:
            log.info("trial %d/%d done in %.1fs", t + 1, cfg.trials, time.time() - t0)
    write_rows(out / "trials.csv", rows)
    summary = summarize_rows(rows)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, allow_nan=False))
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "ws_delta": cfg.delta_ws,
        "test_size": cfg.test_size,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "seconds": round(time.time() - started, 3),
        "failed_trials": failed,
        "trials": per_trial,
    }
    (out / "manifest.json").write_text(json.dumps(_json_num(manifest), indent=2, allow_nan=False))
    return RunReport(out, rows, failed, manifest)


def summarize_dir(in_dir) -> list[dict]:
    rows = read_rows(Path(in_dir) / "trials.csv")
    summary = summarize_rows(rows)
    (Path(in_dir) / "summary.json").write_text(json.dumps(summary, indent=2, allow_nan=False))
    return summary
