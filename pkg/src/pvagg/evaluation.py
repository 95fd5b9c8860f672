"""Coverage and efficiency metrics for one batch of prediction sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_WS_DELTA = 0.2
DEFAULT_N_SLABS = 1000


@dataclass(eq=False)
class TrialResult:
    """Per-test-point outcomes of one method at one alpha in one trial."""

    covered: np.ndarray
    set_size: np.ndarray
    features: np.ndarray | None = None
    method: str = ""
    score_kind: str = ""
    alpha: float = float("nan")
    m_hat: float = float("nan")
    seed: int = 0
    group_tags: np.ndarray | None = None

    def __post_init__(self):
        self.covered = np.asarray(self.covered, dtype=bool)
        self.set_size = np.asarray(self.set_size, dtype=float)
        if self.covered.shape != self.set_size.shape:
            raise ValueError("covered and set_size must align")

    def __len__(self):
        return len(self.covered)


def _covered(results) -> np.ndarray:
    cov = results.covered if isinstance(results, TrialResult) else np.asarray(results, dtype=bool)
    if cov.size == 0:
        raise ValueError("no test points")
    return cov


def marginal_coverage(results) -> float:
    return float(np.mean(_covered(results)))


@dataclass(frozen=True)
class SlabSpec:
    v: np.ndarray
    a: float
    b: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.v) - 1.0) > 1e-9:
            raise ValueError("slab direction must be a unit vector")
        if self.a > self.b:
            raise ValueError("slab needs a <= b")

    def contains(self, X) -> np.ndarray:
        t = np.atleast_2d(X) @ self.v
        return (t >= self.a) & (t <= self.b)


@dataclass(frozen=True)
class WorstSlice:
    coverage: float
    slab: SlabSpec | None
    n_kept: int
    fallback: bool


def _row_quantiles(sorted_cols: np.ndarray, u: np.ndarray) -> np.ndarray:
    # linear-interpolation quantile of each column at its own level u[j]
    n = sorted_cols.shape[0]
    pos = u * (n - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    cols = np.arange(sorted_cols.shape[1])
    a, b = sorted_cols[lo, cols], sorted_cols[hi, cols]
    return np.where(frac == 0, a, a + frac * (b - a))


def worst_slice(covered, features, delta: float = DEFAULT_WS_DELTA, n_slabs: int = DEFAULT_N_SLABS,
                seed: int = 0) -> WorstSlice:
    """Minimum coverage over random slabs holding at least ``delta`` of the points.

    Directions are uniform on the sphere; slab ends are the empirical
    quantiles of the projections at two uniform levels. When no slab is
    heavy enough the marginal coverage is returned and flagged.
    """
    cov = _covered(covered)
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[0] != len(cov):
        raise ValueError("features and coverage flags differ in length")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    n = len(cov)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n_slabs, X.shape[1]))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    u = np.sort(rng.uniform(size=(n_slabs, 2)), axis=1)
    proj = X @ V.T
    srt = np.sort(proj, axis=0)
    a = _row_quantiles(srt, u[:, 0])
    b = _row_quantiles(srt, u[:, 1])
    inside = (proj >= a) & (proj <= b)
    counts = inside.sum(axis=0)
    kept = counts >= delta * n
    if not kept.any():
        return WorstSlice(float(cov.mean()), None, 0, True)
    hits = (inside & cov[:, None]).sum(axis=0)
    rate = np.where(kept, hits / np.maximum(counts, 1), np.inf)
    j = int(np.argmin(rate))
    return WorstSlice(float(rate[j]), SlabSpec(V[j], float(a[j]), float(b[j])), int(kept.sum()), False)


def ws_coverage(results, features=None, delta: float = DEFAULT_WS_DELTA,
                n_slabs: int = DEFAULT_N_SLABS, seed: int = 0) -> float:
    if features is None:
        features = results.features
    return worst_slice(results, features, delta, n_slabs, seed).coverage


def delta_coverage(results, features=None, delta: float = DEFAULT_WS_DELTA,
                   n_slabs: int = DEFAULT_N_SLABS, seed: int = 0) -> float:
    """Marginal minus worst-slice coverage; negative values are legitimate."""
    return marginal_coverage(results) - ws_coverage(results, features, delta, n_slabs, seed)


@dataclass(frozen=True)
class SetSize:
    mean: float
    unbounded_count: int


def mean_set_size(results) -> SetSize:
    sizes = results.set_size if isinstance(results, TrialResult) else np.asarray(results, dtype=float)
    if sizes.size == 0:
        raise ValueError("no test points")
    unbounded = int(np.isinf(sizes).sum())
    return SetSize(math.inf if unbounded else float(sizes.mean()), unbounded)


@dataclass(frozen=True)
class GroupStat:
    coverage: float
    mean_size: float
    count: int


def group_coverage(results: TrialResult, tags=None) -> dict[str, GroupStat]:
    tags = results.group_tags if tags is None else tags
    if tags is None:
        raise ValueError("no group tags")
    tags = np.asarray(tags)
    out = {}
    for g in sorted(set(tags.tolist()), key=str):
        m = tags == g
        out[str(g)] = GroupStat(float(results.covered[m].mean()),
                                mean_set_size(results.set_size[m]).mean, int(m.sum()))
    out["All"] = GroupStat(marginal_coverage(results), mean_set_size(results).mean, len(results))
    return out


def tag_by_quantile(values, q: float, above: str = "top", below: str = "bottom") -> np.ndarray:
    """Tag each value by whether it lies at or above the empirical q-quantile."""
    values = np.asarray(values, dtype=float)
    thr = np.quantile(values, q)
    return np.where(values >= thr, above, below)
