"""Split-conformal p-value functions and their exact step-function profiles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .intervals import IntervalSet, from_step_mask
from .scores import ScoreContext, ScoreKind, breakpoints, score_values

# maps an (n, d) feature matrix to (lo, hi) prediction arrays
Predictor = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


def p_from_scores(sorted_calib: np.ndarray, test_scores) -> np.ndarray:
    """(1 + #{R_i > s}) / (n + 1) for each test score ``s``.

    Ties do not count: only calibration scores strictly above ``s`` do.
    """
    n = len(sorted_calib)
    above = n - np.searchsorted(sorted_calib, test_scores, side="right")
    return (1.0 + above) / (n + 1.0)


@dataclass(frozen=True, eq=False)
class CalibratedExpert:
    kind: ScoreKind
    predictor: Predictor
    calib_scores: np.ndarray
    name: str = ""

    def __post_init__(self):
        scores = np.sort(np.asarray(self.calib_scores, dtype=float))
        if scores.ndim != 1 or len(scores) == 0:
            raise ValueError(f"expert {self.name!r} needs at least one calibration score")
        if not np.all(np.isfinite(scores)):
            raise ValueError(f"expert {self.name!r} has nonfinite calibration scores")
        scores.setflags(write=False)
        object.__setattr__(self, "calib_scores", scores)

    @classmethod
    def calibrate(cls, kind, predictor: Predictor, X_cal, y_cal, name: str = "") -> "CalibratedExpert":
        kind = ScoreKind.parse(kind)
        lo, hi = predictor(np.atleast_2d(X_cal))
        return cls(kind, predictor, score_values(kind, lo, hi, y_cal), name)

    @property
    def n_cal(self) -> int:
        return len(self.calib_scores)

    def outputs(self, X) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.predictor(np.atleast_2d(X))
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        return np.minimum(lo, hi), np.maximum(lo, hi)

    def context(self, x) -> ScoreContext:
        lo, hi = self.outputs(x)
        return ScoreContext(self.kind, float(lo[0]), float(hi[0]))

    def p_values(self, X, y) -> np.ndarray:
        """p-values of labels ``y[i]`` at inputs ``X[i]``."""
        lo, hi = self.outputs(X)
        return p_from_scores(self.calib_scores, score_values(self.kind, lo, hi, y))


def p_value(expert: CalibratedExpert, x, y: float) -> float:
    return float(expert.p_values(np.atleast_2d(x), [y])[0])


@dataclass(frozen=True, eq=False)
class PValueProfile:
    """A step function of the label.

    ``values[j]`` holds on the open piece between ``cuts[j-1]`` and
    ``cuts[j]`` (unbounded at either end); ``at_cut_values[j]`` is the value
    exactly at ``cuts[j]``.
    """

    cuts: np.ndarray
    values: np.ndarray
    at_cut_values: np.ndarray
    n_cal: int | None = field(default=None)

    def __post_init__(self):
        B = len(self.cuts)
        if len(self.values) != B + 1 or len(self.at_cut_values) != B:
            raise ValueError("profile needs B cuts, B+1 piece values and B at-cut values")

    @property
    def interleaved(self) -> np.ndarray:
        """Values in piece/cut order: piece_0, cut_0, piece_1, ..., piece_B."""
        out = np.empty(2 * len(self.cuts) + 1)
        out[0::2] = self.values
        out[1::2] = self.at_cut_values
        return out

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        j = np.searchsorted(self.cuts, y, side="left")
        on_cut = np.zeros(y.shape, dtype=bool)
        inside = j < len(self.cuts)
        on_cut[inside] = self.cuts[j[inside]] == y[inside]
        out = self.values[j]
        if on_cut.any():
            out = np.where(on_cut, self.at_cut_values[np.minimum(j, len(self.cuts) - 1)], out)
        return out


def probe_points(cuts: np.ndarray) -> np.ndarray:
    """One label inside each open piece, interleaved with the cuts themselves."""
    B = len(cuts)
    if B == 0:
        return np.zeros(1)
    pts = np.empty(2 * B + 1)
    pts[1::2] = cuts
    pts[0] = cuts[0] - 1.0
    pts[-1] = cuts[-1] + 1.0
    if B > 1:
        pts[2:-1:2] = 0.5 * (cuts[:-1] + cuts[1:])
    return pts


def profile_from_context(ctx: ScoreContext, sorted_calib: np.ndarray) -> PValueProfile:
    cuts = breakpoints(ctx, sorted_calib)
    pts = probe_points(cuts)
    if len(cuts) == 0:
        # no breakpoints: any label works, the centre is as good as any
        pts = np.array([ctx.lo])
    vals = p_from_scores(sorted_calib, score_values(ctx.kind, ctx.lo, ctx.hi, pts))
    return PValueProfile(cuts, vals[0::2], vals[1::2], len(sorted_calib))


def profile(expert: CalibratedExpert, x) -> PValueProfile:
    """Exact profile ``y -> p(x, y)`` for one input."""
    return profile_from_context(expert.context(x), expert.calib_scores)


def combine(profiles: Sequence[PValueProfile], weights) -> PValueProfile:
    """Weighted sum of step functions, evaluated on the union of their cuts."""
    w = np.asarray(weights, dtype=float)
    if len(w) != len(profiles):
        raise ValueError(f"{len(profiles)} profiles but {len(w)} weights")
    if len(profiles) == 1:
        p = profiles[0]
        return PValueProfile(p.cuts, w[0] * p.values, w[0] * p.at_cut_values, p.n_cal)
    cuts = np.unique(np.concatenate([p.cuts for p in profiles]))
    pts = probe_points(cuts)
    total = np.zeros(len(pts))
    for wk, p in zip(w, profiles):
        if wk != 0.0:
            total += wk * p(pts)
    return PValueProfile(cuts, total[0::2], total[1::2])


def level_set(prof: PValueProfile, keep: Callable[[np.ndarray], np.ndarray]) -> IntervalSet:
    """``{y : keep(prof(y))}`` for a vectorised predicate on values."""
    return from_step_mask(prof.cuts, keep(prof.interleaved))


def threshold_set(prof: PValueProfile, tau: float) -> IntervalSet:
    """Exact ``{y : prof(y) > tau}``."""
    return level_set(prof, lambda v: v > tau)


# finite label spaces: p-values are evaluated label by label

def label_p_values(calib_scores, label_scores) -> np.ndarray:
    """p-values for every candidate label.

    ``label_scores`` has shape (n_test, n_labels) and holds s(x, y) for each
    test input and label.
    """
    return p_from_scores(np.sort(np.asarray(calib_scores, dtype=float)), np.asarray(label_scores, dtype=float))
