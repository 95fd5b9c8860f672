"""Nonconformity scores and their inversion in the label.

Both supported scores are piecewise linear and V-shaped in ``y``, so every
strict sublevel set ``{y : s(x, y) < r}`` is a single open interval. That is
what makes the breakpoint construction of p-value profiles exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .intervals import Interval, IntervalSet


class ScoreKind(str, Enum):
    ABS_RESIDUAL = "abs_residual"
    CQR = "cqr"

    @classmethod
    def parse(cls, name: "str | ScoreKind") -> "ScoreKind":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown score kind {name!r}; expected 'abs_residual' or 'cqr'") from None


@dataclass(frozen=True)
class ScoreContext:
    """Predictor outputs at one input.

    For absolute residuals only ``lo`` is used (the point prediction, with
    ``hi == lo``). For CQR ``lo``/``hi`` are the lower/upper quantile
    predictions; crossed quantiles are swapped.
    """

    kind: ScoreKind
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            lo, hi = self.hi, self.lo
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, mu: float) -> "ScoreContext":
        return cls(ScoreKind.ABS_RESIDUAL, float(mu), float(mu))

    @classmethod
    def quantiles(cls, q_lo: float, q_hi: float) -> "ScoreContext":
        return cls(ScoreKind.CQR, float(q_lo), float(q_hi))


def score_values(kind: ScoreKind, lo, hi, y):
    """Vectorised score; ``lo``, ``hi``, ``y`` broadcast against each other."""
    lo = np.asarray(lo, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is ScoreKind.ABS_RESIDUAL:
        return np.abs(y - lo)
    hi = np.asarray(hi, dtype=float)
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    return np.maximum(lo - y, y - hi)


def score(ctx: ScoreContext, y: float) -> float:
    return float(score_values(ctx.kind, ctx.lo, ctx.hi, y))


def _half_widths(ctx: ScoreContext, r):
    # sublevel set is (lo - r, hi + r); nonempty iff it has positive length
    return ctx.lo - r, ctx.hi + r


def sublevel_set(ctx: ScoreContext, r: float) -> IntervalSet:
    """Labels scoring strictly below ``r``."""
    left, right = _half_widths(ctx, r)
    if not left < right:
        return IntervalSet.empty()
    return IntervalSet((Interval(float(left), float(right)),))


def breakpoints(ctx: ScoreContext, calib_scores) -> np.ndarray:
    """Sorted distinct endpoints of the sublevel sets at each calibration score.

    These are the only labels where the conformal p-value can jump.
    """
    r = np.unique(np.asarray(calib_scores, dtype=float))
    left, right = _half_widths(ctx, r)
    keep = left < right
    return np.unique(np.concatenate((left[keep], right[keep])))
