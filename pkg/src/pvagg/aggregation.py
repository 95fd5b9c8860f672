"""Weighted p-value merging and learned merging corrections.

A convex combination of valid p-values is not itself valid once the weights
depend on the data. Scaling it by a factor learned on a held-out merge sample
restores validity; three flavours of that factor are provided, from the
all-levels one down to a single target level.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .intervals import IntervalSet
from .pvalue import PValueProfile, combine, level_set

WEIGHT_TOL = 1e-9


class ConfigurationError(ValueError):
    pass


class InvalidSampleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightVector:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if len(w) == 0:
            raise ConfigurationError("weight vector is empty")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigurationError(f"weights must be finite and nonnegative: {w}")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ConfigurationError(f"weights sum to {total!r}, not 1")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def __len__(self):
        return len(self.w)

    def __array__(self, dtype=None, copy=None):
        return self.w if dtype is None else self.w.astype(dtype)


def _weights(w) -> np.ndarray:
    return w.w if isinstance(w, WeightVector) else WeightVector(w).w


def weighted_p(p_values, w) -> float:
    p = np.asarray(p_values, dtype=float)
    w = _weights(w)
    if p.shape != w.shape:
        raise ConfigurationError(f"{len(p)} p-values but {len(w)} weights")
    return float(w @ p)


def prop1_factor(v) -> float:
    """Miscoverage inflation ``min(1/max(v), 2)`` for data-independent weights."""
    return min(1.0 / float(np.max(_weights(v))), 2.0)


# -- merge sample and correction factors -------------------------------------

class Variant(str, Enum):
    ALL_ALPHA = "all_alpha"
    TARGETED = "targeted"
    PRECISE = "precise"


@dataclass(frozen=True)
class MergeCorrection:
    factor: float
    variant: Variant
    merge_size: int
    alpha_prime: float | None = None
    fallback: bool = False

    def __post_init__(self):
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise ValueError(f"correction factor must be positive and finite, got {self.factor}")
        if (self.variant is Variant.ALL_ALPHA) != (self.alpha_prime is None):
            raise ValueError("only targeted/precise corrections carry alpha_prime")

    def to_json(self) -> dict:
        return {"factor": self.factor, "variant": self.variant.value,
                "merge_size": self.merge_size, "alpha_prime": self.alpha_prime}

    @classmethod
    def from_json(cls, d: dict) -> "MergeCorrection":
        return cls(float(d["factor"]), Variant(d["variant"]), int(d["merge_size"]), d.get("alpha_prime"))

    @classmethod
    def identity(cls) -> "MergeCorrection":
        return cls(1.0, Variant.ALL_ALPHA, 0)


class MergeSample:
    """Weighted p-values of the merge points, each under its own weights."""

    def __init__(self, p_all_values):
        p = np.sort(np.asarray(p_all_values, dtype=float).reshape(-1))
        if len(p) == 0:
            raise InvalidSampleError("merge sample is empty")
        if np.any(p < 0) or np.any(p > 1 + 1e-12) or np.any(np.isnan(p)):
            raise InvalidSampleError("merge sample values must lie in (0, 1]")
        p.setflags(write=False)
        self.values = p

    def __len__(self):
        return len(self.values)

    def cdf(self, q):
        """Conservative empirical CDF (vectorised in ``q``)."""
        q = np.asarray(q, dtype=float)
        count = np.searchsorted(self.values, q, side="right")
        return ((self.values[0] <= q).astype(float) + count) / (1.0 + len(self.values))

    def ratios(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(p_i, F(p_i), F(p_i)/p_i) for the distinct sample values."""
        if self.values[0] <= 0:
            raise InvalidSampleError("merge sample contains a zero p-value")
        p = np.unique(self.values)
        F = self.cdf(p)
        return p, F, F / p


def conservative_ecdf(sample: MergeSample | Sequence[float], q: float) -> float:
    if not isinstance(sample, MergeSample):
        sample = MergeSample(sample)
    return float(sample.cdf(q))


def _as_sample(sample) -> MergeSample:
    return sample if isinstance(sample, MergeSample) else MergeSample(sample)


def m_star(sample) -> MergeCorrection:
    """Smallest scaling valid at every level, estimated on the merge sample.

    The supremum of F(t)/t over t > 0 is attained at a jump of the step CDF,
    so the maximum over sample points is exact.
    """
    sample = _as_sample(sample)
    _, _, r = sample.ratios()
    return MergeCorrection(float(r.max()), Variant.ALL_ALPHA, len(sample))


def _check_alpha_prime(alpha_prime):
    if not 0 < alpha_prime < 1:
        raise ConfigurationError(f"alpha_prime must lie in (0, 1), got {alpha_prime}")


def m_targeted(sample, alpha_prime: float) -> MergeCorrection:
    """Scaling valid for all levels up to ``alpha_prime``.

    Only sample points up to the first CDF value reaching ``alpha_prime``
    constrain the factor.
    """
    _check_alpha_prime(alpha_prime)
    sample = _as_sample(sample)
    _, F, r = sample.ratios()
    reached = F >= alpha_prime
    if reached.any():
        bar = F[reached].min()
        r = r[F <= bar]
    return MergeCorrection(float(r.max()), Variant.TARGETED, len(sample), float(alpha_prime))


def m_precise(sample, alpha_prime: float) -> MergeCorrection:
    """Scaling valid at the single level ``alpha_prime``."""
    _check_alpha_prime(alpha_prime)
    sample = _as_sample(sample)
    _, F, r = sample.ratios()
    reached = np.flatnonzero(F >= alpha_prime)
    fallback = len(reached) == 0
    if fallback:
        warnings.warn(f"no merge point reaches CDF level {alpha_prime}; using the largest point",
                      RuntimeWarning, stacklevel=2)
        i = len(r) - 1
    else:
        i = reached[0]  # F is nondecreasing in p, so this is the smallest such F
    return MergeCorrection(float(r[i]), Variant.PRECISE, len(sample), float(alpha_prime), fallback)


@dataclass(frozen=True)
class DkwBudget:
    delta: float
    merge_size: int
    epsilon: float = float("nan")

    def __post_init__(self):
        eps = dkw_epsilon(self.merge_size, self.delta)
        if math.isnan(self.epsilon):
            object.__setattr__(self, "epsilon", eps)
        elif abs(self.epsilon - eps) > 1e-12:
            raise ValueError(f"epsilon {self.epsilon} inconsistent with delta/merge_size ({eps})")


def dkw_epsilon(merge_size: int, delta: float) -> float:
    """Uniform CDF deviation radius at confidence ``1 - delta`` (natural log)."""
    if merge_size < 1:
        raise ConfigurationError("merge_size must be at least 1")
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * merge_size))


def unscaled_coverage_bound(alpha: float, m_hat: float, epsilon: float, delta: float) -> float:
    """Finite-sample coverage lower bound of the unscaled set, given a mean m̂*."""
    return 1.0 - (alpha * m_hat + epsilon + delta)


# -- aggregate prediction sets -------------------------------------------------

def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")


def scaled_set(p_all: PValueProfile, factor: float, alpha: float) -> IntervalSet:
    return level_set(p_all, lambda v: factor * v > alpha)


def aggregate_set(profiles: Sequence[PValueProfile], w, correction: MergeCorrection | float,
                  alpha: float) -> IntervalSet:
    """``{y : factor * sum_k w_k p_k(y) > alpha}``, computed exactly."""
    _check_alpha(alpha)
    factor = correction.factor if isinstance(correction, MergeCorrection) else float(correction)
    return scaled_set(combine(profiles, _weights(w)), factor, alpha)


def ecdf_set(p_all: PValueProfile, sample: MergeSample, alpha: float, epsilon: float = 0.0) -> IntervalSet:
    return level_set(p_all, lambda v: sample.cdf(v) + epsilon > alpha)


def ecdf_transform_set(profiles: Sequence[PValueProfile], w, sample, alpha: float,
                       dkw: DkwBudget | None = None) -> IntervalSet:
    """Rank-transformed aggregate: keep labels whose p_all has CDF above alpha.

    With a DKW budget the CDF is inflated by its radius first; once that radius
    exceeds alpha every label is kept.
    """
    eps = 0.0 if dkw is None else dkw.epsilon
    return ecdf_set(combine(profiles, _weights(w)), _as_sample(sample), alpha, eps)


# -- finite label spaces -------------------------------------------------------

def aggregate_label_set(label_p: np.ndarray, w, factor: float, alpha: float) -> np.ndarray:
    """Boolean label mask from per-expert label p-values.

    ``label_p`` has shape (K, n_labels) for one input, or (K, n_test,
    n_labels) with ``w`` of shape (n_test, K).
    """
    label_p = np.asarray(label_p, dtype=float)
    w = np.asarray(w, dtype=float)
    if label_p.ndim == 2:
        p_all = _weights(w) @ label_p
    else:
        p_all = np.einsum("nk,knl->nl", w, label_p)
    return factor * p_all > alpha
