"""Brute-force references, deliberately written without the library's shortcuts."""

import numpy as np


def brute_p(test_scores, calib_scores):
    """(1 + #{i : s < R_i}) / (n + 1) by explicit pairwise comparison."""
    s = np.asarray(test_scores, dtype=float)[..., None]
    R = np.asarray(calib_scores, dtype=float)
    return (1.0 + np.sum(s < R, axis=-1)) / (len(R) + 1.0)


def abs_scores(mu, y):
    return np.abs(np.asarray(y) - mu)


def cqr_scores(q_lo, q_hi, y):
    y = np.asarray(y)
    return np.maximum(q_lo - y, y - q_hi)


def grid_members(parts, ys):
    """Membership in a list of (lo, hi, lo_open, hi_open) tuples."""
    ys = np.asarray(ys)
    out = np.zeros(ys.shape, dtype=bool)
    for lo, hi, lo_open, hi_open in parts:
        left = ys > lo if lo_open else ys >= lo
        right = ys < hi if hi_open else ys <= hi
        out |= left & right
    return out
