"""Finite unions of real intervals with exact endpoint openness.

Regression prediction sets are step-function level sets, so they are always a
finite union of intervals. Representing them exactly lets us measure and test
membership without a grid.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_open: bool = True
    hi_open: bool = True

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval endpoints must not be NaN")
        if self.lo > self.hi:
            raise ValueError(f"lo={self.lo} exceeds hi={self.hi}")
        # infinite endpoints are never attained
        if self.lo == -INF:
            object.__setattr__(self, "lo_open", True)
        if self.hi == INF:
            object.__setattr__(self, "hi_open", True)

    @property
    def empty(self) -> bool:
        return self.lo == self.hi and (self.lo_open or self.hi_open)

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def __contains__(self, y: float) -> bool:
        above = y > self.lo or (y == self.lo and not self.lo_open)
        below = y < self.hi or (y == self.hi and not self.hi_open)
        return above and below

    def __repr__(self):
        left = "(" if self.lo_open else "["
        right = ")" if self.hi_open else "]"
        return f"{left}{self.lo}, {self.hi}{right}"


def _normalize(parts: Iterable[Interval]) -> tuple[Interval, ...]:
    # zero-length pieces carry no measure and are dropped
    items = sorted((p for p in parts if not p.degenerate),
                   key=lambda p: (p.lo, p.lo_open))
    out: list[Interval] = []
    for p in items:
        if not out:
            out.append(p)
            continue
        cur = out[-1]
        touching = p.lo < cur.hi or (p.lo == cur.hi and not (cur.hi_open and p.lo_open))
        if not touching:
            out.append(p)
            continue
        if p.hi > cur.hi:
            hi, hi_open = p.hi, p.hi_open
        elif p.hi == cur.hi:
            hi, hi_open = cur.hi, cur.hi_open and p.hi_open
        else:
            hi, hi_open = cur.hi, cur.hi_open
        out[-1] = Interval(cur.lo, hi, cur.lo_open, hi_open)
    return tuple(out)


@dataclass(frozen=True)
class IntervalSet:
    """Sorted, pairwise disjoint, non-adjacent intervals.

    Build instances with :meth:`of` (or :func:`union`); the constructor
    assumes ``parts`` is already normalized.
    """

    parts: tuple[Interval, ...] = ()

    @classmethod
    def of(cls, *parts: Interval | tuple) -> "IntervalSet":
        ivs = [p if isinstance(p, Interval) else Interval(*p) for p in parts]
        return cls(_normalize(ivs))

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(())

    @classmethod
    def real_line(cls) -> "IntervalSet":
        return cls((Interval(-INF, INF),))

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __bool__(self):
        return bool(self.parts)

    def __contains__(self, y: float) -> bool:
        return contains(self, y)

    def __or__(self, other: "IntervalSet") -> "IntervalSet":
        return union(self, other)

    @property
    def bounded(self) -> bool:
        return not self.parts or (self.parts[0].lo > -INF and self.parts[-1].hi < INF)

    @property
    def is_real_line(self) -> bool:
        return len(self.parts) == 1 and self.parts[0].lo == -INF and self.parts[0].hi == INF

    def measure(self) -> float:
        return measure(self)

    def to_json(self) -> list[list]:
        def enc(v):
            if v == INF:
                return "inf"
            if v == -INF:
                return "-inf"
            return v
        return [[enc(p.lo), enc(p.hi), p.lo_open, p.hi_open] for p in self.parts]

    @classmethod
    def from_json(cls, records: Sequence[Sequence]) -> "IntervalSet":
        return cls.of(*(Interval(float(lo), float(hi), bool(lo_open), bool(hi_open))
                        for lo, hi, lo_open, hi_open in records))

    def __repr__(self):
        if not self.parts:
            return "IntervalSet(∅)"
        return "IntervalSet(" + " ∪ ".join(map(repr, self.parts)) + ")"


def union(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    if not a.parts:
        return b
    if not b.parts:
        return a
    return IntervalSet(_normalize(a.parts + b.parts))


def measure(s: IntervalSet) -> float:
    """Lebesgue measure; openness of endpoints is irrelevant."""
    total = 0.0
    for p in s.parts:
        if p.lo == -INF or p.hi == INF:
            return INF
        total += p.hi - p.lo
    return total


def contains(s: IntervalSet, y: float) -> bool:
    if not s.parts:
        return False
    # rightmost part whose lower end is <= y
    i = bisect.bisect_right([p.lo for p in s.parts], y) - 1
    return i >= 0 and y in s.parts[i]


def from_step_mask(cuts: np.ndarray, mask: np.ndarray) -> IntervalSet:
    """Level set of a step function given pointwise membership.

    ``mask`` has length ``2*len(cuts) + 1`` and interleaves open pieces with
    the cut points themselves: ``piece_0, cut_0, piece_1, cut_1, ..., piece_B``
    where ``piece_j`` is the open interval between ``cut_{j-1}`` and ``cut_j``.
    """
    cuts = np.asarray(cuts, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    B = len(cuts)
    if mask.shape != (2 * B + 1,):
        raise ValueError(f"mask must have length {2 * B + 1}, got {mask.shape}")
    if not mask.any():
        return IntervalSet.empty()
    if mask.all():
        return IntervalSet.real_line()

    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    parts = []
    for s, t in zip(edges[::2], edges[1::2] - 1):
        if s == t and s % 2 == 1:
            continue  # isolated cut point
        if s % 2 == 0:
            j = s // 2
            lo, lo_open = (-INF if j == 0 else float(cuts[j - 1])), True
        else:
            lo, lo_open = float(cuts[(s - 1) // 2]), False
        if t % 2 == 0:
            j = t // 2
            hi, hi_open = (INF if j == B else float(cuts[j])), True
        else:
            hi, hi_open = float(cuts[(t - 1) // 2]), False
        parts.append(Interval(lo, hi, lo_open, hi_open))
    # runs are separated by at least one excluded element, so already normal
    return IntervalSet(tuple(parts))
