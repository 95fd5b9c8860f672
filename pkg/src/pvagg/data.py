"""Datasets, feature assignments and the train/cal/merge/test split."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

SYNTHETIC_DIM = 16


class SchemaError(ValueError):
    pass


class EmptyDataError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    column_names: tuple[str, ...]
    label_name: str = "y"
    dropped_count: int = 0
    classes: tuple | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise EmptyDataError("dataset needs at least one row and one column")
        if len(self.labels) != X.shape[0]:
            raise SchemaError("feature and label row counts differ")
        if len(self.column_names) != X.shape[1]:
            raise SchemaError("column_names does not match feature width")
        if not np.all(np.isfinite(X)):
            raise SchemaError("features contain nonfinite values")
        object.__setattr__(self, "features", X)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def columns(self, names: Sequence[str]) -> list[int]:
        lookup = {c: i for i, c in enumerate(self.column_names)}
        missing = [c for c in names if c not in lookup]
        if missing:
            raise SchemaError(f"unknown columns: {missing}")
        return [lookup[c] for c in names]

    def standardized(self, fit_rows=None) -> "Dataset":
        """z-score every feature with statistics from ``fit_rows`` only."""
        ref = self.features if fit_rows is None else self.features[np.asarray(fit_rows)]
        mean = ref.mean(axis=0)
        std = ref.std(axis=0)
        std[std == 0] = 1.0
        return replace(self, features=(self.features - mean) / std)


def gen_synthetic(n: int, seed: int, noise: float = 0.1, d: int = SYNTHETIC_DIM) -> Dataset:
    """Gaussian features; label is their sum plus N(0, noise^2)."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = X.sum(axis=1) + noise * rng.standard_normal(n)
    return Dataset(X, y, tuple(f"x{j}" for j in range(d)))


def gen_piecewise(n: int, seed: int, noise_left: float = 0.1, noise_right: float = 1.0,
                  slope: float = 3.0) -> Dataset:
    """One uniform feature on [-1, 1] with a V-shaped mean.

    Noise is small left of zero and large right of it, so a single marginal
    interval is too wide on one side and too narrow on the other.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    sigma = np.where(x < 0, noise_left, noise_right)
    y = slope * np.abs(x) + sigma * rng.standard_normal(n)
    return Dataset(x[:, None], y, ("x",))


class Assignment(str, Enum):
    F15of16 = "F15of16"
    F12of16 = "F12of16"
    Share1of2 = "Share1of2"
    NoOverlap = "NoOverlap"


@dataclass(frozen=True)
class FeatureAssignment:
    groups: tuple[tuple[int, ...], ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.groups or any(len(g) == 0 for g in self.groups):
            raise ValueError("every expert needs at least one feature")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"expert{k}" for k in range(len(self.groups))))

    def validate(self, d: int):
        bad = [i for g in self.groups for i in g if not 0 <= i < d]
        if bad:
            raise SchemaError(f"feature indices out of range for d={d}: {bad}")


def synthetic_assignment(method: str | Assignment) -> FeatureAssignment:
    """Four-expert feature assignments over the 16 synthetic features."""
    method = Assignment(method)
    all_idx = range(SYNTHETIC_DIM)
    if method is Assignment.NoOverlap:
        groups = [tuple(range(4 * k, 4 * k + 4)) for k in range(4)]
    elif method is Assignment.Share1of2:
        groups = [tuple(range(8)) + (8 + 2 * k, 9 + 2 * k) for k in range(4)]
    elif method is Assignment.F15of16:
        groups = [tuple(i for i in all_idx if i != (4 * k) % SYNTHETIC_DIM) for k in range(4)]
    else:
        groups = [tuple(i for i in all_idx if not 4 * k <= i < 4 * k + 4) for k in range(4)]
    return FeatureAssignment(tuple(groups), tuple(f"{method.value}_{k}" for k in range(4)))


def _expand(columns: Sequence[str], dataset: Dataset) -> list[str]:
    # a one-hot encoded source column stands for all of its indicator columns
    out = []
    for c in columns:
        dummies = [n for n in dataset.column_names if n.startswith(f"{c}_")]
        out.extend([c] if c in dataset.column_names or not dummies else dummies)
    return out


def load_feature_groups(source: str | Path | dict, dataset: Dataset) -> FeatureAssignment:
    """Map a ``{expert_name: [column, ...]}`` config onto column indices."""
    if not isinstance(source, dict):
        source = json.loads(Path(source).read_text())
    names = tuple(source)
    return FeatureAssignment(tuple(tuple(dataset.columns(_expand(source[k], dataset))) for k in names), names)


def load_csv(path, label: str, features: Sequence[str] | None = None, normalize: bool = False,
             fit_rows=None, categorical: Sequence[str] = (), classification: bool = False) -> Dataset:
    """Read a headed CSV into a :class:`Dataset`.

    Rows with any missing value in the used columns are dropped. Columns in
    ``categorical`` are one-hot encoded. With ``classification`` the label is
    mapped to integer codes and the class names are kept on the dataset.
    """
    df = pd.read_csv(path)
    df.columns = [str(c).strip() for c in df.columns]
    feats = list(features) if features is not None else [c for c in df.columns if c != label]
    missing = [c for c in [label, *feats] if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    df = df[[*feats, label]]
    numeric = [c for c in feats if c not in categorical]
    df[numeric] = df[numeric].apply(pd.to_numeric, errors="coerce")
    if not classification:
        df[label] = pd.to_numeric(df[label], errors="coerce")
    before = len(df)
    df = df.dropna()
    dropped = before - len(df)
    if dropped:
        log.info("%s: dropped %d rows with missing values", path, dropped)
    if len(df) == 0:
        raise EmptyDataError(f"{path}: no usable rows")
    X = pd.get_dummies(df[feats], columns=list(categorical), dtype=float) if categorical else df[feats]
    classes = None
    if classification:
        codes, uniques = pd.factorize(df[label], sort=True)
        y, classes = codes.astype(int), tuple(uniques)
    else:
        y = df[label].to_numpy(dtype=float)
    ds = Dataset(X.to_numpy(dtype=float), y, tuple(map(str, X.columns)), label, dropped, classes)
    return ds.standardized(fit_rows) if normalize else ds


class SplitMode(str, Enum):
    WITH_MERGE = "with_merge"
    NO_MERGE = "no_merge"


@dataclass(frozen=True, eq=False)
class SplitPlan:
    train_idx: np.ndarray
    cal_idx: np.ndarray
    merge_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    mode: SplitMode = SplitMode.WITH_MERGE

    def sizes(self) -> tuple[int, int, int, int]:
        return len(self.train_idx), len(self.cal_idx), len(self.merge_idx), len(self.test_idx)


@dataclass(frozen=True)
class SplitSizes:
    train: int
    cal: int
    merge: int

    @classmethod
    def from_budget(cls, budget: int, merge_size: int | None = None) -> "SplitSizes":
        train = round(0.5 * budget)
        cal = round(0.4 * budget)
        merge = budget - train - cal if merge_size is None else merge_size
        return cls(train, cal, merge)

    def rows_needed(self, budget: int) -> int:
        return max(budget, self.train + self.cal + self.merge)


def make_split(n_total: int, budget: int = 400, mode: str | SplitMode = SplitMode.WITH_MERGE,
               seed: int = 0, merge_size: int | None = None, test_size: int | None = 2000,
               test_from_remainder: bool = True) -> SplitPlan:
    """Random disjoint split drawn from one permutation per seed.

    Both modes share the training rows and the test rows for a given seed:
    with a merge set the rest of the budget goes 160/40 (cal/merge), without
    one it all goes to calibration. A ``merge_size`` override keeps train/cal
    fixed and draws extra merge rows past the budget.
    """
    mode = SplitMode(mode)
    sizes = SplitSizes.from_budget(budget, merge_size)
    used = sizes.rows_needed(budget)
    if n_total < used + (1 if test_from_remainder else 0):
        raise SplitError(f"need more than {used} rows, have {n_total}")
    perm = np.random.default_rng(seed).permutation(n_total)
    train = perm[:sizes.train]
    if mode is SplitMode.WITH_MERGE:
        cal = perm[sizes.train:sizes.train + sizes.cal]
        merge = perm[sizes.train + sizes.cal:sizes.train + sizes.cal + sizes.merge]
    else:
        cal = perm[sizes.train:budget]
        merge = perm[:0]
    test = perm[used:] if test_from_remainder else perm[:0]
    if test_size is not None:
        test = test[:test_size]
    return SplitPlan(train, cal, merge, test, seed, mode)
