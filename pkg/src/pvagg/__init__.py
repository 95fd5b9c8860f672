"""Weighted aggregation of conformal prediction sets through weighted p-values."""

__version__ = "0.1.0"

from .intervals import Interval, IntervalSet, contains, measure, union  # noqa: E402
from .scores import ScoreContext, ScoreKind, breakpoints, score, sublevel_set  # noqa: E402
from .pvalue import (CalibratedExpert, PValueProfile, combine, label_p_values, p_value,  # noqa: E402
                     profile, threshold_set)
from .aggregation import (DkwBudget, MergeCorrection, MergeSample, Variant, WeightVector,  # noqa: E402
                          aggregate_label_set, aggregate_set, conservative_ecdf, dkw_epsilon,
                          ecdf_transform_set, m_precise, m_star, m_targeted, prop1_factor, weighted_p)

__all__ = [
    "Interval", "IntervalSet", "contains", "measure", "union",
    "ScoreContext", "ScoreKind", "breakpoints", "score", "sublevel_set",
    "CalibratedExpert", "PValueProfile", "combine", "label_p_values", "p_value", "profile",
    "threshold_set",
    "DkwBudget", "MergeCorrection", "MergeSample", "Variant", "WeightVector", "aggregate_label_set",
    "aggregate_set", "conservative_ecdf", "dkw_epsilon", "ecdf_transform_set", "m_precise", "m_star",
    "m_targeted", "prop1_factor", "weighted_p",
]
