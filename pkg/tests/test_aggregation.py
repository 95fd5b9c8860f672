import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvagg.aggregation import (ConfigurationError, DkwBudget, InvalidSampleError, MergeCorrection, MergeSample,
                               Variant, WeightVector, aggregate_label_set, aggregate_set, conservative_ecdf,
                               dkw_epsilon, ecdf_transform_set, m_precise, m_star, m_targeted, prop1_factor,
                               weighted_p)
from pvagg.intervals import Interval, IntervalSet, contains
from pvagg.pvalue import CalibratedExpert, profile, threshold_set
from pvagg.scores import ScoreKind
from oracles import abs_scores, brute_p, cqr_scores

SAMPLE = [0.2, 0.5, 0.9]


def const(lo, hi=None):
    hi = lo if hi is None else hi
    return lambda X: (np.full(len(X), lo, dtype=float), np.full(len(X), hi, dtype=float))


def abs_profile(mu, calib):
    return profile(CalibratedExpert(ScoreKind.ABS_RESIDUAL, const(mu), np.asarray(calib, float)), [0.0])


# -- weights --------------------------------------------------------------------

def test_weighted_p():
    assert weighted_p([0.2, 0.6], [0.5, 0.5]) == pytest.approx(0.4)
    assert weighted_p([0.2, 0.6], [1, 0]) == 0.2
    assert weighted_p([0.25, 1.0], [0.8, 0.2]) == pytest.approx(0.4)
    with pytest.raises(ConfigurationError):
        weighted_p([0.2, 0.6, 0.1], [0.5, 0.5])


def test_weight_vector_validation():
    assert WeightVector([0.25, 0.75]).w.sum() == 1.0
    WeightVector([0.5, 0.5 + 5e-10])
    for bad in ([0.5, 0.6], [1.5, -0.5], []):
        with pytest.raises(ConfigurationError):
            WeightVector(bad)


def test_prop1_factor():
    assert prop1_factor([1.0]) == 1.0
    assert prop1_factor([0.5, 0.5]) == 2.0
    assert prop1_factor([0.8, 0.2]) == pytest.approx(1.25)
    assert prop1_factor([0.25] * 4) == 2.0


# -- conservative ECDF and corrections (values derived by hand) ------------------

def test_conservative_ecdf():
    assert conservative_ecdf(SAMPLE, 0.5) == 0.75
    assert conservative_ecdf(SAMPLE, 0.1) == 0.0
    assert conservative_ecdf(SAMPLE, 0.9) == 1.0
    assert conservative_ecdf(SAMPLE, 5.0) == 1.0
    # only the minimum carries the extra unit
    assert conservative_ecdf(SAMPLE, 0.2) == 0.5


def test_m_star():
    c = m_star(SAMPLE)
    assert c.factor == 2.5 and c.variant is Variant.ALL_ALPHA and c.merge_size == 3
    assert m_star([1.0]).factor == 1.0
    assert m_star([0.5, 0.5]).factor == 2.0


def test_m_targeted():
    assert m_targeted(SAMPLE, 0.1).factor == 2.5
    assert m_targeted(SAMPLE, 0.6).factor == 2.5
    assert m_targeted(SAMPLE, 0.999).factor == m_star(SAMPLE).factor
    c = m_targeted(SAMPLE, 0.6)
    assert c.variant is Variant.TARGETED and c.alpha_prime == 0.6


def test_m_precise():
    assert m_precise(SAMPLE, 0.1).factor == 2.5
    assert m_precise(SAMPLE, 0.6).factor == 1.5
    assert m_precise([0.9], 0.1).factor == pytest.approx(1 / 0.9)
    assert not m_precise(SAMPLE, 0.6).fallback


def test_targeted_restricts_to_lower_tail():
    # the big ratio sits above the first point reaching alpha', so targeted ignores it
    sample = [0.5, 0.6, 0.65, 0.7, 0.9, 0.95, 1.0, 0.05]
    F = MergeSample(sample).cdf(np.sort(sample))
    r = F / np.sort(sample)
    bar = F[F >= 0.3].min()
    assert m_targeted(sample, 0.3).factor == r[F <= bar].max()


def test_zero_p_value_rejected():
    with pytest.raises(InvalidSampleError):
        m_star([0.0, 0.5])
    with pytest.raises(InvalidSampleError):
        MergeSample([])
    with pytest.raises(ConfigurationError):
        m_targeted(SAMPLE, 1.0)


def test_precise_fallback_is_flagged(monkeypatch):
    sample = MergeSample(SAMPLE)
    # the top point always has CDF 1, so force the branch through a level above it
    monkeypatch.setattr("pvagg.aggregation._check_alpha_prime", lambda a: None)
    with pytest.warns(RuntimeWarning):
        c = m_precise(sample, 1.5)
    assert c.fallback and c.factor == pytest.approx(1 / 0.9)


def test_merge_correction_json():
    c = m_targeted(SAMPLE, 0.1)
    d = json.loads(json.dumps(c.to_json()))
    assert d == {"factor": 2.5, "variant": "targeted", "merge_size": 3, "alpha_prime": 0.1}
    assert MergeCorrection.from_json(d) == c
    with pytest.raises(ValueError):
        MergeCorrection(1.0, Variant.TARGETED, 3)
    with pytest.raises(ValueError):
        MergeCorrection(0.0, Variant.ALL_ALPHA, 3)


def test_dkw_epsilon():
    assert dkw_epsilon(40, 0.05) == pytest.approx(math.sqrt(math.log(40) / 80), abs=1e-15)
    assert dkw_epsilon(40, 0.05) == pytest.approx(0.21474, abs=1e-5)
    assert dkw_epsilon(160, 0.05) == pytest.approx(0.10737, abs=1e-5)
    assert dkw_epsilon(10, 1 - 1e-12) == pytest.approx(math.sqrt(math.log(2) / 20), rel=1e-9)
    b = DkwBudget(0.05, 160)
    assert abs(b.epsilon - dkw_epsilon(160, 0.05)) <= 1e-12
    with pytest.raises(ValueError):
        DkwBudget(0.05, 160, 0.2)
    with pytest.raises(ConfigurationError):
        dkw_epsilon(0, 0.05)


# -- aggregate sets ------------------------------------------------------------

def test_single_expert_reduces_to_split():
    prof = abs_profile(0.0, [1, 2, 3])
    for a in (0.2, 0.3, 0.6):
        assert aggregate_set([prof], [1.0], 1.0, a) == threshold_set(prof, a)


def test_two_expert_example():
    profs = [abs_profile(0.0, [1.0]), abs_profile(10.0, [1.0])]
    s = aggregate_set(profs, [0.5, 0.5], 1.0, 0.6)
    assert s.parts == (Interval(-1, 1), Interval(9, 11))
    ys = np.linspace(-20, 20, 4001)
    p_all = 0.5 * brute_p(abs_scores(0, ys), [1.0]) + 0.5 * brute_p(abs_scores(10, ys), [1.0])
    assert [contains(s, y) for y in ys] == list(p_all > 0.6)


def test_unbounded_when_minimum_clears_threshold():
    profs = [abs_profile(0.0, [1.0]), abs_profile(10.0, [1.0])]
    assert aggregate_set(profs, [0.5, 0.5], MergeCorrection(2.0, Variant.ALL_ALPHA, 1), 0.6) == IntervalSet.real_line()


def test_ecdf_transform():
    profs = [abs_profile(0.0, [1.0]), abs_profile(10.0, [1.0])]
    w = [0.5, 0.5]
    # eps above alpha keeps every label
    assert ecdf_transform_set(profs, w, SAMPLE, 0.1, DkwBudget(0.05, 40)) == IntervalSet.real_line()
    # p_all takes 0.5 and 0.75; with sample {0.5, 0.75, 0.75}, F(0.5)=0.5 and F(0.75)=1
    s = ecdf_transform_set(profs, w, [0.5, 0.75, 0.75], 0.5)
    ys = np.linspace(-20, 20, 4001)
    p_all = 0.5 * brute_p(abs_scores(0, ys), [1.0]) + 0.5 * brute_p(abs_scores(10, ys), [1.0])
    assert [contains(s, y) for y in ys] == list(p_all > 0.5)
    assert s.parts == (Interval(-1, 1), Interval(9, 11))
    assert ecdf_transform_set(profs, w, SAMPLE, 1.0) == IntervalSet.empty()


def test_aggregate_label_set():
    label_p = np.array([[1.0, 0.5, 0.25], [0.25, 0.5, 1.0]])
    np.testing.assert_array_equal(aggregate_label_set(label_p, [0.8, 0.2], 1.0, 0.4),
                                  [True, True, False])
    batched = aggregate_label_set(label_p[:, None, :].repeat(2, axis=1), np.array([[0.8, 0.2], [0.2, 0.8]]), 1.0, 0.4)
    np.testing.assert_array_equal(batched, [[True, True, False], [False, True, True]])


# -- properties ---------------------------------------------------------------

samples = st.lists(st.floats(0.001, 1.0), min_size=1, max_size=40)


@given(samples, st.floats(0.01, 0.99))
def test_variant_ordering_and_feasibility(sample, ap):
    s = MergeSample(sample)
    star, targ, prec = m_star(s), m_targeted(s, ap), m_precise(s, ap)
    assert prec.factor <= targ.factor <= star.factor
    for p in s.values:
        assert s.cdf(p) <= star.factor * p * (1 + 1e-12)


@st.composite
def instances(draw):
    K = draw(st.integers(1, 3))
    experts = []
    for _ in range(K):
        calib = draw(st.lists(st.floats(0, 5).map(lambda v: round(v, 2)), min_size=1, max_size=10))
        mu = draw(st.floats(-5, 5))
        width = draw(st.floats(0, 2)) if draw(st.booleans()) else None
        experts.append((mu, width, calib))
    w = np.array(draw(st.lists(st.floats(0.01, 1), min_size=K, max_size=K)))
    return experts, w / w.sum()


def _profiles_and_oracle(experts, w, ys):
    profs, p_all = [], np.zeros(len(ys))
    for (mu, width, calib), wk in zip(experts, w):
        if width is None:
            e = CalibratedExpert(ScoreKind.ABS_RESIDUAL, const(mu), np.array(calib))
            s = abs_scores(mu, ys)
        else:
            e = CalibratedExpert(ScoreKind.CQR, const(mu, mu + width), np.array(calib))
            s = cqr_scores(mu, mu + width, ys)
        profs.append(profile(e, [0.0]))
        p_all += wk * brute_p(s, calib)
    return profs, p_all


@settings(max_examples=60)
@given(instances(), st.floats(0.5, 3), st.floats(0.02, 0.9))
def test_aggregate_set_matches_grid(inst, factor, alpha):
    experts, w = inst
    ys = np.linspace(-14, 14, 2801)
    profs, p_all = _profiles_and_oracle(experts, w, ys)
    s = aggregate_set(profs, WeightVector(w), factor, alpha)
    cuts = np.unique(np.concatenate([p.cuts for p in profs]))
    off = ~np.isin(ys, cuts)
    got = np.array([contains(s, y) for y in ys])
    np.testing.assert_array_equal(got[off], (factor * p_all > alpha)[off])


@settings(max_examples=40)
@given(instances(), st.floats(0.5, 2), st.floats(0, 2), st.floats(0.05, 0.9))
def test_scaling_monotone(inst, f1, df, alpha):
    experts, w = inst
    profs, _ = _profiles_and_oracle(experts, w, np.zeros(1))
    small = aggregate_set(profs, WeightVector(w), f1, alpha)
    big = aggregate_set(profs, WeightVector(w), f1 + df, alpha)
    for y in np.linspace(-14, 14, 561):
        if contains(small, y):
            assert contains(big, y)


def test_prop1_fixed_weight_miscoverage():
    """Arbitrarily dependent conformal p-values, fixed weights (0.8, 0.2)."""
    rng = np.random.default_rng(7)
    draws, n_cal, alpha = 20000, 49, 0.1
    v = np.array([0.8, 0.2])
    z = rng.standard_normal((draws, n_cal + 1))
    # the second expert's scores are a decreasing function of the first's: strong dependence
    s1, s2 = np.abs(z), np.exp(-np.abs(z))
    p1 = (1 + np.sum(s1[:, -1:] < s1[:, :-1], axis=1)) / (n_cal + 1)
    p2 = (1 + np.sum(s2[:, -1:] < s2[:, :-1], axis=1)) / (n_cal + 1)
    miss = np.mean(v[0] * p1 + v[1] * p2 <= alpha)
    bound = prop1_factor(v) * alpha
    assert miss <= bound + 3 * math.sqrt(bound * (1 - bound) / draws)
