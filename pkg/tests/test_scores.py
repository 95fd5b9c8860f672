import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvagg.intervals import Interval, IntervalSet, contains
from pvagg.scores import ScoreContext, ScoreKind, breakpoints, score, sublevel_set

abs0 = ScoreContext.point(0.0)
cqr01 = ScoreContext.quantiles(0.0, 1.0)


def test_score_values():
    assert score(ScoreContext.point(2.0), 3.5) == 1.5
    assert score(cqr01, 0.5) == -0.5
    assert score(cqr01, 2.0) == 1.0


def test_sublevel_sets():
    assert sublevel_set(abs0, 3).parts == (Interval(-3, 3),)
    assert sublevel_set(abs0, 0) == IntervalSet.empty()
    assert sublevel_set(cqr01, 0.5).parts == (Interval(-0.5, 1.5),)
    assert sublevel_set(cqr01, -0.5) == IntervalSet.empty()


def test_breakpoints():
    np.testing.assert_array_equal(breakpoints(abs0, [1, 2, 3]), [-3, -2, -1, 1, 2, 3])
    np.testing.assert_array_equal(breakpoints(abs0, [1, 1]), [-1, 1])
    np.testing.assert_array_equal(breakpoints(cqr01, [0.5]), [-0.5, 1.5])
    # a zero residual gives an empty sublevel set and no breakpoint
    np.testing.assert_array_equal(breakpoints(abs0, [0.0, 2.0]), [-2, 2])


def test_crossed_quantiles_are_swapped():
    ctx = ScoreContext.quantiles(1.0, 0.0)
    assert (ctx.lo, ctx.hi) == (0.0, 1.0)


def test_kind_parse():
    assert ScoreKind.parse("cqr") is ScoreKind.CQR
    with pytest.raises(ValueError):
        ScoreKind.parse("density")


contexts = st.one_of(
    st.floats(-5, 5).map(ScoreContext.point),
    st.tuples(st.floats(-5, 5), st.floats(-5, 5)).map(lambda t: ScoreContext.quantiles(*t)),
)


@given(contexts, st.floats(-3, 6))
def test_sublevel_matches_grid(ctx, r):
    s = sublevel_set(ctx, r)
    ys = np.linspace(-15, 15, 2001)
    for y in ys:
        assert contains(s, y) == (score(ctx, y) < r)


@given(contexts, st.floats(-3, 6), st.floats(0, 3))
def test_sublevel_monotone(ctx, r, dr):
    small, big = sublevel_set(ctx, r), sublevel_set(ctx, r + dr)
    for p in small.parts:
        assert any(q.lo <= p.lo and p.hi <= q.hi for q in big.parts)


@given(st.floats(-5, 5), st.floats(0, 5), st.floats(-10, 10))
def test_negative_cqr_score_iff_strictly_inside(lo, width, y):
    ctx = ScoreContext.quantiles(lo, lo + width)
    assert (score(ctx, y) < 0) == (ctx.lo < y < ctx.hi)
