import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from vmfunc.collectives import (
    CellPartition,
    CollectiveSequence,
    DiscreteCells,
    EXACT_MOMENT_ORDER,
    Exponential,
    FgmCopula2D,
    Gaussian,
    IndependentProduct,
    Mixture,
    Repartition,
    StudentT,
    Uniform,
    discretize,
    draw_experiment,
    repartition_eval,
)
from vmfunc.streams import StreamId


# ---------------------------------------------------------------------------
# repartitions


def test_repartition_counts_dominated_points():
    rep = Repartition(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.5], [0.5, 2.0]]))
    assert repartition_eval(rep, [1.0, 1.0]) == 0.5
    assert repartition_eval(rep, [-1.0, -1.0]) == 0.0
    assert repartition_eval(rep, [2.0, 2.0]) == 1.0


def test_repartition_is_inclusive_at_sample_points():
    rep = Repartition(np.array([[1.0], [2.0]]))
    assert repartition_eval(rep, [1.0]) == 0.5
    assert repartition_eval(rep, [1.0 - 1e-12]) == 0.0


def test_repartition_infinite_sentinels():
    rep = Repartition(np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert repartition_eval(rep, [np.inf, np.inf]) == 1.0
    assert repartition_eval(rep, [-np.inf, 3.0]) == 0.0
    assert repartition_eval(rep, [np.inf, 0.0]) == 0.5


def test_repartition_rejects_nan_argument_and_nonfinite_points():
    rep = Repartition(np.array([[0.0]]))
    with pytest.raises(ValueError):
        repartition_eval(rep, [np.nan])
    with pytest.raises(ValueError):
        Repartition(np.array([[np.inf]]))


@given(
    st.lists(
        st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=2),
        min_size=1,
        max_size=12,
    ),
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    st.lists(st.floats(0, 3), min_size=2, max_size=2),
)
@settings(max_examples=80)
def test_repartition_monotone_in_every_coordinate(points, base, step):
    rep = Repartition(np.array(points))
    lo = np.array(base)
    hi = lo + np.array(step)
    assert repartition_eval(rep, lo) <= repartition_eval(rep, hi)


def test_as_model_matches_repartition_cdf():
    rng = np.random.default_rng(3)
    rep = Repartition(rng.normal(size=(17, 2)))
    model = rep.as_model()
    grid = rng.normal(size=(40, 2))
    np.testing.assert_allclose(model.cdf_many(grid), rep.cdf_many(grid), atol=1e-12)


# ---------------------------------------------------------------------------
# marginals


def test_uniform_cdf_ppf_and_moments():
    u = Uniform(-1.0, 3.0)
    assert u.cdf(np.array([-2.0, -1.0, 1.0, 3.0, 4.0])).tolist() == [0, 0, 0.5, 1, 1]
    np.testing.assert_allclose(u.ppf(u.cdf(np.array([0.7]))), [0.7])
    # E[x^2] on [-1, 3]: (27 + 1) / (4 * 3)
    assert math.isclose(u.raw_moment(2), 28.0 / 12.0)


def test_gaussian_moments_match_quadrature():
    g = Gaussian(0.5, 2.0)
    for m in range(0, 5):
        val, _ = integrate.quad(
            lambda x, m=m: x ** m * stats.norm.pdf(x, 0.5, 2.0), -30, 30
        )
        assert math.isclose(g.raw_moment(m), val, rel_tol=1e-8, abs_tol=1e-10)


def test_exponential_moment_formula():
    e = Exponential(2.5)
    for m in range(5):
        assert math.isclose(e.raw_moment(m), math.factorial(m) / 2.5 ** m)


def test_student_t_df2_closed_forms_match_scipy():
    t2 = StudentT(2.0)
    xs = np.array([-3.0, -0.5, 0.0, 1.2, 8.0])
    np.testing.assert_allclose(t2.cdf(xs), stats.t.cdf(xs, df=2), atol=1e-12)
    us = np.array([0.05, 0.3, 0.5, 0.9])
    np.testing.assert_allclose(t2.ppf(us), stats.t.ppf(us, df=2), atol=1e-9)


def test_student_t_divergent_moments_warn_and_return_none():
    t2 = StudentT(2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(RuntimeWarning):
            t2.raw_moment(2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert t2.raw_moment(2) is None
        assert t2.raw_moment(3) is None
    t5 = StudentT(5.0)
    assert t5.raw_moment(1) == 0.0
    # E[x^2] = df / (df - 2)
    assert math.isclose(t5.raw_moment(2), 5.0 / 3.0)


def test_marginal_sampling_matches_cdf():
    rng = np.random.default_rng(11)
    for marg in (Uniform(0, 1), Gaussian(1, 0.5), Exponential(1.2), StudentT(2.0)):
        draws = marg.sample(rng, 4000)
        d = stats.kstest(draws, lambda x: marg.cdf(np.asarray(x))).statistic
        assert d < 0.035, marg


# ---------------------------------------------------------------------------
# models


def test_independent_product_cdf_and_moments():
    m = IndependentProduct((Uniform(0, 1), Exponential(1.0)))
    pts = np.array([[0.5, np.inf], [1.0, math.log(2.0)], [np.inf, np.inf]])
    vals = m.cdf_many(pts)
    assert math.isclose(vals[0], 0.5)
    assert math.isclose(vals[1], 0.5)
    assert math.isclose(vals[2], 1.0)
    assert math.isclose(m.raw_moment((1, 1)), 0.5 * 1.0)
    assert m.raw_moment((0, EXACT_MOMENT_ORDER + 1)) is None


def test_fgm_cdf_formula():
    fgm = FgmCopula2D(Uniform(0, 1), Uniform(0, 1), 0.7)
    for u, v in [(0.3, 0.8), (0.5, 0.5), (1.0, 0.4)]:
        expect = u * v * (1 + 0.7 * (1 - u) * (1 - v))
        got = fgm.cdf_many(np.array([[u, v]]))[0]
        assert math.isclose(got, expect, abs_tol=1e-12)


def test_fgm_theta_range_validated():
    with pytest.raises(ValueError):
        FgmCopula2D(Uniform(0, 1), Uniform(0, 1), 1.5)


def test_fgm_cross_moment_closed_form():
    # E[xy] = E[x]E[y] + theta g1(x) g1(y); uniform(0,1) has g1 = -1/6
    fgm = FgmCopula2D(Uniform(0, 1), Uniform(0, 1), 0.9)
    assert math.isclose(fgm.raw_moment((1, 1)), 0.25 + 0.9 / 36.0, abs_tol=1e-12)
    ind = FgmCopula2D(Uniform(0, 1), Uniform(0, 1), 0.0)
    assert math.isclose(ind.raw_moment((1, 1)), 0.25, abs_tol=1e-12)


def test_fgm_cross_moment_matches_quadrature():
    fgm = FgmCopula2D(Uniform(0, 1), Exponential(1.0), -0.6)

    def integrand(y, x):
        dens = 1.0 - 0.6 * (1 - 2 * x) * (1 - 2 * (1 - math.exp(-y)))
        return x * y * dens * math.exp(-y)

    expect, _ = integrate.dblquad(integrand, 0, 1, 0, 40)
    assert math.isclose(fgm.raw_moment((1, 1)), expect, rel_tol=1e-7)


def test_fgm_sampler_matches_joint_cdf():
    fgm = FgmCopula2D(Uniform(0, 1), Uniform(0, 1), 0.9)
    pts = fgm.sample(StreamId(5).generator(), 6000)
    grid = np.array([[a, b] for a in (0.25, 0.5, 0.75) for b in (0.25, 0.5, 0.75)])
    emp = Repartition(pts).cdf_many(grid)
    theory = fgm.cdf_many(grid)
    assert np.abs(emp - theory).max() < 0.025


def test_discrete_cells_moments_and_cdf():
    cells = DiscreteCells(points=[[0.0, 0.0], [1.0, 2.0]], probs=[0.25, 0.75])
    assert math.isclose(cells.raw_moment((1, 1)), 0.75 * 2.0)
    assert math.isclose(cells.cdf_many(np.array([[0.5, 3.0]]))[0], 0.25)
    with pytest.raises(ValueError):
        DiscreteCells(points=[[0.0], [1.0]], probs=[0.9, 0.2])


def test_mixture_pools_equal_weights():
    a = DiscreteCells(points=[[0.0]], probs=[1.0])
    b = DiscreteCells(points=[[1.0]], probs=[1.0])
    mix = Mixture((a, b))
    assert math.isclose(mix.raw_moment((1,)), 0.5)
    assert math.isclose(mix.cdf_many(np.array([[0.5]]))[0], 0.5)


# ---------------------------------------------------------------------------
# sequences and draws


def test_prefix_mixture_iid_is_base():
    base = Uniform(0, 1)
    seq = CollectiveSequence.iid(IndependentProduct((base,)))
    assert seq.prefix_mixture(100) is seq.base


def test_explicit_sequence_bounds_n():
    models = (DiscreteCells(points=[[0.0]], probs=[1.0]),) * 3
    seq = CollectiveSequence.explicit(models)
    with pytest.raises(ValueError):
        draw_experiment(seq, 4, StreamId(0))


def test_draw_experiment_deterministic_and_distinct():
    seq = CollectiveSequence.iid(IndependentProduct((Uniform(0, 1), Uniform(0, 1))))
    a = draw_experiment(seq, 50, StreamId(9).child(0))
    b = draw_experiment(seq, 50, StreamId(9).child(0))
    c = draw_experiment(seq, 50, StreamId(9).child(1))
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_heterogeneous_draw_uses_per_collective_streams():
    m0 = DiscreteCells(points=[[0.0]], probs=[1.0])
    m1 = IndependentProduct((Uniform(0, 1),))
    seq_a = CollectiveSequence.explicit((m0, m1))
    seq_b = CollectiveSequence.explicit((m1, m1))
    # collective 1 draws identically whatever model sits at position 0
    a = draw_experiment(seq_a, 2, StreamId(4))
    b = draw_experiment(seq_b, 2, StreamId(4))
    assert a.points[1, 0] == b.points[1, 0]


def test_draw_unbiasedness_probe():
    fgm = FgmCopula2D(Uniform(0, 1), Uniform(0, 1), 0.9)
    seq = CollectiveSequence.iid(fgm)
    rep = draw_experiment(seq, 20000, StreamId(12))
    assert abs(rep.points[:, 0].mean() - 0.5) < 0.02
    xy = (rep.points[:, 0] * rep.points[:, 1]).mean()
    assert abs(xy - fgm.raw_moment((1, 1))) < 0.01


# ---------------------------------------------------------------------------
# partitions and discretization


def _unit_square_quarters():
    return CellPartition(
        lowers=[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]],
        uppers=[[0.5, 0.5], [1.0, 0.5], [0.5, 1.0], [1.0, 1.0]],
    )


def test_cell_partition_assign_half_open():
    part = _unit_square_quarters()
    idx = part.assign(np.array([[0.25, 0.25], [0.5, 0.25], [0.25, 0.5], [2.0, 2.0]]))
    assert idx.tolist() == [0, 1, 2, -1]


def test_cell_partition_rejects_overlap():
    with pytest.raises(ValueError):
        CellPartition(lowers=[[0.0, 0.0], [0.5, 0.5]],
                      uppers=[[1.0, 1.0], [1.5, 1.5]])


def test_discretize_repartition_counts():
    part = _unit_square_quarters()
    rep = Repartition(np.array([[0.1, 0.1], [0.6, 0.1], [0.6, 0.6], [0.7, 0.7]]))
    np.testing.assert_allclose(discretize(rep, part), [0.25, 0.25, 0.0, 0.5])


def test_discretize_model_inclusion_exclusion():
    part = _unit_square_quarters()
    m = IndependentProduct((Uniform(0, 1), Uniform(0, 1)))
    np.testing.assert_allclose(discretize(m, part), [0.25] * 4, atol=1e-12)
    fgm = FgmCopula2D(Uniform(0, 1), Uniform(0, 1), 0.9)
    probs = discretize(fgm, part)
    assert math.isclose(probs.sum(), 1.0, abs_tol=1e-9)
    # positive dependence loads the diagonal quarters
    assert probs[0] > 0.25 and probs[3] > 0.25
    assert probs[1] < 0.25 and probs[2] < 0.25
