import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from vmfunc.collectives import (
    DiscreteCells,
    FgmCopula2D,
    IndependentProduct,
    Uniform,
)
from vmfunc.errors import (
    DegenerateVariance,
    DimensionMismatch,
    MomentUnavailable,
    NoAnalyticDerivative,
    SimplexViolation,
)
from vmfunc.functionals import (
    CentralMoment,
    CompositeMoments,
    Correlation,
    DoubleIntegral,
    Linear,
    MomentOracle,
    PairPolynomial,
    RawMoment,
    ZeroKernel,
    eval_on_model,
    eval_on_repartition,
    frequencies_as_function,
    influence_at,
    linear_arithmetic,
    quadratic_arithmetic,
)
from vmfunc.collectives import Repartition
from vmfunc.polynomials import constant, coordinate, monomial
from vmfunc.streams import StreamId


def small_points(rng, n=40, dim=2):
    return rng.normal(size=(n, dim)) * np.array([1.5, 0.7][:dim]) + 0.3


# ---------------------------------------------------------------------------
# sample-side evaluation against plain numpy formulas


def test_raw_moment_matches_numpy():
    rng = np.random.default_rng(11)
    pts = small_points(rng)
    f = RawMoment((2, 1))
    want = float((pts[:, 0] ** 2 * pts[:, 1]).mean())
    assert math.isclose(f.value_on_points(pts), want, rel_tol=1e-13)


def test_central_moment_order2_is_population_variance():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(75, 1)) * 2.0 + 5.0
    v = CentralMoment((2,)).value_on_points(pts)
    assert math.isclose(v, float(np.var(pts[:, 0])), rel_tol=1e-12)


def test_central_moment_mixed_is_population_covariance():
    rng = np.random.default_rng(13)
    pts = small_points(rng, n=60)
    v = CentralMoment((1, 1)).value_on_points(pts)
    want = float(np.cov(pts.T, ddof=0)[0, 1])
    assert math.isclose(v, want, rel_tol=1e-11, abs_tol=1e-13)


def test_correlation_matches_numpy_corrcoef():
    rng = np.random.default_rng(14)
    x = rng.normal(size=80)
    pts = np.column_stack([x, 0.6 * x + rng.normal(size=80)])
    r = Correlation().value_on_points(pts)
    assert math.isclose(r, float(np.corrcoef(pts.T)[0, 1]), rel_tol=1e-12)


def test_correlation_degenerate_sample_raises():
    pts = np.column_stack([np.ones(10), np.arange(10.0)])
    with pytest.raises(DegenerateVariance):
        Correlation().value_on_points(pts)


def test_linear_functional_with_polynomial_weight():
    pts = np.array([[0.0, 1.0], [2.0, 3.0]])
    w = 2.0 * coordinate(2, 0) - coordinate(2, 1) + constant(2, 1.0)
    f = Linear(w)
    assert math.isclose(f.value_on_points(pts), float(w(pts).mean()), rel_tol=1e-15)
    # weight acting through a plain callable must agree
    g = Linear(lambda p: 2.0 * p[..., 0] - p[..., 1] + 1.0, dim_hint=2)
    assert math.isclose(g.value_on_points(pts), f.value_on_points(pts), rel_tol=1e-15)


def test_linear_callable_weight_needs_dim_hint():
    with pytest.raises(ValueError):
        Linear(lambda p: p[..., 0])


def test_dimension_mismatch_on_points():
    with pytest.raises(DimensionMismatch):
        RawMoment((1, 1)).value_on_points(np.zeros((4, 3)))


def test_eval_on_repartition_checks_dim():
    rep = Repartition(np.zeros((3, 2)))
    assert eval_on_repartition(RawMoment((1, 0)), rep) == 0.0
    with pytest.raises(DimensionMismatch):
        eval_on_repartition(RawMoment((1,)), rep)


def test_double_integral_v_statistic_equals_double_loop():
    rng = np.random.default_rng(15)
    pts = small_points(rng, n=14)

    def psi(x, y):
        return x[..., 0] * y[..., 1] ** 2 - 0.5 * x[..., 1] * y[..., 0]

    f = DoubleIntegral(psi, 2)
    total = 0.0
    for i in range(len(pts)):
        for j in range(len(pts)):
            total += psi(pts[i], pts[j])
    want = total / len(pts) ** 2
    assert math.isclose(f.value_on_points(pts), want, rel_tol=1e-12)


def test_pair_polynomial_matches_direct_kernel():
    poly = monomial(4, (1, 0, 0, 2)) - 0.5 * monomial(4, (0, 1, 1, 0))
    pp = PairPolynomial(poly, 2)
    rng = np.random.default_rng(16)
    x, y = rng.normal(size=2), rng.normal(size=2)
    want = x[0] * y[1] ** 2 - 0.5 * x[1] * y[0]
    assert math.isclose(float(pp(x, y)), want, rel_tol=1e-13)
    with pytest.raises(DimensionMismatch):
        PairPolynomial(poly, 3)


# ---------------------------------------------------------------------------
# model-side evaluation: exact paths and Monte Carlo fallback


def test_raw_moment_exact_on_atoms():
    cells = DiscreteCells(np.array([[0.0, 1.0], [2.0, 3.0], [1.0, 0.5]]),
                          np.array([0.5, 0.25, 0.25]))
    res = eval_on_model(RawMoment((1, 1)), cells)
    want = 0.5 * 0.0 * 1.0 + 0.25 * 2.0 * 3.0 + 0.25 * 1.0 * 0.5
    assert res.method == "exact-sum"
    assert res.standard_error == 0.0
    assert math.isclose(res.value, want, rel_tol=1e-15)


def test_fgm_correlation_closed_form_and_sampling_cross_check():
    # theta/3 for uniform marginals: cov = theta/36 over var = 1/12
    model = FgmCopula2D(Uniform(0.0, 1.0), Uniform(0.0, 1.0), 0.9)
    res = eval_on_model(Correlation(), model)
    assert res.method == "exact-moments"
    assert math.isclose(res.value, 0.3, rel_tol=1e-12)
    # independent route: estimate from a large simulated sample
    pts = model.sample(StreamId(909).generator(), 40_000)
    assert abs(float(np.corrcoef(pts.T)[0, 1]) - 0.3) < 0.02


def test_fgm_cross_moment_agrees_with_quadrature():
    theta = 0.7
    model = FgmCopula2D(Uniform(0.0, 1.0), Uniform(0.0, 1.0), theta)
    oracle = MomentOracle(model)
    # density of the copula is 1 + theta(1-2u)(1-2v) on the unit square
    want, err = integrate.dblquad(
        lambda v, u: u * v * (1.0 + theta * (1.0 - 2.0 * u) * (1.0 - 2.0 * v)),
        0.0, 1.0, 0.0, 1.0,
    )
    assert abs(oracle.raw_exact((1, 1)) - want) < 10 * err + 1e-12


def test_double_integral_exact_sum_on_atoms():
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [2.0, 1.0]])
    wts = np.array([0.2, 0.5, 0.3])
    cells = DiscreteCells(pts, wts)

    def psi(x, y):
        return x[..., 0] * y[..., 1]

    res = eval_on_model(DoubleIntegral(psi, 2), cells)
    want = sum(
        wts[i] * wts[j] * pts[i, 0] * pts[j, 1]
        for i in range(3) for j in range(3)
    )
    assert res.method == "exact-sum"
    assert math.isclose(res.value, want, rel_tol=1e-14)


def test_double_integral_influence_on_atoms():
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [2.0, 1.0]])
    wts = np.array([0.2, 0.5, 0.3])

    def psi(x, y):
        return x[..., 0] * y[..., 1] ** 2

    data = influence_at(DoubleIntegral(psi, 2), DiscreteCells(pts, wts))
    y = np.array([[0.7, -0.4]])
    want = sum(w * (psi(p, y[0]) + psi(y[0], p)) for p, w in zip(pts, wts))
    assert math.isclose(float(data.first_fn(y)[0]), want, rel_tol=1e-13)
    # second kernel is twice the raw kernel, symmetrized only through use
    z = np.array([[1.1, 0.2]])
    assert math.isclose(
        float(data.kernel.values(y, z)[0, 0]), 2.0 * psi(y[0], z[0]), rel_tol=1e-13
    )


def test_double_integral_influence_needs_finite_support():
    model = IndependentProduct((Uniform(0.0, 1.0), Uniform(0.0, 1.0)))

    def psi(x, y):
        return x[..., 0] * y[..., 1]

    with pytest.raises(NoAnalyticDerivative):
        DoubleIntegral(psi, 2).influence_fn(MomentOracle(model))


def test_composite_variance_agrees_with_central_moment():
    x = coordinate(1, 0)
    comp = CompositeMoments(
        integrands=(x, x * x),
        func=lambda v: v[1] - v[0] ** 2,
        grad=lambda v: np.array([-2.0 * v[0], 1.0]),
        hess=lambda v: np.array([[-2.0, 0.0], [0.0, 0.0]]),
    )
    rng = np.random.default_rng(17)
    pts = rng.normal(size=(50, 1)) + 1.7
    cm = CentralMoment((2,))
    assert math.isclose(comp.value_on_points(pts), cm.value_on_points(pts), rel_tol=1e-12)

    cells = DiscreteCells(np.array([[0.0], [1.0], [3.0]]), np.array([0.5, 0.3, 0.2]))
    res_a = eval_on_model(comp, cells)
    res_b = eval_on_model(cm, cells)
    assert math.isclose(res_a.value, res_b.value, rel_tol=1e-14)

    # influence polys agree up to an additive constant (the gauge term)
    oracle = MomentOracle(cells)
    diff = comp.influence_poly(oracle) - cm.influence_poly(oracle)
    assert diff.total_degree <= 0


def test_composite_hessian_shape_is_checked():
    x = coordinate(1, 0)
    comp = CompositeMoments(
        integrands=(x,),
        func=lambda v: float(v[0]),
        grad=lambda v: np.array([1.0]),
        hess=lambda v: np.zeros((2, 2)),
    )
    cells = DiscreteCells(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        comp.second_kernel(MomentOracle(cells))


def test_linear_second_kernel_is_zero():
    cells = DiscreteCells(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    data = influence_at(RawMoment((2,)), cells)
    assert isinstance(data.kernel, ZeroKernel)
    assert np.all(data.kernel.values(np.zeros((3, 1)), np.ones((2, 1))) == 0.0)


def test_oracle_shares_one_sample_across_queries():
    model = IndependentProduct((Uniform(0.0, 1.0),))
    oracle = MomentOracle(model, budget=500, stream=StreamId(21), allow_exact=False)
    a = oracle.poly_mean(coordinate(1, 0))
    b = oracle.poly_mean(constant(1, 1.0) - coordinate(1, 0))
    assert a.method == "monte-carlo" and b.method == "monte-carlo"
    # same cached sample, so the two estimates are exactly complementary
    assert math.isclose(a.value + b.value, 1.0, rel_tol=1e-12)
    assert oracle.draws() is oracle.draws()


def test_oracle_moment_order_limit_and_fallback():
    model = FgmCopula2D(Uniform(0.0, 1.0), Uniform(0.0, 1.0), 0.5)
    bare = MomentOracle(model)
    assert math.isclose(bare.raw_exact((1, 0)), 0.5, rel_tol=1e-13)
    with pytest.raises(MomentUnavailable):
        bare.raw_exact((9, 0))
    with pytest.raises(MomentUnavailable):
        bare.draws()
    budgeted = MomentOracle(model, budget=4000, stream=StreamId(33))
    est = budgeted.raw((9, 0))
    assert abs(est - 0.1) < 0.05  # E[u^9] = 1/10 for uniform


def test_oracle_without_stream_raises():
    model = IndependentProduct((Uniform(0.0, 1.0),))
    with pytest.raises(MomentUnavailable):
        MomentOracle(model, budget=100, stream=None, allow_exact=False).draws()


def test_eval_on_model_method_selection():
    cells = DiscreteCells(np.array([[0.0], [2.0]]), np.array([0.5, 0.5]))
    exact = eval_on_model(RawMoment((1,)), cells, method="exact")
    assert exact.method == "exact-sum" and exact.value == 1.0
    mc = eval_on_model(RawMoment((1,)), cells, budget=800, stream=StreamId(5),
                       method="monte-carlo")
    assert mc.method == "monte-carlo"
    assert abs(mc.value - 1.0) < 5 * mc.standard_error + 0.2
    with pytest.raises(ValueError):
        eval_on_model(RawMoment((1,)), cells, method="bogus")


def test_monte_carlo_correlation_reports_standard_error():
    model = FgmCopula2D(Uniform(0.0, 1.0), Uniform(0.0, 1.0), 0.9)
    res = eval_on_model(Correlation(), model, budget=3000, stream=StreamId(77),
                        method="monte-carlo")
    assert res.method == "monte-carlo"
    assert res.standard_error > 0.0
    assert abs(res.value - 0.3) < 6 * res.standard_error + 0.05


# ---------------------------------------------------------------------------
# arithmetic functions of frequencies


def test_frequencies_linear_and_quadratic():
    rho = np.array([0.25, 0.25, 0.5])
    assert math.isclose(frequencies_as_function([1.0, 2.0, 4.0], rho), 2.75, rel_tol=1e-15)
    f = linear_arithmetic([1.0, 2.0, 4.0])
    assert math.isclose(frequencies_as_function(f, rho), 2.75, rel_tol=1e-15)
    np.testing.assert_allclose(f.gradient(rho), [1.0, 2.0, 4.0])
    q = quadratic_arithmetic([1.0, 1.0, 1.0])
    assert math.isclose(frequencies_as_function(q, rho), 0.375, rel_tol=1e-15)
    np.testing.assert_allclose(q.gradient(rho), 2.0 * rho)


def test_frequencies_simplex_violations():
    with pytest.raises(SimplexViolation):
        frequencies_as_function([1.0], np.array([0.5, 0.6]))
    with pytest.raises(SimplexViolation):
        frequencies_as_function([1.0, 1.0], np.array([-0.1, 1.1]))
    with pytest.raises(SimplexViolation):
        frequencies_as_function([1.0], np.array([[1.0]]))
    # tiny negative mass inside tolerance is accepted
    val = frequencies_as_function([1.0, 1.0], np.array([-1e-15, 1.0 + 1e-15]))
    assert math.isclose(val, 1.0, rel_tol=1e-12)


# ---------------------------------------------------------------------------
# structural invariances of the sample-side formulas


point_lists = st.lists(
    st.tuples(
        st.floats(min_value=-5.0, max_value=5.0, allow_nan=False),
        st.floats(min_value=-5.0, max_value=5.0, allow_nan=False),
    ),
    min_size=3,
    max_size=12,
)


@settings(deadline=None, max_examples=40)
@given(point_lists, st.integers(min_value=0, max_value=2 ** 31))
def test_value_invariant_under_point_permutation(rows, seed):
    pts = np.array(rows, dtype=float)
    perm = np.random.default_rng(seed).permutation(len(pts))
    for f in (RawMoment((2, 1)), CentralMoment((1, 1)), CentralMoment((2, 0))):
        a = f.value_on_points(pts)
        b = f.value_on_points(pts[perm])
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


@settings(deadline=None, max_examples=40)
@given(point_lists, st.integers(min_value=2, max_value=4))
def test_value_invariant_under_replication(rows, copies):
    pts = np.array(rows, dtype=float)
    tiled = np.tile(pts, (copies, 1))
    for f in (RawMoment((1, 2)), CentralMoment((2, 1))):
        a = f.value_on_points(pts)
        b = f.value_on_points(tiled)
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


@settings(deadline=None, max_examples=40)
@given(
    point_lists,
    st.floats(min_value=-10.0, max_value=10.0, allow_nan=False),
    st.floats(min_value=-10.0, max_value=10.0, allow_nan=False),
)
def test_central_moments_are_translation_invariant(rows, cx, cy):
    pts = np.array(rows, dtype=float)
    shifted = pts + np.array([cx, cy])
    f = CentralMoment((2, 1))
    assert math.isclose(
        f.value_on_points(pts), f.value_on_points(shifted), rel_tol=1e-7, abs_tol=1e-7
    )


@settings(deadline=None, max_examples=40)
@given(point_lists, st.floats(min_value=0.1, max_value=3.0, allow_nan=False))
def test_central_moment_scale_equivariance(rows, c):
    pts = np.array(rows, dtype=float)
    f = CentralMoment((2, 0))
    a = f.value_on_points(pts * np.array([c, 1.0]))
    assert math.isclose(a, c * c * f.value_on_points(pts), rel_tol=1e-9, abs_tol=1e-12)
