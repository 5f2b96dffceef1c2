import math

import numpy as np
import pytest

from vmfunc.collectives import DiscreteCells, IndependentProduct, Repartition, Uniform
from vmfunc.errors import DimensionMismatch, VmfuncError
from vmfunc.functionals import (
    CallablePairKernel,
    CentralMoment,
    Correlation,
    DoubleIntegral,
    InfluenceData,
    Linear,
    RawMoment,
    eval_on_model,
    influence_at,
    _corr_grad,
    _corr_hess,
    _corr_value,
)
from vmfunc.polynomials import constant, coordinate
from vmfunc.streams import StreamId
from vmfunc.vmcalc import (
    DirectionalPath,
    consistency_catalog,
    derivative_consistency,
    directional_derivative_numeric,
    influence_first,
    influence_linear_form,
    influence_quadratic_form,
    influence_second,
    random_discrete_cells,
    taylor_decompose,
)


def two_models(seed=0, dim=2):
    rng = np.random.default_rng(seed)
    return (
        random_discrete_cells(rng, dim, 4, min_std=0.3),
        random_discrete_cells(rng, dim, 5, min_std=0.3),
    )


# ---------------------------------------------------------------------------
# the segment between models


def test_path_endpoints_and_zero_mass_difference():
    a, b = two_models(1)
    path = DirectionalPath(a, b)
    assert math.isclose(path.delta_masses.sum(), 0.0, abs_tol=1e-12)
    assert math.isclose(path.at(0.5).probs.sum(), 1.0, rel_tol=1e-12)
    f = RawMoment((1, 1))
    start_val = float((a.probs * a.points[:, 0] * a.points[:, 1]).sum())
    assert math.isclose(eval_on_model(f, path.at(0.0)).value, start_val, rel_tol=1e-12)
    with pytest.raises(ValueError):
        path.at(1.5)
    with pytest.raises(ValueError):
        path.at(-0.1)


def test_path_rejects_bad_endpoints():
    a, _ = two_models(2)
    one_d = DiscreteCells(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    with pytest.raises(DimensionMismatch):
        DirectionalPath(a, one_d)
    cont = IndependentProduct((Uniform(0.0, 1.0), Uniform(0.0, 1.0)))
    with pytest.raises(VmfuncError):
        DirectionalPath(a, cont)


# ---------------------------------------------------------------------------
# the numeric oracle itself


def test_numeric_derivative_exact_for_linear_functional():
    a, b = two_models(3)
    f = Linear(2.0 * coordinate(2, 0) - coordinate(2, 1) + constant(2, 0.5))
    path = DirectionalPath(a, b)
    # F(t) is affine in t, so the slope is the endpoint difference
    want = eval_on_model(f, b).value - eval_on_model(f, a).value
    d1 = directional_derivative_numeric(f, path, order=1)
    assert math.isclose(d1.value, want, rel_tol=1e-10, abs_tol=1e-10)
    d2 = directional_derivative_numeric(f, path, order=2)
    assert abs(d2.value) < 1e-8


def test_numeric_derivative_validates_arguments():
    a, b = two_models(4)
    path = DirectionalPath(a, b)
    f = RawMoment((1, 0))
    with pytest.raises(ValueError):
        directional_derivative_numeric(f, path, order=3)
    with pytest.raises(ValueError):
        directional_derivative_numeric(f, path, steps=(0.1, 0.07))
    with pytest.raises(ValueError):
        directional_derivative_numeric(f, path, steps=(0.1,))
    with pytest.raises(ValueError):
        directional_derivative_numeric(f, path, order=2, steps=(0.8, 0.4, 0.2))


def test_numeric_derivative_warns_when_asked_for_impossible_accuracy():
    a, b = two_models(5)
    path = DirectionalPath(a, b)
    with pytest.warns(RuntimeWarning):
        directional_derivative_numeric(Correlation(), path, order=2, tolerance=1e-300)


# ---------------------------------------------------------------------------
# analytic influence values


def test_variance_influence_point_values():
    cells = DiscreteCells(np.array([[0.0], [1.0], [4.0]]), np.array([0.5, 0.25, 0.25]))
    mean = 0.5 * 0.0 + 0.25 * 1.0 + 0.25 * 4.0
    f = CentralMoment((2,))
    # f'{V, y} = (y - a)^2; the recentring term vanishes because the first
    # central moment is identically zero
    for y in (2.0, -0.5, mean):
        got = influence_first(f, cells, [y])
        assert math.isclose(got, (y - mean) ** 2, rel_tol=1e-12, abs_tol=1e-12)


def test_variance_second_derivative_is_minus_two_yz():
    # gauge-reduced kernel of the variance: f''{V, y, z} = -2 y z for any base
    for seed in (6, 7):
        base, _ = two_models(seed, dim=1)
        for y, z in ((0.3, -1.2), (2.0, 0.5)):
            got = influence_second(CentralMoment((2,)), base, [y], [z])
            assert math.isclose(got, -2.0 * y * z, rel_tol=1e-10, abs_tol=1e-12)


def test_influence_point_shape_is_checked():
    base, _ = two_models(8)
    with pytest.raises(DimensionMismatch):
        influence_first(RawMoment((1, 1)), base, [1.0])
    with pytest.raises(DimensionMismatch):
        influence_second(RawMoment((1, 1)), base, [1.0, 2.0], [1.0])


def test_quadratic_form_ignores_antisymmetric_kernels():
    base, _ = two_models(9, dim=1)

    def antisym(y, z):
        return y[..., 0] - z[..., 0]

    data = InfluenceData(
        functional=RawMoment((1,)),
        base=base,
        first_poly=None,
        first_fn=lambda p: p[..., 0],
        kernel=CallablePairKernel(antisym),
    )
    atoms = np.array([[0.0], [1.0], [3.0]])
    masses = np.array([0.2, -0.7, 0.5])
    assert math.isclose(influence_quadratic_form(data, atoms, masses), 0.0, abs_tol=1e-12)


# ---------------------------------------------------------------------------
# Taylor decomposition


def test_linear_functional_has_exactly_zero_remainder():
    rng = np.random.default_rng(10)
    v_n = random_discrete_cells(rng, 2, 5)
    pts = v_n.points[rng.integers(0, 5, size=30)]
    f = Linear(coordinate(2, 0) + 2.0 * coordinate(2, 1))
    dec = taylor_decompose(f, Repartition(pts), v_n, h_n=3.0)
    assert dec.remainder == 0.0
    assert dec.a_n == dec.b_n


def test_variance_remainder_equals_half_quadratic_form():
    # the variance is exactly quadratic in the repartition, so the Taylor
    # remainder must coincide with h/2 times the second-derivative form
    rng = np.random.default_rng(11)
    v_n = random_discrete_cells(rng, 1, 4, min_std=0.3)
    pts = rng.normal(0.4, 1.1, size=(40, 1))
    f = CentralMoment((2,))
    h_n = 3.7
    dec = taylor_decompose(f, Repartition(pts), v_n, h_n)
    atoms = np.vstack([pts, v_n.points])
    masses = np.concatenate([np.full(len(pts), 1.0 / len(pts)), -v_n.probs])
    data = influence_at(f, v_n)
    want = h_n * 0.5 * influence_quadratic_form(data, atoms, masses)
    assert math.isclose(dec.remainder, want, rel_tol=1e-9, abs_tol=1e-11)


def test_taylor_decompose_checks_dimensions():
    rng = np.random.default_rng(12)
    v_n = random_discrete_cells(rng, 2, 4)
    with pytest.raises(DimensionMismatch):
        taylor_decompose(RawMoment((1,)), Repartition(np.zeros((5, 2))), v_n, 1.0)


# ---------------------------------------------------------------------------
# correlation partials against finite differences


def corr_vals():
    return np.array([0.3, 0.2, -0.1, 1.3, 0.9])


def test_correlation_gradient_matches_finite_differences():
    v = corr_vals()
    g = _corr_grad(v)
    h = 1e-6
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        num = (_corr_value(v + e) - _corr_value(v - e)) / (2 * h)
        assert math.isclose(g[i], num, rel_tol=5e-6, abs_tol=5e-9)


def test_correlation_hessian_matches_finite_differences():
    v = corr_vals()
    hess = _corr_hess(v)
    np.testing.assert_allclose(hess, hess.T, rtol=1e-12)
    h = 1e-4
    for i in range(5):
        for j in range(5):
            ei, ej = np.zeros(5), np.zeros(5)
            ei[i], ej[j] = h, h
            num = (
                _corr_value(v + ei + ej)
                - _corr_value(v + ei - ej)
                - _corr_value(v - ei + ej)
                + _corr_value(v - ei - ej)
            ) / (4 * h * h)
            assert math.isclose(hess[i, j], num, rel_tol=2e-4, abs_tol=1e-6)


# ---------------------------------------------------------------------------
# random model generator and the consistency harness


def test_random_discrete_cells_honors_variance_floor():
    rng = np.random.default_rng(13)
    for _ in range(10):
        m = random_discrete_cells(rng, 2, 4, min_std=0.5)
        mean = m.probs @ m.points
        var = m.probs @ m.points ** 2 - mean ** 2
        assert (var >= 0.25 - 1e-12).all()
        assert math.isclose(m.probs.sum(), 1.0, rel_tol=1e-12)


def test_catalog_covers_every_functional_kind():
    kinds = {type(f).__name__ for _, f in consistency_catalog()}
    assert {
        "Linear",
        "RawMoment",
        "CentralMoment",
        "Correlation",
        "DoubleIntegral",
        "CompositeMoments",
    } <= kinds


def test_derivative_consistency_full_catalog_pinned_seed():
    rows = derivative_consistency(pairs=6, stream=StreamId(101))
    gates = {1: 1e-6, 2: 1e-5}
    for row in rows:
        assert row.max_rel_error <= gates[row.order], (
            f"{row.functional} order {row.order}: {row.max_rel_error:.3e}"
        )


def test_consistency_is_reproducible_for_a_fixed_stream():
    entries = consistency_catalog()[2:3]  # just the plain variance
    a = derivative_consistency(entries, pairs=3, stream=StreamId(55))
    b = derivative_consistency(entries, pairs=3, stream=StreamId(55))
    assert a == b
