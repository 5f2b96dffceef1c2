"""Directional derivative calculus for functionals of repartitions.

The derivative of f at V1 toward V is the ordinary derivative of
F(t) = f{V1 + t (V - V1)} at t = 0+.  For finite-support endpoints F is
evaluated exactly (all Stieltjes integrals are finite sums), which makes a
Richardson-extrapolated one-sided difference a trustworthy oracle for the
closed-form influence formulas.  First derivatives act on the perturbation
through sums of f'{V1, Y} against signed mass differences; second
derivatives only ever appear inside quadratic forms against zero-mass
signed measures.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .collectives import DiscreteCells, DistributionModel, Repartition, atoms_and_weights
from .errors import DimensionMismatch, VmfuncError
from .functionals import (
    CentralMoment,
    CompositeMoments,
    Correlation,
    DoubleIntegral,
    Functional,
    InfluenceData,
    Linear,
    MomentOracle,
    PairPolynomial,
    RawMoment,
    eval_on_model,
    eval_on_repartition,
    influence_at,
)
from .polynomials import Polynomial, monomial
from .streams import StreamId

__all__ = [
    "DirectionalPath",
    "NumericDerivative",
    "TaylorDecomposition",
    "ConsistencyRow",
    "directional_derivative_numeric",
    "influence_first",
    "influence_second",
    "influence_linear_form",
    "influence_quadratic_form",
    "taylor_decompose",
    "random_discrete_cells",
    "consistency_catalog",
    "derivative_consistency",
]

# one-sided steps 2^-7 .. 2^-12; t >= 0 only, the path is not defined leftward
DEFAULT_STEPS = tuple(2.0 ** -e for e in range(7, 13))


@dataclass(frozen=True)
class DirectionalPath:
    """Segment V1 + t (V - V1) between two finite-support models."""

    start: DistributionModel
    end: DistributionModel

    def __post_init__(self):
        if self.start.dim != self.end.dim:
            raise DimensionMismatch("path endpoints differ in dimension")
        a = atoms_and_weights(self.start)
        b = atoms_and_weights(self.end)
        if a is None or b is None:
            raise VmfuncError("both path endpoints need finite support")
        atoms = np.vstack([a[0], b[0]])
        w_start = np.concatenate([a[1], np.zeros(len(b[1]))])
        w_end = np.concatenate([np.zeros(len(a[1])), b[1]])
        object.__setattr__(self, "_atoms", atoms)
        object.__setattr__(self, "_w_start", w_start)
        object.__setattr__(self, "_w_end", w_end)

    @property
    def delta_atoms(self) -> np.ndarray:
        """Support of the signed measure V - V1."""
        return self._atoms

    @property
    def delta_masses(self) -> np.ndarray:
        """Signed masses of V - V1 on delta_atoms; they sum to zero."""
        return self._w_end - self._w_start

    def at(self, t: float) -> DiscreteCells:
        if not 0.0 <= t <= 1.0:
            raise ValueError("path parameter must lie in [0, 1]")
        return DiscreteCells(self._atoms, (1.0 - t) * self._w_start + t * self._w_end)


@dataclass(frozen=True)
class NumericDerivative:
    """Extrapolated one-sided derivative with its tableau error estimate."""

    value: float
    error_estimate: float
    order: int


def directional_derivative_numeric(
    f: Functional,
    path: DirectionalPath,
    order: int = 1,
    steps: tuple[float, ...] = DEFAULT_STEPS,
    tolerance: float | None = None,
) -> NumericDerivative:
    """d^order/dt^order f{V1 + t (V - V1)} at t = 0+ by Richardson extrapolation.

    Forward stencils: (F(t)-F(0))/t for order one and
    (F(2t) - 2 F(t) + F(0))/t^2 for order two, both with error series in
    integer powers of t, extrapolated over halving steps.  The returned
    estimate tracks the best tableau entry; if ``tolerance`` is given and
    the estimate exceeds it, a RuntimeWarning reports the non-convergence.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    steps = tuple(float(s) for s in steps)
    if len(steps) < 2 or any(s <= 0 for s in steps):
        raise ValueError("need at least two positive steps")
    for a, b in zip(steps, steps[1:]):
        if not np.isclose(a / b, 2.0):
            raise ValueError("steps must halve between entries")
    if order == 2 and 2.0 * steps[0] > 1.0:
        raise ValueError("second-order stencil needs 2*steps[0] <= 1")

    cache: dict[float, float] = {}

    def F(t: float) -> float:
        if t not in cache:
            cache[t] = eval_on_model(f, path.at(t), method="exact").value
        return cache[t]

    f0 = F(0.0)
    if order == 1:
        first_col = [(F(t) - f0) / t for t in steps]
    else:
        first_col = [(F(2.0 * t) - 2.0 * F(t) + f0) / t ** 2 for t in steps]

    best = first_col[-1]
    best_err = abs(first_col[-1] - first_col[-2])
    rows: list[list[float]] = [[first_col[0]]]
    for i in range(1, len(first_col)):
        row = [first_col[i]]
        for j in range(1, i + 1):
            factor = 2.0 ** j
            row.append((factor * row[j - 1] - rows[i - 1][j - 1]) / (factor - 1.0))
        for j in range(1, i + 1):
            err = abs(row[j] - row[j - 1]) + abs(row[j] - rows[i - 1][j - 1])
            if err <= best_err:
                best, best_err = row[j], err
        rows.append(row)

    if tolerance is not None and best_err > tolerance:
        warnings.warn(
            f"directional derivative tableau did not converge: "
            f"error estimate {best_err:.3e} above tolerance {tolerance:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return NumericDerivative(float(best), float(best_err), order)


# ---------------------------------------------------------------------------
# analytic influence evaluation


def influence_first(f: Functional, v: DistributionModel, y,
                    budget: int = 0, stream: StreamId | None = None) -> float:
    """f'{V, Y}: first-derivative influence of a unit mass at y."""
    data = influence_at(f, v, budget=budget, stream=stream, with_kernel=False)
    y = np.asarray(y, dtype=float)
    if y.shape != (f.dim,):
        raise DimensionMismatch(f"expected a point of dimension {f.dim}")
    return float(np.asarray(data.first_fn(y[None, :]))[0])


def influence_second(f: Functional, v: DistributionModel, y, z,
                     budget: int = 0, stream: StreamId | None = None) -> float:
    """f''{V, Y, Z}, the gauge-reduced two-point kernel."""
    data = influence_at(f, v, budget=budget, stream=stream)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != (f.dim,) or z.shape != (f.dim,):
        raise DimensionMismatch(f"expected points of dimension {f.dim}")
    return float(data.kernel.values(y[None, :], z[None, :])[0, 0])


def influence_linear_form(data: InfluenceData, atoms: np.ndarray, masses: np.ndarray) -> float:
    """Sum of f'{V, Y} against a signed atomic measure."""
    vals = np.asarray(data.first_fn(np.atleast_2d(atoms)), dtype=float)
    return float(vals @ np.asarray(masses, dtype=float))


def influence_quadratic_form(data: InfluenceData, atoms: np.ndarray, masses: np.ndarray) -> float:
    """Double sum of f''{V, Y, Z} against one signed atomic measure twice."""
    m = np.asarray(masses, dtype=float)
    grid = data.kernel.values(np.atleast_2d(atoms), np.atleast_2d(atoms))
    return float(m @ grid @ m)


# ---------------------------------------------------------------------------
# Taylor decomposition


@dataclass(frozen=True)
class TaylorDecomposition:
    """Scaled split f{S_n} - f{V_n} = linear term + remainder.

    a_n = h_n (f{S_n} - f{V_n}); b_n is the same expression with f
    replaced by its first-order expansion around V_n, i.e. the average of
    f'{V_n, X_nu} over the sample minus its V_n-mean; the remainder is the
    exact difference a_n - b_n.
    """

    a_n: float
    b_n: float
    remainder: float
    h_n: float


def taylor_decompose(f: Functional, s_n: Repartition, v_n: DistributionModel,
                     h_n: float, budget: int = 0,
                     stream: StreamId | None = None) -> TaylorDecomposition:
    if f.dim != s_n.dim or f.dim != v_n.dim:
        raise DimensionMismatch("functional, repartition and model dimensions must agree")
    oracle = MomentOracle(v_n, budget=budget, stream=stream)
    f_s = f.value_on_points(s_n.points)
    f_v = f.value_on_oracle(oracle).value
    poly = f.influence_poly(oracle)
    fn = f.influence_fn(oracle)
    if poly is not None:
        mean_term = oracle.poly_mean(poly).value
    else:
        mean_term = oracle.fn_mean(fn).value
    sample_mean = float(np.asarray(fn(s_n.points), dtype=float).mean())
    a_n = h_n * (f_s - f_v)
    b_n = h_n * (sample_mean - mean_term)
    return TaylorDecomposition(a_n, b_n, a_n - b_n, h_n)


# ---------------------------------------------------------------------------
# consistency harness: analytic influence forms against the numeric oracle


def _prod_sq_value(v):
    return float(v[0] * v[1] ** 2)


def _prod_sq_grad(v):
    return np.array([v[1] ** 2, 2.0 * v[0] * v[1]])


def _prod_sq_hess(v):
    return np.array([[0.0, 2.0 * v[1]], [2.0 * v[1], 2.0 * v[0]]])


def random_discrete_cells(rng: np.random.Generator, dim: int, n_atoms: int,
                          scale: float = 1.0, min_std: float = 0.0) -> DiscreteCells:
    """Random finite-support model: Gaussian atoms, Dirichlet masses.

    ``min_std`` rejects draws whose marginal standard deviation falls below
    the floor on any axis.  Mixtures of two floored models keep the floor
    (mixture variance is at least the smaller component variance), so a
    segment between two such endpoints stays inside the region where
    variance-normalized functionals are smooth.
    """
    for _ in range(200):
        pts = rng.normal(0.0, scale, size=(n_atoms, dim))
        probs = rng.dirichlet(np.ones(n_atoms))
        if min_std > 0.0:
            mean = probs @ pts
            var = probs @ pts ** 2 - mean ** 2
            if (var < min_std ** 2).any():
                continue
        return DiscreteCells(points=pts, probs=probs)
    raise VmfuncError("no well-conditioned finite-support draw in 200 tries")


def consistency_catalog() -> tuple[tuple[str, Functional], ...]:
    """Named functionals covering every kind with analytic derivatives.

    Central moments go up to total order 4 in up to three variables; the
    double integral uses a deliberately non-symmetric polynomial kernel so
    the symmetrized influence formula is actually exercised.
    """
    linear_poly = (
        monomial(3, (1, 0, 0), 2.0)
        + monomial(3, (0, 1, 0), -1.0)
        + monomial(3, (0, 0, 2), 0.5)
        + monomial(3, (0, 0, 0), 1.0)
    )
    di_kernel = (
        monomial(4, (1, 0, 0, 2), 1.0)
        + monomial(4, (0, 1, 1, 0), -0.5)
        + monomial(4, (2, 0, 0, 0), 0.25)
    )
    composite = CompositeMoments(
        integrands=(monomial(2, (1, 1)), monomial(2, (1, 0))),
        func=_prod_sq_value,
        grad=_prod_sq_grad,
        hess=_prod_sq_hess,
    )
    return (
        ("linear-poly-3d", Linear(linear_poly)),
        ("raw-moment-21", RawMoment((2, 1))),
        ("central-moment-2", CentralMoment((2,))),
        ("central-moment-11", CentralMoment((1, 1))),
        ("central-moment-21", CentralMoment((2, 1))),
        ("central-moment-112", CentralMoment((1, 1, 2))),
        ("correlation", Correlation()),
        ("double-integral-poly", DoubleIntegral(PairPolynomial(di_kernel, 2), 2)),
        ("composite-ab2", composite),
    )


@dataclass(frozen=True)
class ConsistencyRow:
    functional: str
    order: int
    pairs: int
    max_rel_error: float


def derivative_consistency(entries=None, pairs: int = 50,
                           stream: StreamId | None = None,
                           orders: tuple[int, ...] = (1, 2),
                           atom_range: tuple[int, int] = (3, 7),
                           min_std: float = 0.3) -> list[ConsistencyRow]:
    """Worst relative disagreement between influence forms and the oracle.

    For each functional and each random pair of finite-support models, the
    directional derivative along their segment is computed once numerically
    and once from the analytic influence representation; errors are
    relative to max(1, |numeric|).  Endpoint models keep their marginal
    standard deviations above ``min_std`` so paths stay clear of the
    degenerate-variance boundary where normalized functionals stop being
    differentiable.
    """
    if entries is None:
        entries = consistency_catalog()
    stream = stream if stream is not None else StreamId(0)
    rows = []
    for idx, (name, f) in enumerate(entries):
        rng = stream.child(idx).generator()
        worst = {order: 0.0 for order in orders}
        for _ in range(pairs):
            n_a = int(rng.integers(atom_range[0], atom_range[1] + 1))
            n_b = int(rng.integers(atom_range[0], atom_range[1] + 1))
            path = DirectionalPath(
                random_discrete_cells(rng, f.dim, n_a, min_std=min_std),
                random_discrete_cells(rng, f.dim, n_b, min_std=min_std),
            )
            data = influence_at(f, path.start, with_kernel=2 in orders)
            for order in orders:
                numeric = directional_derivative_numeric(f, path, order=order).value
                if order == 1:
                    analytic = influence_linear_form(data, path.delta_atoms, path.delta_masses)
                else:
                    analytic = influence_quadratic_form(data, path.delta_atoms, path.delta_masses)
                err = abs(numeric - analytic) / max(1.0, abs(numeric))
                worst[order] = max(worst[order], err)
        for order in orders:
            rows.append(ConsistencyRow(name, order, pairs, worst[order]))
    return rows
