"""Statistical functionals of repartitions and their model-side evaluation.

Every functional evaluates two ways: on a repartition (a plain finite-sample
formula) and on a model, where exact moment fast paths are used whenever the
model declares them and a budgeted Monte Carlo estimate with a propagated
standard error is the fallback.  Moment-like functionals also expose their
influence representation: the first derivative as a polynomial in the
perturbing point and the second derivative as a polynomial kernel in a pair
of points, both with coefficients taken from moments of the base model.
Single-argument kernel terms are dropped (gauge reduction); they integrate
to zero against products of zero-mass signed measures, which is the only way
second derivatives enter any computation here.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .collectives import DistributionModel, Repartition, atoms_and_weights
from .errors import (
    DegenerateVariance,
    DimensionMismatch,
    MomentUnavailable,
    NoAnalyticDerivative,
    SimplexViolation,
)
from .polynomials import Polynomial, constant, coordinate, monomial
from .streams import StreamId

__all__ = [
    "EvalResult",
    "MomentOracle",
    "Functional",
    "Linear",
    "RawMoment",
    "CentralMoment",
    "Correlation",
    "DoubleIntegral",
    "CompositeMoments",
    "PairKernel",
    "InfluenceData",
    "influence_at",
    "eval_on_repartition",
    "eval_on_model",
    "ArithmeticFunction",
    "linear_arithmetic",
    "quadratic_arithmetic",
    "frequencies_as_function",
]


@dataclass(frozen=True)
class EvalResult:
    """Value of a functional on a model with its evaluation pedigree."""

    value: float
    standard_error: float
    method: str  # "exact-sum" | "exact-moments" | "monte-carlo"


class MomentOracle:
    """Expectations under one model, exact where declared.

    Exact paths: finite atom sets are summed directly and analytic models
    supply closed-form raw moments up to their declared order.  Anything
    else is estimated on a single shared Monte Carlo sample of ``budget``
    points drawn from ``stream``, so every quantity derived from one oracle
    is internally consistent and reproducible.
    """

    def __init__(self, model: DistributionModel, budget: int = 0,
                 stream: StreamId | None = None, allow_exact: bool = True):
        self.model = model
        self.budget = int(budget)
        self.stream = stream
        self.allow_exact = bool(allow_exact)
        self._atoms = atoms_and_weights(model) if allow_exact else None
        self._draws: np.ndarray | None = None

    @property
    def atoms(self) -> tuple[np.ndarray, np.ndarray] | None:
        return self._atoms

    def draws(self) -> np.ndarray:
        if self._draws is None:
            if self.budget <= 0:
                raise MomentUnavailable(
                    "no exact path for this expectation and no Monte Carlo budget"
                )
            if self.stream is None:
                raise MomentUnavailable("Monte Carlo fallback requires a stream id")
            self._draws = self.model.sample(self.stream.generator(), self.budget)
        return self._draws

    def raw_exact(self, exponents: tuple[int, ...]) -> float:
        if self.allow_exact:
            v = self.model.raw_moment(tuple(int(e) for e in exponents))
            if v is not None:
                return v
        raise MomentUnavailable(
            f"raw moment {tuple(exponents)} has no exact value for "
            f"{type(self.model).__name__}"
        )

    def raw(self, exponents: tuple[int, ...]) -> float:
        """Best available raw moment: exact, else mean over the shared sample."""
        try:
            return self.raw_exact(exponents)
        except MomentUnavailable:
            pts = self.draws()
            vals = np.ones(pts.shape[0])
            for axis, e in enumerate(exponents):
                if e:
                    vals = vals * pts[:, axis] ** int(e)
            return float(vals.mean())

    def poly_mean(self, poly: Polynomial) -> EvalResult:
        try:
            return self.poly_mean_exact(poly)
        except MomentUnavailable:
            vals = poly(self.draws())
            se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("inf")
            return EvalResult(float(vals.mean()), se, "monte-carlo")

    def poly_mean_exact(self, poly: Polynomial) -> EvalResult:
        if self._atoms is not None:
            pts, wts = self._atoms
            return EvalResult(float(poly(pts) @ wts), 0.0, "exact-sum")
        total = 0.0
        for exps, coef in poly.terms.items():
            total += coef * self.raw_exact(exps)
        return EvalResult(float(total), 0.0, "exact-moments")

    def fn_mean(self, fn: Callable[[np.ndarray], np.ndarray]) -> EvalResult:
        if self._atoms is not None:
            pts, wts = self._atoms
            return EvalResult(float(np.asarray(fn(pts)) @ wts), 0.0, "exact-sum")
        vals = np.asarray(fn(self.draws()), dtype=float)
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("inf")
        return EvalResult(float(vals.mean()), se, "monte-carlo")


# ---------------------------------------------------------------------------
# second-derivative kernels


class PairKernel(ABC):
    """Two-point kernel K(Y, Z); enters only through quadratic forms."""

    @abstractmethod
    def values(self, y_pts: np.ndarray, z_pts: np.ndarray) -> np.ndarray:
        """Evaluate on all pairs: (a, k) x (b, k) -> (a, b)."""


@dataclass(frozen=True)
class ZeroKernel(PairKernel):
    dim: int

    def values(self, y_pts, z_pts):
        return np.zeros((np.atleast_2d(y_pts).shape[0], np.atleast_2d(z_pts).shape[0]))


@dataclass(frozen=True)
class PolyPairKernel(PairKernel):
    """Kernel stored as a polynomial in the stacked (Y, Z) coordinates."""

    poly: Polynomial
    point_dim: int

    def values(self, y_pts, z_pts):
        y = np.atleast_2d(np.asarray(y_pts, dtype=float))
        z = np.atleast_2d(np.asarray(z_pts, dtype=float))
        a, b = y.shape[0], z.shape[0]
        stacked = np.concatenate(
            [
                np.broadcast_to(y[:, None, :], (a, b, self.point_dim)),
                np.broadcast_to(z[None, :, :], (a, b, self.point_dim)),
            ],
            axis=-1,
        )
        return self.poly(stacked)


@dataclass(frozen=True)
class CallablePairKernel(PairKernel):
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    factor: float = 1.0

    def values(self, y_pts, z_pts):
        y = np.atleast_2d(np.asarray(y_pts, dtype=float))
        z = np.atleast_2d(np.asarray(z_pts, dtype=float))
        return self.factor * np.asarray(
            self.fn(y[:, None, :], z[None, :, :]), dtype=float
        )


@dataclass(frozen=True)
class PairPolynomial:
    """A polynomial in stacked (X, Y) coordinates as a broadcasting pair map.

    Suitable as a DoubleIntegral kernel: called on two (..., k) coordinate
    arrays it broadcasts them against each other and evaluates the
    underlying 2k-variable polynomial.
    """

    poly: Polynomial
    point_dim: int

    def __post_init__(self):
        if self.poly.dim != 2 * self.point_dim:
            raise DimensionMismatch(
                f"pair polynomial needs {2 * self.point_dim} variables, got {self.poly.dim}"
            )

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        xx = np.broadcast_to(x, shape + (self.point_dim,))
        yy = np.broadcast_to(y, shape + (self.point_dim,))
        return self.poly(np.concatenate([xx, yy], axis=-1))


# ---------------------------------------------------------------------------
# functional kinds


class Functional(ABC):
    """A real functional of k-dimensional repartitions."""

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def value_on_points(self, pts: np.ndarray) -> float:
        ...

    @abstractmethod
    def value_on_oracle(self, oracle: MomentOracle) -> EvalResult:
        ...

    def influence_poly(self, oracle: MomentOracle) -> Polynomial | None:
        """First derivative as a polynomial in the perturbing point, if any."""
        raise NoAnalyticDerivative(f"{type(self).__name__} has no analytic first derivative")

    def influence_fn(self, oracle: MomentOracle) -> Callable[[np.ndarray], np.ndarray]:
        poly = self.influence_poly(oracle)
        if poly is None:
            raise NoAnalyticDerivative(f"{type(self).__name__} has no influence evaluator")
        return poly

    def second_kernel(self, oracle: MomentOracle) -> PairKernel:
        raise NoAnalyticDerivative(f"{type(self).__name__} has no analytic second derivative")

    def _mc_result(self, oracle: MomentOracle, value: float) -> EvalResult:
        """Monte Carlo EvalResult with a delta-method error from the influence."""
        pts = oracle.draws()
        try:
            vals = np.asarray(self.influence_fn(oracle)(pts), dtype=float)
            se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
        except NoAnalyticDerivative:
            se = float("nan")
        return EvalResult(float(value), se, "monte-carlo")

    def _check_pts(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[1] != self.dim:
            raise DimensionMismatch(
                f"functional of dimension {self.dim} applied to points of dimension {pts.shape[1]}"
            )
        return pts


@dataclass(frozen=True)
class Linear(Functional):
    """f{V} = integral of a fixed weight function against V."""

    weight: Polynomial | Callable[[np.ndarray], np.ndarray]
    dim_hint: int | None = None

    def __post_init__(self):
        if not isinstance(self.weight, Polynomial) and self.dim_hint is None:
            raise ValueError("a callable weight needs dim_hint")

    @property
    def dim(self):
        return self.weight.dim if isinstance(self.weight, Polynomial) else int(self.dim_hint)

    def _eval_weight(self, pts):
        return np.asarray(self.weight(pts), dtype=float)

    def value_on_points(self, pts):
        return float(self._eval_weight(self._check_pts(pts)).mean())

    def value_on_oracle(self, oracle):
        if isinstance(self.weight, Polynomial):
            return oracle.poly_mean(self.weight)
        return oracle.fn_mean(self._eval_weight)

    def influence_poly(self, oracle):
        return self.weight if isinstance(self.weight, Polynomial) else None

    def influence_fn(self, oracle):
        return self._eval_weight

    def second_kernel(self, oracle):
        return ZeroKernel(self.dim)


@dataclass(frozen=True)
class RawMoment(Functional):
    """f{V} = E_V[prod x_i^{v_i}]; a linear functional with monomial weight."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))
        if not self.exponents or any(e < 0 for e in self.exponents):
            raise ValueError("need a nonempty tuple of nonnegative exponents")

    @property
    def dim(self):
        return len(self.exponents)

    @property
    def _poly(self) -> Polynomial:
        return monomial(self.dim, self.exponents)

    def value_on_points(self, pts):
        return float(self._poly(self._check_pts(pts)).mean())

    def value_on_oracle(self, oracle):
        return oracle.poly_mean(self._poly)

    def influence_poly(self, oracle):
        return self._poly

    def second_kernel(self, oracle):
        return ZeroKernel(self.dim)


def _centered_product(dim: int, exponents: Sequence[int], center: Sequence[float]) -> Polynomial:
    out = constant(dim, 1.0)
    for axis, e in enumerate(exponents):
        if e:
            out = out * (coordinate(dim, axis) - float(center[axis])) ** int(e)
    return out


@dataclass(frozen=True)
class CentralMoment(Functional):
    """f{V} = E_V[prod (x_i - a_i)^{v_i}] with a_i the mean of coordinate i."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))
        if not self.exponents or any(e < 0 for e in self.exponents):
            raise ValueError("need a nonempty tuple of nonnegative exponents")
        if sum(self.exponents) < 1:
            raise ValueError("total order must be >= 1")

    @property
    def dim(self):
        return len(self.exponents)

    def value_on_points(self, pts):
        pts = self._check_pts(pts)
        centered = pts - pts.mean(axis=0)
        vals = np.ones(pts.shape[0])
        for axis, e in enumerate(self.exponents):
            if e:
                vals = vals * centered[:, axis] ** e
        return float(vals.mean())

    def _unit(self, axis: int) -> tuple[int, ...]:
        return tuple(1 if i == axis else 0 for i in range(self.dim))

    def _mean_vector(self, oracle, exact: bool) -> np.ndarray:
        getter = oracle.raw_exact if exact else oracle.raw
        return np.array([getter(self._unit(i)) for i in range(self.dim)])

    def _central(self, oracle, exponents, center, exact: bool) -> float:
        poly = _centered_product(self.dim, exponents, center)
        if exact:
            return oracle.poly_mean_exact(poly).value
        return oracle.poly_mean(poly).value

    def value_on_oracle(self, oracle):
        try:
            a = self._mean_vector(oracle, exact=True)
            poly = _centered_product(self.dim, self.exponents, a)
            return oracle.poly_mean_exact(poly)
        except MomentUnavailable:
            value = self.value_on_points(oracle.draws())
            return self._mc_result(oracle, value)

    def influence_poly(self, oracle):
        a = self._mean_vector(oracle, exact=False)
        poly = _centered_product(self.dim, self.exponents, a)
        for axis, v in enumerate(self.exponents):
            if v:
                reduced = tuple(e - 1 if i == axis else e for i, e in enumerate(self.exponents))
                m_red = self._central(oracle, reduced, a, exact=False)
                poly = poly - monomial(self.dim, self._unit(axis), v * m_red)
        return poly

    def second_kernel(self, oracle):
        k = self.dim
        a = self._mean_vector(oracle, exact=False)
        v = self.exponents
        kernel = Polynomial(2 * k, {})
        for i in range(k):
            if v[i] >= 2:
                reduced = tuple(e - 2 if ax == i else e for ax, e in enumerate(v))
                m2 = self._central(oracle, reduced, a, exact=False)
                kernel = kernel + (
                    coordinate(2 * k, i) * coordinate(2 * k, k + i) * (v[i] * (v[i] - 1) * m2)
                )
        for i in range(k):
            for j in range(k):
                if i != j and v[i] >= 1 and v[j] >= 1:
                    reduced = tuple(
                        e - (1 if ax == i else 0) - (1 if ax == j else 0)
                        for ax, e in enumerate(v)
                    )
                    m11 = self._central(oracle, reduced, a, exact=False)
                    kernel = kernel + (
                        coordinate(2 * k, i) * coordinate(2 * k, k + j) * (v[i] * v[j] * m11)
                    )
        for i in range(k):
            if v[i] >= 1:
                reduced = tuple(e - 1 if ax == i else e for ax, e in enumerate(v))
                pi = _centered_product(k, reduced, a).embed(2 * k, 0)
                kernel = kernel - 2.0 * v[i] * pi * coordinate(2 * k, k + i)
        return PolyPairKernel(kernel.drop_one_sided_pairs(k), k)


@dataclass(frozen=True)
class CompositeMoments(Functional):
    """f{V} = F(A, B, ...) for Stieltjes integrals A = E_V[alpha(X)], ...

    Integrands are polynomials, so mixed partial derivatives of any order
    are available symbolically and all expectations ride the moment fast
    paths.  Partials of F itself up to order two are supplied by the caller
    as callables on the vector of integral values; they are used verbatim,
    never approximated numerically.
    """

    integrands: tuple[Polynomial, ...]
    func: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray] | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "integrands", tuple(self.integrands))
        if not self.integrands:
            raise ValueError("need at least one integrand")
        dims = {p.dim for p in self.integrands}
        if len(dims) != 1:
            raise DimensionMismatch("integrands disagree on dimension")
        if not self.names:
            object.__setattr__(
                self, "names", tuple(chr(ord("A") + i) for i in range(len(self.integrands)))
            )

    @property
    def dim(self):
        return self.integrands[0].dim

    def _integral_values_exact(self, oracle) -> np.ndarray:
        return np.array([oracle.poly_mean_exact(p).value for p in self.integrands])

    def _integral_values_sample(self, pts) -> np.ndarray:
        return np.array([float(p(pts).mean()) for p in self.integrands])

    def value_on_points(self, pts):
        return float(self.func(self._integral_values_sample(self._check_pts(pts))))

    def value_on_oracle(self, oracle):
        try:
            vals = self._integral_values_exact(oracle)
            method = "exact-sum" if oracle.atoms is not None else "exact-moments"
            return EvalResult(float(self.func(vals)), 0.0, method)
        except MomentUnavailable:
            value = self.func(self._integral_values_sample(oracle.draws()))
            return self._mc_result(oracle, value)

    def _values_best(self, oracle) -> np.ndarray:
        try:
            return self._integral_values_exact(oracle)
        except MomentUnavailable:
            return self._integral_values_sample(oracle.draws())

    def influence_poly(self, oracle):
        g = np.asarray(self.grad(self._values_best(oracle)), dtype=float)
        out = Polynomial(self.dim, {})
        for gi, p in zip(g, self.integrands):
            out = out + gi * p
        return out

    def second_kernel(self, oracle):
        if self.hess is None:
            raise NoAnalyticDerivative("no second partials supplied for this composite")
        h = np.asarray(self.hess(self._values_best(oracle)), dtype=float)
        m, k = len(self.integrands), self.dim
        if h.shape != (m, m):
            raise ValueError(f"hessian shape {h.shape}, expected {(m, m)}")
        kernel = Polynomial(2 * k, {})
        embedded_y = [p.embed(2 * k, 0) for p in self.integrands]
        embedded_z = [p.embed(2 * k, k) for p in self.integrands]
        for i in range(m):
            for j in range(m):
                if h[i, j]:
                    kernel = kernel + h[i, j] * embedded_y[i] * embedded_z[j]
        return PolyPairKernel(kernel.drop_one_sided_pairs(k), k)

    def integrand_partial(self, index: int, axes: Sequence[int]) -> Polynomial:
        """Mixed partial of one integrand; axes lists each differentiation."""
        p = self.integrands[index]
        for axis in axes:
            p = p.partial(axis)
        return p


# correlation: F(A,B,C,D,E) = (A - BC) / sqrt((D - B^2)(E - C^2))
# with A = E[xy], B = E[x], C = E[y], D = E[x^2], E = E[y^2]

_DEGENERATE_MSG = "zero (or negative) variance in a correlation denominator"


def _corr_parts(vals):
    a, b, c, d, e = (float(x) for x in vals)
    return a - b * c, d - b * b, e - c * c


def _corr_value(vals) -> float:
    r, s, u = _corr_parts(vals)
    if s <= 0.0 or u <= 0.0:
        raise DegenerateVariance(_DEGENERATE_MSG)
    return r / math.sqrt(s * u)


def _corr_grad(vals) -> np.ndarray:
    a, b, c, d, e = (float(x) for x in vals)
    r, s, u = _corr_parts(vals)
    if s <= 0.0 or u <= 0.0:
        raise DegenerateVariance(_DEGENERATE_MSG)
    p = s ** -0.5 * u ** -0.5
    q3s = s ** -1.5 * u ** -0.5
    q3u = s ** -0.5 * u ** -1.5
    return np.array([
        p,
        -c * p + r * b * q3s,
        -b * p + r * c * q3u,
        -0.5 * r * q3s,
        -0.5 * r * q3u,
    ])


def _corr_hess(vals) -> np.ndarray:
    a, b, c, d, e = (float(x) for x in vals)
    r, s, u = _corr_parts(vals)
    if s <= 0.0 or u <= 0.0:
        raise DegenerateVariance(_DEGENERATE_MSG)
    p = s ** -0.5 * u ** -0.5
    q3s = s ** -1.5 * u ** -0.5
    q3u = s ** -0.5 * u ** -1.5
    q5s = s ** -2.5 * u ** -0.5
    q5u = s ** -0.5 * u ** -2.5
    q33 = s ** -1.5 * u ** -1.5
    h = np.zeros((5, 5))
    h[0, 0] = 0.0
    h[0, 1] = h[1, 0] = b * q3s
    h[0, 2] = h[2, 0] = c * q3u
    h[0, 3] = h[3, 0] = -0.5 * q3s
    h[0, 4] = h[4, 0] = -0.5 * q3u
    h[1, 1] = (r - 2 * b * c) * q3s + 3 * r * b * b * q5s
    h[1, 2] = h[2, 1] = -p - c * c * q3u - b * b * q3s + r * b * c * q33
    h[1, 3] = h[3, 1] = 0.5 * c * q3s - 1.5 * r * b * q5s
    h[1, 4] = h[4, 1] = 0.5 * c * q3u - 0.5 * r * b * q33
    h[2, 2] = (r - 2 * b * c) * q3u + 3 * r * c * c * q5u
    h[2, 3] = h[3, 2] = 0.5 * b * q3s - 0.5 * r * c * q33
    h[2, 4] = h[4, 2] = 0.5 * b * q3u - 1.5 * r * c * q5u
    h[3, 3] = 0.75 * r * q5s
    h[3, 4] = h[4, 3] = 0.25 * r * q33
    h[4, 4] = 0.75 * r * q5u
    return h


def _corr_integrands() -> tuple[Polynomial, ...]:
    x, y = coordinate(2, 0), coordinate(2, 1)
    return (x * y, x, y, x * x, y * y)


@dataclass(frozen=True)
class Correlation(Functional):
    """Pearson correlation of a bivariate repartition.

    A composite of the five moment integrals E[xy], E[x], E[y], E[x^2],
    E[y^2]; a vanishing variance in either coordinate raises
    DegenerateVariance instead of propagating NaN.
    """

    @property
    def dim(self):
        return 2

    def _composite(self) -> CompositeMoments:
        return CompositeMoments(
            integrands=_corr_integrands(),
            func=_corr_value,
            grad=_corr_grad,
            hess=_corr_hess,
            names=("A", "B", "C", "D", "E"),
        )

    def value_on_points(self, pts):
        pts = self._check_pts(pts)
        x, y = pts[:, 0], pts[:, 1]
        mx, my = x.mean(), y.mean()
        m11 = (x * y).mean() - mx * my
        m20 = (x * x).mean() - mx * mx
        m02 = (y * y).mean() - my * my
        if m20 <= 0.0 or m02 <= 0.0:
            raise DegenerateVariance(_DEGENERATE_MSG + " (constant sample coordinate)")
        return float(m11 / math.sqrt(m20 * m02))

    def value_on_oracle(self, oracle):
        return self._composite().value_on_oracle(oracle)

    def influence_poly(self, oracle):
        return self._composite().influence_poly(oracle)

    def second_kernel(self, oracle):
        return self._composite().second_kernel(oracle)


@dataclass(frozen=True)
class DoubleIntegral(Functional):
    """f{V} = double integral of psi(X, Y) dV(X) dV(Y).

    On a repartition this is the full V-statistic (1/n^2) sum over all
    ordered pairs, diagonal included.  The kernel must broadcast over
    coordinate arrays of shape (..., k).  Analytic derivatives integrate
    psi against the base model and are available when it has finite
    support; other bases would need a quadrature the library does not
    promise.
    """

    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim_hint: int

    @property
    def dim(self):
        return int(self.dim_hint)

    def _pair_values(self, x_pts, y_pts):
        x = np.atleast_2d(np.asarray(x_pts, dtype=float))
        y = np.atleast_2d(np.asarray(y_pts, dtype=float))
        return np.asarray(self.kernel(x[:, None, :], y[None, :, :]), dtype=float)

    def value_on_points(self, pts):
        pts = self._check_pts(pts)
        return float(self._pair_values(pts, pts).mean())

    def value_on_oracle(self, oracle):
        if oracle.atoms is not None:
            pts, wts = oracle.atoms
            grid = self._pair_values(pts, pts)
            return EvalResult(float(wts @ grid @ wts), 0.0, "exact-sum")
        draws = oracle.draws()
        half = draws.shape[0] // 2
        if half < 2:
            raise MomentUnavailable("budget too small for a paired double-integral estimate")
        vals = np.asarray(
            self.kernel(draws[:half], draws[half:2 * half]), dtype=float
        )
        se = float(vals.std(ddof=1) / math.sqrt(half))
        return EvalResult(float(vals.mean()), se, "monte-carlo")

    def influence_poly(self, oracle):
        return None

    def influence_fn(self, oracle):
        if oracle.atoms is None:
            raise NoAnalyticDerivative(
                "double-integral influence needs a finite-support base model"
            )
        pts, wts = oracle.atoms

        def fn(y_pts):
            y = np.atleast_2d(np.asarray(y_pts, dtype=float))
            left = self._pair_values(pts, y)   # (atoms, m)
            right = self._pair_values(y, pts)  # (m, atoms)
            return wts @ left + right @ wts

        return fn

    def second_kernel(self, oracle):
        return CallablePairKernel(self.kernel, factor=2.0)


# ---------------------------------------------------------------------------
# influence bundle used by the derivative calculus


@dataclass(frozen=True)
class InfluenceData:
    """Analytic derivative data of a functional at one base model."""

    functional: Functional
    base: DistributionModel
    first_poly: Polynomial | None
    first_fn: Callable[[np.ndarray], np.ndarray]
    kernel: PairKernel


def influence_at(f: Functional, base: DistributionModel, budget: int = 0,
                 stream: StreamId | None = None, with_kernel: bool = True) -> InfluenceData:
    """Bundle f', f'' of ``f`` at ``base``; moments may use a Monte Carlo budget."""
    if f.dim != base.dim:
        raise DimensionMismatch("functional and base model dimensions differ")
    oracle = MomentOracle(base, budget=budget, stream=stream)
    poly = f.influence_poly(oracle)
    fn = f.influence_fn(oracle)
    kernel = f.second_kernel(oracle) if with_kernel else ZeroKernel(f.dim)
    return InfluenceData(f, base, poly, fn, kernel)


# ---------------------------------------------------------------------------
# public evaluation entry points


def eval_on_repartition(f: Functional, rep: Repartition) -> float:
    if f.dim != rep.dim:
        raise DimensionMismatch("functional and repartition dimensions differ")
    return f.value_on_points(rep.points)


def eval_on_model(f: Functional, model: DistributionModel, budget: int = 0,
                  stream: StreamId | None = None, method: str = "auto") -> EvalResult:
    """Evaluate on a model; ``method`` is auto | exact | monte-carlo."""
    if f.dim != model.dim:
        raise DimensionMismatch("functional and model dimensions differ")
    if method not in ("auto", "exact", "monte-carlo"):
        raise ValueError(f"unknown method {method!r}")
    if method == "exact":
        oracle = MomentOracle(model, budget=0, stream=None)
    elif method == "monte-carlo":
        oracle = MomentOracle(model, budget=budget, stream=stream, allow_exact=False)
    else:
        oracle = MomentOracle(model, budget=budget, stream=stream)
    return f.value_on_oracle(oracle)


# ---------------------------------------------------------------------------
# arithmetic functions of cell frequencies


@dataclass(frozen=True)
class ArithmeticFunction:
    """Smooth function of a frequency vector with its gradient."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


def linear_arithmetic(coeffs) -> ArithmeticFunction:
    """f(rho) = sum f_lambda rho_lambda."""
    c = np.asarray(coeffs, dtype=float)
    return ArithmeticFunction(
        value=lambda rho: float(c @ np.asarray(rho, dtype=float)),
        gradient=lambda rho: c.copy(),
    )


def quadratic_arithmetic(coeffs) -> ArithmeticFunction:
    """f(rho) = sum c_lambda rho_lambda^2."""
    c = np.asarray(coeffs, dtype=float)
    return ArithmeticFunction(
        value=lambda rho: float(c @ np.asarray(rho, dtype=float) ** 2),
        gradient=lambda rho: 2.0 * c * np.asarray(rho, dtype=float),
    )


def frequencies_as_function(f, rho, tol: float = 1e-12) -> float:
    """Apply an arithmetic function to a frequency vector on the simplex.

    ``f`` is either an ArithmeticFunction or a coefficient vector meaning
    the linear function sum f_lambda rho_lambda.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or rho.size < 1:
        raise SimplexViolation("frequency vector must be one-dimensional and nonempty")
    if (rho < -tol).any():
        raise SimplexViolation(f"negative frequency beyond tolerance {tol}")
    if abs(rho.sum() - 1.0) > tol:
        raise SimplexViolation(f"frequencies sum to {rho.sum()}, not 1 within {tol}")
    if isinstance(f, ArithmeticFunction):
        return float(f.value(rho))
    return float(np.asarray(f, dtype=float) @ rho)
