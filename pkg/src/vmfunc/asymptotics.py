"""Asymptotic normality harness and bound checkers.

The centered statistic A_n = H_n (f{S_n} - f{V_n}) uses the normalizer
defined by 1/(2 H_n^2) = s_n^2 / n^2 with s_n^2 the sum over collectives of
the variance of the first influence f'{V_n, .} under each collective's own
model.  Under that scaling the linear Taylor term has variance 1/2 and the
limit law is gauss_phi, the Gaussian distribution function with variance
1/2.  Experiments draw replications from counter-based substreams keyed by
replication index, so results are independent of execution order and of the
worker count.
"""

from __future__ import annotations

import math
import pickle
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .collectives import (
    CollectiveSequence,
    DiscreteCells,
    DistributionModel,
    Repartition,
    draw_experiment,
)
from .errors import DimensionMismatch, EnumerationGuard, VmfuncError
from .functionals import (
    ArithmeticFunction,
    Functional,
    MomentOracle,
    eval_on_repartition,
    frequencies_as_function,
)
from .polynomials import Polynomial
from .streams import (
    SPACE_CENTERING,
    SPACE_NORMALIZER,
    SPACE_REPLICATION,
    StreamId,
)

__all__ = [
    "gauss_phi",
    "default_u_grid",
    "PerCollective",
    "AsymptoticNormalizer",
    "normalizer",
    "AsymptoticReport",
    "clt_experiment",
    "EnumerationResult",
    "enumerate_arithmetic",
    "simulate_arithmetic",
    "law_sup_distance",
    "frequency_bounds_check",
    "BoundMargin",
    "GridSpec",
    "weighted_deviation_check",
    "Alpha2D",
    "ibp_bound_2d",
    "LemmaGap",
    "lemma_gap",
    "ConstantWeight",
    "RadialMajorant",
    "remainder_bound_trend",
]


def gauss_phi(u):
    """Distribution function (1/sqrt(pi)) integral of exp(-t^2), variance 1/2."""
    return 0.5 * special.erfc(-np.asarray(u, dtype=float))


def default_u_grid() -> np.ndarray:
    """Fixed evaluation grid for standardized laws: 201 points on [-4, 4]."""
    return np.linspace(-4.0, 4.0, 201)


# ---------------------------------------------------------------------------
# normalizer


@dataclass(frozen=True)
class PerCollective:
    """Influence statistics of one collective: mean, variance, 2+eps moment."""

    a: float
    r_sq: float
    c: float
    method: str


@dataclass(frozen=True)
class AsymptoticNormalizer:
    n: int
    epsilon: float
    h_n: float
    s_n_sq: float
    per_collective: tuple[PerCollective, ...]
    lyapunov_ratio: float
    lyapunov_classic: float


def _influence_stats(poly: Polynomial | None, fn, model: DistributionModel,
                     epsilon: float, budget: int,
                     stream: StreamId | None) -> PerCollective:
    p = 2.0 + epsilon
    oracle = MomentOracle(model, budget=budget, stream=stream)
    if oracle.atoms is not None:
        pts, wts = oracle.atoms
        vals = np.asarray(fn(pts), dtype=float)
        a = float(vals @ wts)
        r_sq = float((vals * vals) @ wts - a * a)
        c = float(np.abs(vals - a) ** p @ wts)
        return PerCollective(a, r_sq, c, "exact-sum")
    if poly is not None:
        try:
            a = oracle.poly_mean_exact(poly).value
            sq = oracle.poly_mean_exact(poly * poly).value
            r_sq = sq - a * a
            if budget > 0:
                vals = np.asarray(fn(oracle.draws()), dtype=float)
                c = float((np.abs(vals - a) ** p).mean())
            else:
                c = float("nan")
            return PerCollective(float(a), float(r_sq), c, "exact-moments")
        except Exception as exc:  # fall through to Monte Carlo
            if not isinstance(exc, VmfuncError):
                raise
    vals = np.asarray(fn(oracle.draws()), dtype=float)
    a = float(vals.mean())
    r_sq = float(vals.var(ddof=1))
    c = float((np.abs(vals - a) ** p).mean())
    return PerCollective(a, r_sq, c, "monte-carlo")


def normalizer(f: Functional, seq: CollectiveSequence, n: int,
               epsilon: float = 1.0, budget: int = 0,
               stream: StreamId | None = None) -> AsymptoticNormalizer:
    """Influence variance normalizer of A_n at sequence length n.

    Per collective nu the statistics a_nu (mean of f'{V_n, .} under the
    collective's model), r_nu^2 (its variance) and C_nu (its centered
    absolute 2+epsilon moment, a Lyapunov diagnostic) are exact for finite
    support or declared moments and budgeted Monte Carlo otherwise.  Then
    s_n^2 is the sum of the r_nu^2 and h_n = n / sqrt(2 s_n^2), so that
    1/(2 h_n^2) = s_n^2 / n^2.

    Both Lyapunov-style ratios are reported as diagnostics and never gated:
    ``lyapunov_ratio`` is s_n^2 / n^(1/(2+epsilon)) and
    ``lyapunov_classic`` is sum C_nu / s_n^(2+epsilon).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    seq._check_n(n)
    v_n = seq.prefix_mixture(n)
    base = stream if stream is not None else None
    oracle = MomentOracle(
        v_n, budget=budget, stream=base.child(SPACE_NORMALIZER, 0) if base else None
    )
    poly = f.influence_poly(oracle)
    fn = f.influence_fn(oracle)
    if seq.is_iid:
        st = _influence_stats(
            poly, fn, seq.base, epsilon, budget,
            base.child(SPACE_NORMALIZER, 1) if base else None,
        )
        per = (st,) * n
    else:
        per = tuple(
            _influence_stats(
                poly, fn, seq.model_at(nu), epsilon, budget,
                base.child(SPACE_NORMALIZER, 1 + nu) if base else None,
            )
            for nu in range(n)
        )
    s_n_sq = float(sum(p.r_sq for p in per))
    if s_n_sq <= 0:
        raise VmfuncError("degenerate normalizer: s_n^2 is not positive")
    h_n = n / math.sqrt(2.0 * s_n_sq)
    c_sum = float(sum(p.c for p in per))
    return AsymptoticNormalizer(
        n=n,
        epsilon=float(epsilon),
        h_n=h_n,
        s_n_sq=s_n_sq,
        per_collective=per,
        lyapunov_ratio=s_n_sq / n ** (1.0 / (2.0 + epsilon)),
        lyapunov_classic=c_sum / s_n_sq ** ((2.0 + epsilon) / 2.0),
    )


# ---------------------------------------------------------------------------
# central limit experiment


@dataclass(frozen=True)
class BoundMargin:
    """One checked inequality lhs <= rhs within 3 reported standard errors."""

    name: str
    lhs: float
    rhs: float
    std_error: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class AsymptoticReport:
    n: int
    replications: int
    u_grid: tuple[float, ...]
    ecdf: tuple[float, ...]
    ks_distance: float
    mean_abs_remainder: float
    var_b_n: float
    center: float
    normalizer: AsymptoticNormalizer
    bound_margins: tuple[BoundMargin, ...] = ()

    @property
    def failed(self) -> bool:
        return any(not m.passed for m in self.bound_margins)


def _clt_chunk(args) -> tuple[int, np.ndarray, np.ndarray]:
    (f, seq, v_n, n, h_n, center, mean_term, budget, stream_bytes, lo, hi) = args
    stream: StreamId = pickle.loads(stream_bytes)
    oracle = MomentOracle(v_n, budget=budget, stream=stream.child(SPACE_CENTERING))
    fn = f.influence_fn(oracle)
    a_vals = np.empty(hi - lo)
    b_vals = np.empty(hi - lo)
    for r in range(lo, hi):
        rep = draw_experiment(seq, n, stream.child(SPACE_REPLICATION, r))
        a_vals[r - lo] = h_n * (f.value_on_points(rep.points) - center)
        b_vals[r - lo] = h_n * (
            float(np.asarray(fn(rep.points), dtype=float).mean()) - mean_term
        )
    return lo, a_vals, b_vals


def clt_experiment(f: Functional, seq: CollectiveSequence, n: int,
                   replications: int, master_seed: int | StreamId,
                   centering: float | None = None, epsilon: float = 1.0,
                   budget: int = 0, u_grid: np.ndarray | None = None,
                   workers: int = 1) -> AsymptoticReport:
    """Empirical law of A_n = h_n (f{S_n} - center) over replications.

    ``centering`` defaults to f{V_n} evaluated on the model (exact fast
    paths preferred).  Reports the empirical CDF of A_n on the fixed u grid,
    its sup distance to gauss_phi, the mean absolute Taylor remainder
    |A_n - B_n|, and the sample variance of the linear term B_n (1/2 in the
    limit).  Replication r draws only from the substream keyed by r, so any
    worker partition yields identical arrays.
    """
    stream = master_seed if isinstance(master_seed, StreamId) else StreamId(int(master_seed))
    if replications < 2:
        raise ValueError("need at least two replications")
    norm = normalizer(f, seq, n, epsilon=epsilon, budget=budget, stream=stream)
    v_n = seq.prefix_mixture(n)
    oracle = MomentOracle(v_n, budget=budget, stream=stream.child(SPACE_CENTERING))
    center = float(centering) if centering is not None else f.value_on_oracle(oracle).value
    poly = f.influence_poly(oracle)
    fn = f.influence_fn(oracle)
    mean_term = (
        oracle.poly_mean(poly).value if poly is not None else oracle.fn_mean(fn).value
    )

    stream_bytes = pickle.dumps(stream)
    jobs = []
    workers = max(1, int(workers))
    chunk = max(1, -(-replications // (workers * 4)))
    lo = 0
    while lo < replications:
        hi = min(lo + chunk, replications)
        jobs.append((f, seq, v_n, n, norm.h_n, center, mean_term, budget,
                     stream_bytes, lo, hi))
        lo = hi

    a_vals = np.empty(replications)
    b_vals = np.empty(replications)
    if workers == 1:
        results = map(_clt_chunk, jobs)
    else:
        try:
            pickle.dumps(jobs[0])
        except Exception as exc:
            raise VmfuncError(
                "parallel replications need picklable functionals and models; "
                "rerun with workers=1"
            ) from exc
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_clt_chunk, jobs))
    for lo, a_chunk, b_chunk in results:
        a_vals[lo:lo + len(a_chunk)] = a_chunk
        b_vals[lo:lo + len(b_chunk)] = b_chunk

    grid = default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    ecdf = np.searchsorted(np.sort(a_vals), grid, side="right") / replications
    ks = float(np.abs(ecdf - gauss_phi(grid)).max())
    return AsymptoticReport(
        n=n,
        replications=replications,
        u_grid=tuple(float(u) for u in grid),
        ecdf=tuple(float(v) for v in ecdf),
        ks_distance=ks,
        mean_abs_remainder=float(np.abs(a_vals - b_vals).mean()),
        var_b_n=float(b_vals.var(ddof=1)),
        center=center,
        normalizer=norm,
    )


# ---------------------------------------------------------------------------
# exact enumeration of the arithmetic case


@dataclass(frozen=True)
class EnumerationResult:
    """Exact law of the frequency vector of n independent cell draws.

    Probabilities are kept as exact rationals (float inputs are converted
    to their exact binary rational), so the identity E{rho_lambda} =
    mean cell probability and the dispersion bounds can be checked with
    zero tolerance.
    """

    n: int
    cells: int
    counts: tuple[tuple[int, ...], ...]
    probabilities: tuple[Fraction, ...]
    p_bar: tuple[Fraction, ...]
    rho_mean: tuple[Fraction, ...]
    rho_var: tuple[Fraction, ...]
    mean_sq_deviation: Fraction
    f_values: tuple[float, ...] | None
    f_probs: tuple[float, ...] | None

    def f_mean(self) -> float:
        if self.f_values is None:
            raise ValueError("no arithmetic function was enumerated")
        return float(np.dot(self.f_values, self.f_probs))

    def f_var(self) -> float:
        m = self.f_mean()
        return float(np.dot((np.asarray(self.f_values) - m) ** 2, self.f_probs))


ENUMERATION_GUARD = 20_000_000


def enumerate_arithmetic(cell_probs, f=None, guard: int = ENUMERATION_GUARD) -> EnumerationResult:
    """Exact distribution of frequencies over l cells for n draws.

    ``cell_probs`` is an (n, l) array of per-collective cell probabilities
    (Fractions or floats; rows must sum to one).  The full sum over the l^n
    outcome sequences is aggregated by frequency vector; the guard refuses
    l^n beyond its threshold.  ``f`` (an ArithmeticFunction or coefficient
    vector) additionally induces the exact law of f(rho).
    """
    rows = [list(r) for r in cell_probs]
    n = len(rows)
    if n < 1:
        raise ValueError("need at least one collective")
    l = len(rows[0])
    if l < 2 or any(len(r) != l for r in rows):
        raise ValueError("cell probability rows must share a common length >= 2")
    if l ** n > guard:
        raise EnumerationGuard(
            f"l^n = {l}^{n} exceeds the enumeration guard {guard}"
        )
    table: list[list[Fraction]] = []
    for r in rows:
        fr = [x if isinstance(x, Fraction) else Fraction(float(x)) for x in r]
        if any(x < 0 for x in fr):
            raise ValueError("negative cell probability")
        if abs(float(sum(fr)) - 1.0) > 1e-9:
            raise ValueError(f"cell probabilities sum to {float(sum(fr))}, expected 1")
        table.append(fr)

    dist: dict[tuple[int, ...], Fraction] = {(0,) * l: Fraction(1)}
    for nu in range(n):
        nxt: dict[tuple[int, ...], Fraction] = {}
        p_row = table[nu]
        for counts, prob in dist.items():
            for cell in range(l):
                if p_row[cell] == 0:
                    continue
                key = counts[:cell] + (counts[cell] + 1,) + counts[cell + 1:]
                nxt[key] = nxt.get(key, Fraction(0)) + prob * p_row[cell]
        dist = nxt

    keys = sorted(dist)
    probs = [dist[k] for k in keys]
    p_bar = [sum(table[nu][cell] for nu in range(n)) / n for cell in range(l)]
    rho_mean = [
        sum(pr * Fraction(k[cell], n) for k, pr in zip(keys, probs))
        for cell in range(l)
    ]
    rho_var = [
        sum(pr * (Fraction(k[cell], n) - rho_mean[cell]) ** 2 for k, pr in zip(keys, probs))
        for cell in range(l)
    ]
    mean_sq = sum(
        pr * sum((Fraction(k[cell], n) - p_bar[cell]) ** 2 for cell in range(l))
        for k, pr in zip(keys, probs)
    )

    f_values = f_probs = None
    if f is not None:
        agg: dict[float, float] = {}
        for k, pr in zip(keys, probs):
            rho = np.array(k, dtype=float) / n
            val = frequencies_as_function(f, rho)
            agg[val] = agg.get(val, 0.0) + float(pr)
        f_values = tuple(sorted(agg))
        f_probs = tuple(agg[v] for v in f_values)

    return EnumerationResult(
        n=n,
        cells=l,
        counts=tuple(keys),
        probabilities=tuple(probs),
        p_bar=tuple(p_bar),
        rho_mean=tuple(rho_mean),
        rho_var=tuple(rho_var),
        mean_sq_deviation=mean_sq,
        f_values=f_values,
        f_probs=f_probs,
    )


def simulate_arithmetic(cell_probs, f, replications: int, stream: StreamId) -> np.ndarray:
    """Monte Carlo draws of f(rho) for the same composed experiment."""
    probs = np.asarray(cell_probs, dtype=float)
    n, l = probs.shape
    rng = stream.generator()
    counts = np.zeros((replications, l))
    for nu in range(n):
        cum = probs[nu].cumsum()
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(replications), side="right")
        counts[np.arange(replications), idx] += 1.0
    rho = counts / n
    if isinstance(f, ArithmeticFunction):
        return np.array([f.value(r) for r in rho])
    coeffs = np.asarray(f, dtype=float)
    return rho @ coeffs


def law_sup_distance(sample: np.ndarray, support: Sequence[float],
                     probs: Sequence[float]) -> float:
    """Sup distance between an empirical law and an exact discrete law.

    The sup over the real line of |F_hat - F| for a discrete target is
    attained at a support point or immediately to its left; both sides are
    checked at every atom.
    """
    xs = np.sort(np.asarray(sample, dtype=float))
    m = len(xs)
    support = np.asarray(support, dtype=float)
    cdf = np.cumsum(np.asarray(probs, dtype=float))
    at = np.searchsorted(xs, support, side="right") / m
    before = np.searchsorted(xs, support, side="left") / m
    d_at = np.abs(at - cdf)
    d_before = np.abs(before - np.concatenate([[0.0], cdf[:-1]]))
    return float(max(d_at.max(), d_before.max()))


def frequency_bounds_check(enum: EnumerationResult) -> tuple[BoundMargin, ...]:
    """Exact dispersion bounds of the frequency vector.

    Per cell, Var{rho_lambda} <= p_bar (1 - p_bar) / n with equality in
    the homogeneous case; in aggregate E|rho - p_bar|^2 <= 1/n.  All
    comparisons are exact rational arithmetic (zero tolerance), and the
    exact identity E{rho_lambda} = p_bar_lambda is asserted outright.
    """
    margins = []
    for cell in range(enum.cells):
        if enum.rho_mean[cell] != enum.p_bar[cell]:
            raise VmfuncError(
                f"enumeration broke the identity E[rho_{cell}] = p_bar_{cell}"
            )
        rhs = enum.p_bar[cell] * (1 - enum.p_bar[cell]) / enum.n
        margins.append(
            BoundMargin(
                name=f"frequency-var-cell-{cell}",
                lhs=float(enum.rho_var[cell]),
                rhs=float(rhs),
                std_error=0.0,
                passed=enum.rho_var[cell] <= rhs,
                note="exact rational comparison",
            )
        )
    margins.append(
        BoundMargin(
            name="frequency-vector-mean-sq",
            lhs=float(enum.mean_sq_deviation),
            rhs=float(Fraction(1, enum.n)),
            std_error=0.0,
            passed=enum.mean_sq_deviation <= Fraction(1, enum.n),
            note="exact rational comparison",
        )
    )
    return tuple(margins)


# ---------------------------------------------------------------------------
# weighted deviation bound


@dataclass(frozen=True)
class GridSpec:
    """Tensor quadrature grid: a box with midpoint nodes per dimension."""

    box: tuple[tuple[float, float], ...]
    nodes: int = 101

    def __post_init__(self):
        box = tuple((float(a), float(b)) for a, b in self.box)
        if any(not (a < b) for a, b in box):
            raise ValueError("box bounds must satisfy low < high")
        if self.nodes < 4:
            raise ValueError("need at least four nodes per dimension")
        object.__setattr__(self, "box", box)

    @property
    def dim(self):
        return len(self.box)

    def axes(self) -> list[np.ndarray]:
        out = []
        for a, b in self.box:
            edges = np.linspace(a, b, self.nodes + 1)
            out.append(0.5 * (edges[:-1] + edges[1:]))
        return out

    def cell_volume(self) -> float:
        return float(np.prod([(b - a) / self.nodes for a, b in self.box]))

    def mesh(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)


@dataclass(frozen=True)
class ConstantWeight:
    value: float = 1.0

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.full(pts.shape[:-1], self.value)


@dataclass(frozen=True)
class RadialMajorant:
    """Weight c + 2 sqrt(x^2 + y^2), the polynomial-growth majorant shape."""

    c: float = 1.0

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return self.c + 2.0 * np.sqrt(pts[..., 0] ** 2 + pts[..., 1] ** 2)


def _box_mass(model: DistributionModel, box) -> float:
    import itertools as _it

    k = len(box)
    total = 0.0
    for picks in _it.product((0, 1), repeat=k):
        corner = np.array([box[i][0] if picks[i] else box[i][1] for i in range(k)])
        total += (-1) ** sum(picks) * float(model.cdf_many(corner[None, :])[0])
    return total


def _empirical_grid_counts(points: np.ndarray, axes: list[np.ndarray]) -> np.ndarray:
    """#(sample points <= node) on the tensor grid, by scatter and cumsum."""
    shape = tuple(len(ax) for ax in axes)
    idx = np.empty_like(points, dtype=np.int64)
    keep = np.ones(points.shape[0], dtype=bool)
    for axis, ax in enumerate(axes):
        j = np.searchsorted(ax, points[:, axis], side="left")
        keep &= j < len(ax)
        idx[:, axis] = np.minimum(j, len(ax) - 1)
    counts = np.zeros(shape)
    if keep.any():
        np.add.at(counts, tuple(idx[keep].T), 1.0)
    for axis in range(len(axes)):
        counts = counts.cumsum(axis=axis)
    return counts


def weighted_deviation_check(psi, seq: CollectiveSequence, n: int,
                             replications: int, stream: StreamId,
                             grid: GridSpec,
                             name: str = "weighted-deviation") -> BoundMargin:
    """Check E integral psi (S_n - V_n)^2 dX <= (1/n) integral psi V_n (1 - V_n) dX.

    The left side is a Monte Carlo mean over replications with its standard
    error; both integrals use midpoint quadrature on the grid.  If the box
    leaves more than 1% of V_n's mass outside, the margin is annotated and
    a RuntimeWarning is emitted.
    """
    if grid.dim != seq.dim:
        raise DimensionMismatch("grid and sequence dimensions differ")
    v_n = seq.prefix_mixture(n)
    axes = grid.axes()
    mesh = grid.mesh()
    vol = grid.cell_volume()
    v_vals = np.asarray(v_n.cdf_many(mesh), dtype=float)
    w_vals = np.asarray(psi(mesh), dtype=float) * vol
    rhs = float((w_vals * v_vals * (1.0 - v_vals)).sum() / n)

    lhs_samples = np.empty(replications)
    for r in range(replications):
        rep = draw_experiment(seq, n, stream.child(SPACE_REPLICATION, r))
        s_vals = _empirical_grid_counts(rep.points, axes) / n
        lhs_samples[r] = (w_vals * (s_vals - v_vals) ** 2).sum()
    lhs = float(lhs_samples.mean())
    se = float(lhs_samples.std(ddof=1) / math.sqrt(replications))

    note = ""
    outside = 1.0 - _box_mass(v_n, grid.box)
    if outside > 0.01:
        note = f"truncation box drops {outside:.3%} of the model mass"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return BoundMargin(name, lhs, rhs, se, lhs <= rhs + 3.0 * se, note)


# ---------------------------------------------------------------------------
# two-dimensional integration-by-parts bound


@dataclass(frozen=True)
class Alpha2D:
    """Twice-differentiable 2D integrand with its partial derivatives."""

    value: Callable[[np.ndarray], np.ndarray]
    dx: Callable[[np.ndarray], np.ndarray]
    dy: Callable[[np.ndarray], np.ndarray]
    dxy: Callable[[np.ndarray], np.ndarray]

    @staticmethod
    def from_polynomial(poly: Polynomial) -> "Alpha2D":
        if poly.dim != 2:
            raise DimensionMismatch("need a polynomial in two variables")
        return Alpha2D(poly, poly.partial(0), poly.partial(1), poly.partial(0).partial(1))


def ibp_bound_2d(alpha: Alpha2D, s: Repartition, v: DistributionModel,
                 grid: GridSpec, name: str = "ibp-2d") -> BoundMargin:
    """Check |integral alpha d(S - V)| <= integral (|a_xy| + |a_x| + |a_y|) |S - V|.

    The left side is exact: the sample mean of alpha minus the model
    integral of alpha (which must ride an exact path).  The right side is
    midpoint quadrature over the grid; its uncertainty is taken as the
    change under halving the resolution and reported as the standard
    error, so the usual 3-sigma slack covers discretization.
    """
    if grid.dim != 2 or s.dim != 2 or v.dim != 2:
        raise DimensionMismatch("the integration-by-parts bound is two-dimensional")
    sample_mean = float(np.asarray(alpha.value(s.points), dtype=float).mean())
    if isinstance(alpha.value, Polynomial):
        model_val = MomentOracle(v).poly_mean_exact(alpha.value).value
    else:
        oracle = MomentOracle(v)
        if oracle.atoms is None:
            raise VmfuncError(
                "the exact left side needs a polynomial integrand or a finite-support model"
            )
        model_val = oracle.fn_mean(alpha.value).value
    lhs = abs(sample_mean - model_val)

    def rhs_at(nodes: int) -> float:
        g = GridSpec(grid.box, nodes)
        mesh = g.mesh()
        t_abs = np.abs(
            np.asarray(s.cdf_many(mesh), dtype=float)
            - np.asarray(v.cdf_many(mesh), dtype=float)
        )
        weight = (
            np.abs(np.asarray(alpha.dxy(mesh), dtype=float))
            + np.abs(np.asarray(alpha.dx(mesh), dtype=float))
            + np.abs(np.asarray(alpha.dy(mesh), dtype=float))
        )
        return float((weight * t_abs).sum() * g.cell_volume())

    rhs = rhs_at(grid.nodes)
    rhs_coarse = rhs_at(max(4, grid.nodes // 2))
    tol = abs(rhs - rhs_coarse) + 1e-12
    return BoundMargin(name, lhs, rhs, tol, lhs <= rhs + 3.0 * tol, "quadrature rhs")


# ---------------------------------------------------------------------------
# lemma gap and remainder-bound trend diagnostics


@dataclass(frozen=True)
class LemmaGap:
    """How far two statistic sequences are apart and from the limit law."""

    mean_abs_gap: float
    sup_distance_a: float
    sup_distance_b: float


def lemma_gap(a_values, b_values, u_grid: np.ndarray | None = None) -> LemmaGap:
    a = np.asarray(a_values, dtype=float)
    b = np.asarray(b_values, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired value arrays must have equal shape")
    grid = default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    target = gauss_phi(grid)

    def sup(values):
        ecdf = np.searchsorted(np.sort(values), grid, side="right") / len(values)
        return float(np.abs(ecdf - target).max())

    return LemmaGap(float(np.abs(a - b).mean()), sup(a), sup(b))


def remainder_bound_trend(psi, f: Functional, seq: CollectiveSequence,
                          schedule: Sequence[int], grid: GridSpec,
                          epsilon: float = 1.0, budget: int = 0,
                          stream: StreamId | None = None) -> list[dict]:
    """Growth diagnostic: the remainder bound (1/(2 s_n sqrt(2))) integral
    psi V_n (1 - V_n) dX along a schedule of n.

    Reported, never gated; a decreasing column is the behavior the
    remainder analysis expects for admissible weights.
    """
    rows = []
    mesh = grid.mesh()
    vol = grid.cell_volume()
    for n in schedule:
        norm = normalizer(f, seq, n, epsilon=epsilon, budget=budget, stream=stream)
        v_n = seq.prefix_mixture(n)
        v_vals = np.asarray(v_n.cdf_many(mesh), dtype=float)
        integral = float((np.asarray(psi(mesh), dtype=float) * v_vals * (1 - v_vals)).sum() * vol)
        s_n = math.sqrt(norm.s_n_sq)
        rows.append(
            {
                "n": int(n),
                "s_n": s_n,
                "integral": integral,
                "bound": integral / (2.0 * s_n * math.sqrt(2.0)),
            }
        )
    return rows
