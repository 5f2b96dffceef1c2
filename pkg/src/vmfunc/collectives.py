"""Collectives in k dimensions: samples, repartitions, and distribution models.

A repartition is the empirical joint distribution function of n observed
points, S(x) = (1/n) #{points componentwise <= x}, right-continuous by the
inclusive comparison.  Distribution models play the role of the theoretical
repartitions V: product models with closed-form marginals, a one-parameter
bivariate family with controllable dependence, finite atom sets, and
equal-weight mixtures.  All cumulative evaluations accept +/-inf sentinel
coordinates.

Models declare exact raw moments up to EXACT_MOMENT_ORDER per coordinate
exponent sum; beyond the declared order (or where a moment diverges) they
return None and callers fall back to Monte Carlo.
"""

from __future__ import annotations

import itertools
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .errors import DimensionMismatch
from .streams import StreamId

__all__ = [
    "EXACT_MOMENT_ORDER",
    "Uniform",
    "Gaussian",
    "Exponential",
    "StudentT",
    "DistributionModel",
    "IndependentProduct",
    "FgmCopula2D",
    "DiscreteCells",
    "Mixture",
    "Repartition",
    "CollectiveSequence",
    "CellPartition",
    "model_cdf",
    "repartition_eval",
    "draw_experiment",
    "discretize",
    "atoms_and_weights",
]

# Order up to which analytic models promise exact raw moments.  Finite atom
# sets are exact at every order and ignore the cap.
EXACT_MOMENT_ORDER = 8


# ---------------------------------------------------------------------------
# one-dimensional marginals


class Marginal(ABC):
    """One-dimensional distribution used as a building block of models."""

    @abstractmethod
    def cdf(self, x: np.ndarray) -> np.ndarray:
        """Distribution function, defined for +/-inf arguments."""

    @abstractmethod
    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Quantile function on the open unit interval."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...

    @abstractmethod
    def raw_moment(self, m: int) -> float | None:
        """E[X^m] when available in closed form, else None."""

    def fgm_weight(self, m: int) -> float | None:
        """E[X^m (1 - 2 F(X))], the cross-moment weight of the FGM family.

        Computed by quadrature in the probability scale when no closed form
        is coded; the result is deterministic and accurate to ~1e-10.
        """
        if m > EXACT_MOMENT_ORDER:
            return None
        return _fgm_weight_quad(self, m)


@lru_cache(maxsize=None)
def _fgm_weight_quad(marginal: "Marginal", m: int) -> float:
    value, _ = integrate.quad(
        lambda u: marginal.ppf(np.asarray(u)) ** m * (1.0 - 2.0 * u),
        0.0,
        1.0,
        epsabs=1e-12,
        epsrel=1e-12,
        limit=300,
    )
    return float(value)


@dataclass(frozen=True)
class Uniform(Marginal):
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("uniform bounds must be finite")
        if self.upper <= self.lower:
            raise ValueError("uniform requires lower < upper")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.clip((x - self.lower) / (self.upper - self.lower), 0.0, 1.0)

    def ppf(self, u):
        return self.lower + (self.upper - self.lower) * np.asarray(u, dtype=float)

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, size)

    def raw_moment(self, m):
        if m > EXACT_MOMENT_ORDER:
            return None
        a, b = self.lower, self.upper
        return (b ** (m + 1) - a ** (m + 1)) / ((m + 1) * (b - a))

    def fgm_weight(self, m):
        if m > EXACT_MOMENT_ORDER:
            return None
        a, w = self.lower, self.upper - self.lower
        total = 0.0
        for j in range(m + 1):
            # int_0^1 u^j (1 - 2u) du = -j / ((j+1)(j+2))
            total += math.comb(m, j) * a ** (m - j) * w ** j * (-j / ((j + 1) * (j + 2)))
        return total


@dataclass(frozen=True)
class Gaussian(Marginal):
    mean: float = 0.0
    stddev: float = 1.0

    def __post_init__(self):
        if not self.stddev > 0:
            raise ValueError("gaussian requires stddev > 0")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.ndtr((x - self.mean) / self.stddev)

    def ppf(self, u):
        return self.mean + self.stddev * special.ndtri(np.asarray(u, dtype=float))

    def sample(self, rng, size):
        return rng.normal(self.mean, self.stddev, size)

    def raw_moment(self, m):
        if m > EXACT_MOMENT_ORDER:
            return None
        total = 0.0
        for j in range(0, m + 1, 2):
            dfact = math.factorial(j) // (2 ** (j // 2) * math.factorial(j // 2))
            total += math.comb(m, j) * self.mean ** (m - j) * self.stddev ** j * dfact
        return total


@dataclass(frozen=True)
class Exponential(Marginal):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential requires rate > 0")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return -np.expm1(-self.rate * np.maximum(x, 0.0))

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def raw_moment(self, m):
        if m > EXACT_MOMENT_ORDER:
            return None
        return math.factorial(m) / self.rate ** m

    def fgm_weight(self, m):
        if m > EXACT_MOMENT_ORDER:
            return None
        return math.factorial(m) / self.rate ** m * (2.0 ** (-m) - 1.0)


@dataclass(frozen=True)
class StudentT(Marginal):
    """Student t marginal, kept as a heavy-tail negative control.

    Moments of order m exist only for m < df.  Whenever a caller requests a
    moment with df <= 2m the central limit machinery it feeds is invalid;
    a RuntimeWarning is emitted and None is returned for divergent orders.
    """

    df: float = 2.0

    def __post_init__(self):
        if not self.df > 0:
            raise ValueError("student t requires df > 0")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.df == 2.0:
            finite = np.where(np.isfinite(x), x, 0.0)
            base = 0.5 + finite / (2.0 * np.sqrt(2.0 + finite ** 2))
            return np.where(x == np.inf, 1.0, np.where(x == -np.inf, 0.0, base))
        return stats.t.cdf(x, self.df)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.df == 2.0:
            c = 2.0 * u - 1.0
            return c * np.sqrt(2.0 / (1.0 - c ** 2))
        return stats.t.ppf(u, self.df)

    def sample(self, rng, size):
        return rng.standard_t(self.df, size)

    def _warn_if_invalid(self, m):
        if m >= 1 and self.df <= 2 * m:
            warnings.warn(
                f"student t df={self.df} with moment order {m}: df <= 2*order, "
                "limit-theorem variance conditions fail",
                RuntimeWarning,
                stacklevel=3,
            )

    def raw_moment(self, m):
        if m > EXACT_MOMENT_ORDER:
            return None
        self._warn_if_invalid(m)
        if m == 0:
            return 1.0
        if m >= self.df:
            return None  # divergent
        if m % 2 == 1:
            return 0.0
        half = m / 2.0
        log_val = (
            half * math.log(self.df)
            + math.lgamma((m + 1) / 2.0)
            + math.lgamma((self.df - m) / 2.0)
            - 0.5 * math.log(math.pi)
            - math.lgamma(self.df / 2.0)
        )
        return math.exp(log_val)

    def fgm_weight(self, m):
        if m > EXACT_MOMENT_ORDER or m >= self.df:
            return None
        return _fgm_weight_quad(self, m)


# ---------------------------------------------------------------------------
# k-dimensional models


class DistributionModel(ABC):
    """Theoretical repartition of a collective in ``dim`` coordinates."""

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def cdf_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized distribution function on arrays of shape (..., dim)."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n points, shape (n, dim)."""

    @abstractmethod
    def raw_moment(self, exponents: tuple[int, ...]) -> float | None:
        """E[prod x_i^{e_i}] when exactly available, else None."""

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"expected point of dimension {self.dim}, got shape {x.shape}")
        if np.isnan(x).any():
            raise ValueError("cdf argument contains NaN")
        return x


@dataclass(frozen=True)
class IndependentProduct(DistributionModel):
    """Product model: independent coordinates with the given marginals."""

    marginals: tuple[Marginal, ...]

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if not self.marginals:
            raise ValueError("need at least one marginal")

    @property
    def dim(self):
        return len(self.marginals)

    def cdf_many(self, points):
        pts = np.asarray(points, dtype=float)
        out = np.ones(pts.shape[:-1], dtype=float)
        for i, marg in enumerate(self.marginals):
            out = out * marg.cdf(pts[..., i])
        return out

    def sample(self, rng, n):
        cols = [marg.sample(rng, n) for marg in self.marginals]
        return np.column_stack(cols)

    def raw_moment(self, exponents):
        if len(exponents) != self.dim:
            raise DimensionMismatch("exponent tuple length != dim")
        prod = 1.0
        for marg, e in zip(self.marginals, exponents):
            v = marg.raw_moment(int(e))
            if v is None:
                return None
            prod *= v
        return prod


@dataclass(frozen=True)
class FgmCopula2D(DistributionModel):
    """Bivariate model C(u, v) = uv (1 + theta (1-u)(1-v)) over two marginals.

    The dependence parameter runs over [-1, 1]; the density in the copula
    scale is 1 + theta (1-2u)(1-2v), which gives closed-form cross moments
    E[X^i Y^j] = m_x(i) m_y(j) + theta g_x(i) g_y(j) with g the fgm_weight
    of each marginal, and a cheap exact sampler by conditional inversion.
    """

    margin_x: Marginal
    margin_y: Marginal
    theta: float

    def __post_init__(self):
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError("fgm dependence parameter must lie in [-1, 1]")

    @property
    def dim(self):
        return 2

    def cdf_many(self, points):
        pts = np.asarray(points, dtype=float)
        u = self.margin_x.cdf(pts[..., 0])
        v = self.margin_y.cdf(pts[..., 1])
        return u * v * (1.0 + self.theta * (1.0 - u) * (1.0 - v))

    def sample(self, rng, n):
        u = rng.random(n)
        w = rng.random(n)
        a = self.theta * (1.0 - 2.0 * u)
        disc = (1.0 + a) ** 2 - 4.0 * a * w
        v = 2.0 * w / ((1.0 + a) + np.sqrt(disc))
        return np.column_stack([self.margin_x.ppf(u), self.margin_y.ppf(v)])

    def raw_moment(self, exponents):
        if len(exponents) != 2:
            raise DimensionMismatch("exponent tuple length != 2")
        i, j = int(exponents[0]), int(exponents[1])
        mx, my = self.margin_x.raw_moment(i), self.margin_y.raw_moment(j)
        if mx is None or my is None:
            return None
        if self.theta == 0.0 or i == 0 or j == 0:
            return mx * my
        gx, gy = self.margin_x.fgm_weight(i), self.margin_y.fgm_weight(j)
        if gx is None or gy is None:
            return None
        return mx * my + self.theta * gx * gy


@dataclass(frozen=True)
class DiscreteCells(DistributionModel):
    """Finite atom set with probabilities; every moment is an exact sum."""

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pr = np.asarray(self.probs, dtype=float)
        if pts.ndim != 2:
            raise ValueError("atom array must be (n_atoms, dim)")
        if pr.shape != (pts.shape[0],):
            raise ValueError("probability vector must match the atom count")
        if not np.isfinite(pts).all():
            raise ValueError("atoms must have finite coordinates")
        if (pr < -1e-12).any():
            raise ValueError("negative atom probability")
        total = pr.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atom probabilities sum to {total}, expected 1")
        pr = np.maximum(pr, 0.0) / np.maximum(pr, 0.0).sum()
        pts = pts.copy()
        pts.setflags(write=False)
        pr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", pr)

    @property
    def dim(self):
        return self.points.shape[1]

    def cdf_many(self, points):
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        mask = (self.points[None, :, :] <= flat[:, None, :]).all(axis=-1)
        return (mask @ self.probs).reshape(pts.shape[:-1])

    def sample(self, rng, n):
        idx = rng.choice(self.points.shape[0], size=n, p=self.probs)
        return self.points[idx]

    def raw_moment(self, exponents):
        if len(exponents) != self.dim:
            raise DimensionMismatch("exponent tuple length != dim")
        vals = np.ones(self.points.shape[0])
        for axis, e in enumerate(exponents):
            if e:
                vals = vals * self.points[:, axis] ** int(e)
        return float(vals @ self.probs)


@dataclass(frozen=True)
class Mixture(DistributionModel):
    """Equal-weight mixture; the theoretical counterpart of pooling n models."""

    members: tuple[DistributionModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("mixture needs at least one member")
        dims = {m.dim for m in self.members}
        if len(dims) != 1:
            raise DimensionMismatch(f"mixture members disagree on dimension: {sorted(dims)}")

    @property
    def dim(self):
        return self.members[0].dim

    def cdf_many(self, points):
        acc = self.members[0].cdf_many(points).astype(float)
        for m in self.members[1:]:
            acc = acc + m.cdf_many(points)
        return acc / len(self.members)

    def sample(self, rng, n):
        which = rng.integers(0, len(self.members), size=n)
        out = np.empty((n, self.dim), dtype=float)
        for i, m in enumerate(self.members):
            mask = which == i
            cnt = int(mask.sum())
            if cnt:
                out[mask] = m.sample(rng, cnt)
        return out

    def raw_moment(self, exponents):
        total = 0.0
        for m in self.members:
            v = m.raw_moment(exponents)
            if v is None:
                return None
            total += v
        return total / len(self.members)


def atoms_and_weights(model: DistributionModel) -> tuple[np.ndarray, np.ndarray] | None:
    """Finite-support representation (atoms, weights) when one exists."""
    if isinstance(model, DiscreteCells):
        return model.points, model.probs
    if isinstance(model, Mixture):
        parts = [atoms_and_weights(m) for m in model.members]
        if any(p is None for p in parts):
            return None
        pts = np.vstack([p[0] for p in parts])
        wts = np.concatenate([p[1] / len(parts) for p in parts])
        return pts, wts
    return None


def model_cdf(model: DistributionModel, x) -> float:
    """V(x) at a single point; +/-inf coordinates are allowed."""
    pt = model._check_point(x)
    return float(model.cdf_many(pt[None, :])[0])


# ---------------------------------------------------------------------------
# repartitions


@dataclass(frozen=True)
class Repartition:
    """Empirical distribution function of n observed k-dimensional points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("need an (n, dim) array with n >= 1")
        if not np.isfinite(pts).all():
            raise ValueError("observed points must be finite")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def cdf_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        mask = (self.points[None, :, :] <= flat[:, None, :]).all(axis=-1)
        return mask.mean(axis=1).reshape(pts.shape[:-1])

    def as_model(self) -> DiscreteCells:
        """The same distribution as an atom model with weights 1/n."""
        n = self.n
        return DiscreteCells(self.points, np.full(n, 1.0 / n))


def repartition_eval(rep: Repartition, x) -> float:
    """S(x) = (1/n) #{points componentwise <= x}; inclusive, so right-continuous."""
    pt = np.asarray(x, dtype=float)
    if pt.shape != (rep.dim,):
        raise DimensionMismatch(f"expected point of dimension {rep.dim}, got shape {pt.shape}")
    if np.isnan(pt).any():
        raise ValueError("cdf argument contains NaN")
    return float(rep.cdf_many(pt[None, :])[0])


# ---------------------------------------------------------------------------
# sequences of collectives and experiment draws


@dataclass(frozen=True)
class CollectiveSequence:
    """Rule nu -> model for an (unbounded) sequence of collectives.

    Either a single base model repeated (i.i.d. case, any n) or an explicit
    heterogeneous tuple (n limited by its length).
    """

    base: DistributionModel | None = None
    models: tuple[DistributionModel, ...] | None = None

    def __post_init__(self):
        if (self.base is None) == (self.models is None):
            raise ValueError("provide exactly one of base or models")
        if self.models is not None:
            object.__setattr__(self, "models", tuple(self.models))
            if not self.models:
                raise ValueError("empty model list")
            dims = {m.dim for m in self.models}
            if len(dims) != 1:
                raise DimensionMismatch("sequence members disagree on dimension")

    @staticmethod
    def iid(model: DistributionModel) -> "CollectiveSequence":
        return CollectiveSequence(base=model)

    @staticmethod
    def explicit(models) -> "CollectiveSequence":
        return CollectiveSequence(models=tuple(models))

    @property
    def is_iid(self) -> bool:
        return self.base is not None

    @property
    def dim(self) -> int:
        return self.base.dim if self.base is not None else self.models[0].dim

    def model_at(self, nu: int) -> DistributionModel:
        if self.base is not None:
            return self.base
        if not 0 <= nu < len(self.models):
            raise IndexError(f"collective index {nu} outside explicit sequence")
        return self.models[nu]

    def _check_n(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.models is not None and n > len(self.models):
            raise ValueError(f"n={n} exceeds the {len(self.models)} explicit models")

    def prefix_mixture(self, n: int) -> DistributionModel:
        """V_n, the equal-weight pool of the first n models."""
        self._check_n(n)
        if self.base is not None:
            return self.base
        return Mixture(self.models[:n])


def draw_experiment(seq: CollectiveSequence, n: int, stream: StreamId) -> Repartition:
    """One point from each of the first n collectives, as a repartition.

    The i.i.d. case consumes a single substream vectorized over collectives;
    a heterogeneous sequence derives one substream per collective index, so
    the draw for collective nu never depends on the other models.
    """
    seq._check_n(n)
    if seq.base is not None:
        pts = seq.base.sample(stream.generator(), n)
    else:
        rows = [
            seq.models[nu].sample(stream.child(nu).generator(), 1)[0]
            for nu in range(n)
        ]
        pts = np.vstack(rows)
    return Repartition(pts)


# ---------------------------------------------------------------------------
# cell partitions and discretization


@dataclass(frozen=True)
class CellPartition:
    """l >= 2 pairwise disjoint half-open boxes [lower, upper) in R^k.

    Bounds may be +/-inf to cover tails.  Note the two discretization routes
    differ on boundary atoms: point counting is half-open while the corner
    algebra below yields the (lower, upper] probability; cells should keep
    atoms away from their boundaries.
    """

    lowers: np.ndarray
    uppers: np.ndarray

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.lowers, dtype=float))
        up = np.atleast_2d(np.asarray(self.uppers, dtype=float))
        if lo.shape != up.shape or lo.ndim != 2:
            raise ValueError("lower and upper corner arrays must both be (l, dim)")
        if lo.shape[0] < 2:
            raise ValueError("a partition needs at least two cells")
        if not (lo < up).all():
            raise ValueError("every cell needs lower < upper in each coordinate")
        l = lo.shape[0]
        for i, j in itertools.combinations(range(l), 2):
            overlap = np.minimum(up[i], up[j]) > np.maximum(lo[i], lo[j])
            if overlap.all():
                raise ValueError(f"cells {i} and {j} overlap")
        lo = lo.copy()
        up = up.copy()
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lowers", lo)
        object.__setattr__(self, "uppers", up)

    @property
    def cells(self) -> int:
        return self.lowers.shape[0]

    @property
    def dim(self) -> int:
        return self.lowers.shape[1]

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Cell index per point, -1 for points no cell contains."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(pts.shape[0], -1, dtype=int)
        for c in range(self.cells):
            inside = ((pts >= self.lowers[c]) & (pts < self.uppers[c])).all(axis=1)
            out[inside] = c
        return out


def discretize(target, partition: CellPartition) -> np.ndarray:
    """Cell masses of a repartition or model under the partition.

    Repartitions are counted directly.  Models are reduced by the corner
    inclusion-exclusion identity: the box probability is the alternating sum
    of the cdf over the 2^k corners.  The output sums to the mass the
    partition captures, which can be below 1 when cells do not cover space.
    """
    if isinstance(target, Repartition):
        if target.dim != partition.dim:
            raise DimensionMismatch("repartition and partition dimensions differ")
        idx = partition.assign(target.points)
        return np.bincount(idx[idx >= 0], minlength=partition.cells) / target.n
    if isinstance(target, DistributionModel):
        if target.dim != partition.dim:
            raise DimensionMismatch("model and partition dimensions differ")
        k = partition.dim
        out = np.empty(partition.cells)
        for c in range(partition.cells):
            total = 0.0
            for picks in itertools.product((0, 1), repeat=k):
                corner = np.where(np.asarray(picks) == 1, partition.lowers[c], partition.uppers[c])
                total += (-1) ** sum(picks) * float(target.cdf_many(corner[None, :])[0])
            out[c] = total
        return np.maximum(out, 0.0)
    raise TypeError(f"cannot discretize {type(target).__name__}")
