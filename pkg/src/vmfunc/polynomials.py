"""Sparse polynomials in several real variables.

Influence formulas for moment-like functionals are polynomials in the
coordinates of the perturbing point, so carrying them symbolically keeps
expectations exact wherever the underlying model exposes exact raw moments.
Terms map an exponent tuple to a float coefficient; zero coefficients are
pruned eagerly.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

__all__ = ["Polynomial", "constant", "coordinate", "monomial"]


class Polynomial:
    """Polynomial in ``dim`` variables stored as {exponents: coefficient}."""

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms: Mapping[tuple[int, ...], float]):
        if dim < 1:
            raise ValueError("polynomial dimension must be >= 1")
        clean: dict[tuple[int, ...], float] = {}
        for exps, coef in terms.items():
            key = tuple(int(e) for e in exps)
            if len(key) != dim:
                raise ValueError(f"exponent tuple {key} does not match dim {dim}")
            if any(e < 0 for e in key):
                raise ValueError(f"negative exponent in {key}")
            c = clean.get(key, 0.0) + float(coef)
            clean[key] = c
        self.dim = int(dim)
        self.terms = {k: v for k, v in clean.items() if v != 0.0}

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an array of shape (..., dim); returns shape (...)."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"points have dimension {pts.shape[-1]}, expected {self.dim}")
        out = np.zeros(pts.shape[:-1], dtype=float)
        for exps, coef in self.terms.items():
            term = np.full(pts.shape[:-1], coef, dtype=float)
            for axis, e in enumerate(exps):
                if e:
                    term = term * pts[..., axis] ** e
            out += term
        return out

    # ring operations ------------------------------------------------------

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.dim != self.dim:
                raise ValueError("polynomial dimensions differ")
            return other
        return constant(self.dim, float(other))

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        merged = dict(self.terms)
        for exps, coef in other.terms.items():
            merged[exps] = merged.get(exps, 0.0) + coef
        return Polynomial(self.dim, merged)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.dim, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + self._coerce(other)

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            c = float(other)
            return Polynomial(self.dim, {k: c * v for k, v in self.terms.items()})
        if other.dim != self.dim:
            raise ValueError("polynomial dimensions differ")
        prod: dict[tuple[int, ...], float] = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                key = tuple(a + b for a, b in zip(ea, eb))
                prod[key] = prod.get(key, 0.0) + ca * cb
        return Polynomial(self.dim, prod)

    __rmul__ = __mul__

    def __pow__(self, power: int) -> "Polynomial":
        if power < 0:
            raise ValueError("negative powers are not polynomials")
        result = constant(self.dim, 1.0)
        for _ in range(int(power)):
            result = result * self
        return result

    # calculus and structure ----------------------------------------------

    def partial(self, axis: int) -> "Polynomial":
        """Partial derivative with respect to coordinate ``axis``."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for dim {self.dim}")
        out: dict[tuple[int, ...], float] = {}
        for exps, coef in self.terms.items():
            e = exps[axis]
            if e:
                key = exps[:axis] + (e - 1,) + exps[axis + 1:]
                out[key] = out.get(key, 0.0) + coef * e
        return Polynomial(self.dim, out)

    @property
    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def map_terms(self, fn: Callable[[tuple[int, ...], float], float]) -> float:
        """Sum fn(exponents, coefficient) over all terms (0.0 when empty)."""
        return float(sum(fn(exps, coef) for exps, coef in self.terms.items()))

    def embed(self, total_dim: int, offset: int) -> "Polynomial":
        """View this polynomial inside a larger variable block at ``offset``."""
        if offset < 0 or offset + self.dim > total_dim:
            raise ValueError("embedding block out of range")
        pad_left = (0,) * offset
        pad_right = (0,) * (total_dim - offset - self.dim)
        return Polynomial(total_dim, {pad_left + exps + pad_right: c for exps, c in self.terms.items()})

    def drop_one_sided_pairs(self, split: int) -> "Polynomial":
        """Remove terms supported on only one side of a variable split.

        For a kernel in (Y, Z) blocks, terms depending only on Y, only on Z,
        or on neither integrate to zero against a product of two zero-mass
        signed measures; removing them is the gauge reduction used by the
        closed-form second-derivative kernels.
        """
        if not 0 < split < self.dim:
            raise ValueError("split must be interior")
        kept = {
            exps: coef
            for exps, coef in self.terms.items()
            if any(exps[:split]) and any(exps[split:])
        }
        return Polynomial(self.dim, kept)

    def __repr__(self) -> str:
        if not self.terms:
            return f"Polynomial({self.dim}, 0)"
        bits = []
        for exps in sorted(self.terms, key=lambda e: (sum(e), e)):
            mono = "*".join(f"x{i}^{e}" for i, e in enumerate(exps) if e) or "1"
            bits.append(f"{self.terms[exps]:+g}*{mono}")
        return f"Polynomial({self.dim}, {' '.join(bits)})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.dim == other.dim
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.dim, frozenset(self.terms.items())))


def constant(dim: int, value: float) -> Polynomial:
    return Polynomial(dim, {(0,) * dim: float(value)})


def coordinate(dim: int, axis: int) -> Polynomial:
    if not 0 <= axis < dim:
        raise ValueError(f"axis {axis} out of range for dim {dim}")
    exps = tuple(1 if i == axis else 0 for i in range(dim))
    return Polynomial(dim, {exps: 1.0})


def monomial(dim: int, exponents: tuple[int, ...], coefficient: float = 1.0) -> Polynomial:
    return Polynomial(dim, {tuple(exponents): float(coefficient)})
