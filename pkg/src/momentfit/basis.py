r"""
Monomial bases with per-region affine standardization.

A basis of total degree :math:`n` in :math:`d` dimensions holds every
monomial :math:`z^\alpha` with :math:`|\alpha| \le n`, where
:math:`z = (x - \mu) / s` is the standardized input.  Monomials are kept in
graded lexicographic order, so the basis of degree :math:`m < n` is always
a prefix of the basis of degree :math:`n`.  Model selection relies on this.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputError

_INT64_MAX = 2**63 - 1


def basis_size(dim: int, degree: int) -> int:
    """Number of monomials of total degree ``<= degree`` in ``dim`` variables.

    Equals ``C(degree + dim, dim)``.  Raises ``OverflowError`` if the count
    does not fit a signed 64-bit integer.
    """
    if dim < 1 or degree < 0:
        raise InputError(f"need dim >= 1 and degree >= 0, got dim={dim}, degree={degree}")
    n = math.comb(degree + dim, dim)
    if n > _INT64_MAX:
        raise OverflowError(f"basis size C({degree + dim}, {dim}) exceeds 2**63 - 1")
    return n


@lru_cache(maxsize=None)
def monomial_exponents(dim: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Exponent multi-indices in graded lexicographic order.

    >>> monomial_exponents(2, 2)
    ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    """
    basis_size(dim, degree)
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            alpha = [0] * dim
            for axis in combo:
                alpha[axis] += 1
            out.append(tuple(alpha))
    return tuple(out)


@lru_cache(maxsize=None)
def _exponent_index(dim: int, degree: int) -> dict:
    return {alpha: i for i, alpha in enumerate(monomial_exponents(dim, degree))}


@lru_cache(maxsize=None)
def product_index(dim: int, degree: int) -> np.ndarray:
    """Matrix ``P[i, l]`` = position of monomial ``alpha_i + alpha_l`` in the degree ``2*degree`` basis.

    This is the map from Gram cells to distinct moments.  In one dimension
    ``P[i, l] = i + l`` (Hankel structure).
    """
    exps = monomial_exponents(dim, degree)
    lookup = _exponent_index(dim, 2 * degree)
    k = len(exps)
    idx = np.empty((k, k), dtype=np.intp)
    for i, a in enumerate(exps):
        for l, b in enumerate(exps[: i + 1]):
            idx[i, l] = idx[l, i] = lookup[tuple(p + q for p, q in zip(a, b))]
    idx.setflags(write=False)
    return idx


@dataclass(frozen=True)
class AffineMap:
    """``z = (x - center) / scale`` applied per axis."""

    center: tuple[float, ...]
    scale: tuple[float, ...]

    def __post_init__(self):
        if len(self.center) != len(self.scale):
            raise InputError("affine center and scale differ in length")
        if not all(s > 0 and math.isfinite(s) for s in self.scale):
            raise InputError(f"affine scale factors must be positive and finite, got {self.scale}")
        if not all(math.isfinite(c) for c in self.center):
            raise InputError("affine center must be finite")

    @classmethod
    def identity(cls, dim: int) -> AffineMap:
        return cls((0.0,) * dim, (1.0,) * dim)

    @classmethod
    def standardize(cls, x, w=None) -> AffineMap:
        """Zero (weighted) mean, unit half-range per axis.

        Axes with zero range keep scale 1.  Falls back to the unweighted mean
        when the weights sum to zero.
        """
        x = _column_points(x)
        if w is not None and np.sum(w) != 0:
            w = np.asarray(w, dtype=float)
            center = (w @ x) / np.sum(w)
        else:
            center = x.mean(axis=0)
        half = 0.5 * (x.max(axis=0) - x.min(axis=0))
        half = np.where(half > 0, half, 1.0)
        return cls(tuple(float(c) for c in center), tuple(float(s) for s in half))

    @property
    def dim(self) -> int:
        return len(self.center)

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.asarray(self.center)) / np.asarray(self.scale)

    def invert(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * np.asarray(self.scale) + np.asarray(self.center)


@dataclass(frozen=True)
class BasisSpec:
    """Total-degree monomial basis on standardized inputs."""

    dim: int
    degree: int
    affine: AffineMap

    def __post_init__(self):
        if self.affine.dim != self.dim:
            raise InputError(f"affine map has dim {self.affine.dim}, basis has dim {self.dim}")
        basis_size(self.dim, self.degree)

    @classmethod
    def for_data(cls, x, degree: int, w=None, standardize: bool = True) -> BasisSpec:
        x = _column_points(x)
        dim = x.shape[1]
        affine = AffineMap.standardize(x, w) if standardize else AffineMap.identity(dim)
        return cls(dim, degree, affine)

    @property
    def size(self) -> int:
        return basis_size(self.dim, self.degree)

    @property
    def exponents(self) -> tuple[tuple[int, ...], ...]:
        return monomial_exponents(self.dim, self.degree)

    def with_degree(self, degree: int) -> BasisSpec:
        return BasisSpec(self.dim, degree, self.affine)

    def evaluate(self, x, degree: int | None = None) -> np.ndarray:
        """Design matrix ``(n_points, n_monomials)`` at physical points ``x``."""
        z = self.affine.apply(_as_points(x, self.dim))
        return monomials(z, self.degree if degree is None else degree)


def monomials(z: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate every monomial of total degree ``<= degree`` at standardized points ``z``."""
    n, dim = z.shape
    powers = np.ones((degree + 1, n, dim))
    for e in range(1, degree + 1):
        powers[e] = powers[e - 1] * z
    exps = monomial_exponents(dim, degree)
    out = np.empty((n, len(exps)))
    for k, alpha in enumerate(exps):
        col = powers[alpha[0], :, 0].copy()
        for axis in range(1, dim):
            if alpha[axis]:
                col *= powers[alpha[axis], :, axis]
        out[:, k] = col
    return out


def _column_points(x) -> np.ndarray:
    """Training inputs as ``(N, dim)``; a flat array is N one-dimensional points."""
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim <= 1 else x


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if dim == 1 else x.reshape(1, -1)
    if x.shape[1] != dim:
        raise InputError(f"expected points of dimension {dim}, got {x.shape[1]}")
    return x
