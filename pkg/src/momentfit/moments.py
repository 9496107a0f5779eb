"""
Weighted moments of (x, y, w) samples and their estimated covariance.

Every regression input is a weighted average ``p_m = sum(w a_m) / sum(w)`` of
a per-point product ``a_m = y**b * phi_k(x)``.  Treating ``p_m`` as a ratio
of two asymptotically Gaussian sums and propagating errors to first order
gives

    Cov(p_m, p_n) = sum_j w_j**2 (a_mj - p_m)(a_nj - p_n) / (N (N - 1) <w>**2)

with ``<w> = sum(w) / N``.  With unit weights this is the usual squared
standard error of a mean.

The accumulator keeps shifted power sums (``sum w (a - c)``,
``sum w**2 (a - c)(b - c)`` and so on, for a fixed shift ``c``) so the
covariance is available after a single pass and accumulators built on
disjoint shards can be merged.  The shift only guards against cancellation;
it has no effect on the result beyond rounding.

``N`` counts every point, including zero-weight ones.  A zero-weight point
adds nothing to any weighted sum but does change ``N (N - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import BasisSpec, basis_size, monomial_exponents, monomials
from .errors import DegenerateWeightsError, InputError, InsufficientDataError

CHUNK = 4096

__all__ = [
    "WeightedSample",
    "MomentLayout",
    "MomentAccumulator",
    "ParameterVector",
    "accumulate",
    "parameter_vector",
    "clip_psd",
]


@dataclass(frozen=True)
class WeightedSample:
    """Training triplets: points ``x`` (N, dim), targets ``y`` (N,), weights ``w`` (N,)."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        w = np.ones_like(y) if self.w is None else np.asarray(self.w, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0] or w.shape != y.shape:
            raise InputError(f"inconsistent sample shapes x{x.shape} y{y.shape} w{w.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
            raise InputError("sample contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_arrays(cls, x, y, w=None) -> WeightedSample:
        return cls(x, y, w)

    def __len__(self):
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, index) -> WeightedSample:
        return WeightedSample(self.x[index], self.y[index], self.w[index])

    def concat(self, other: WeightedSample) -> WeightedSample:
        return WeightedSample(
            np.vstack([self.x, other.x]),
            np.concatenate([self.y, other.y]),
            np.concatenate([self.w, other.w]),
        )


@dataclass(frozen=True)
class MomentLayout:
    """Positions of the h, g and <y^2> entries inside a parameter vector.

    ``h[k] = <y phi_k>`` for every monomial of degree <= ``degree``,
    ``g[o] = <phi_o>`` for every monomial of degree <= ``2 * degree``
    (each distinct Gram entry once), then ``q = <y^2>``.
    """

    dim: int
    degree: int

    @property
    def n_h(self) -> int:
        return basis_size(self.dim, self.degree)

    @property
    def n_g(self) -> int:
        return basis_size(self.dim, 2 * self.degree)

    @property
    def g_offset(self) -> int:
        return self.n_h

    @property
    def q_index(self) -> int:
        return self.n_h + self.n_g

    @property
    def size(self) -> int:
        return self.n_h + self.n_g + 1

    def h_slice(self, degree: int | None = None) -> slice:
        n = self.n_h if degree is None else basis_size(self.dim, degree)
        return slice(0, n)

    def g_slice(self, degree: int | None = None) -> slice:
        n = self.n_g if degree is None else basis_size(self.dim, 2 * degree)
        return slice(self.g_offset, self.g_offset + n)

    def labels(self) -> list[str]:
        def name(alpha):
            parts = [f"z{i + 1}^{e}" if e > 1 else f"z{i + 1}" for i, e in enumerate(alpha) if e]
            return "*".join(parts) or "1"

        h = [f"<y*{name(a)}>" for a in monomial_exponents(self.dim, self.degree)]
        g = [f"<{name(a)}>" for a in monomial_exponents(self.dim, 2 * self.degree)]
        return h + g + ["<y^2>"]


def _sym_outer(a, b):
    """``a b^T + b a^T``, symmetric to the last bit."""
    m = np.outer(a, b)
    return m + m.T


def _features(z: np.ndarray, y: np.ndarray, layout: MomentLayout) -> np.ndarray:
    g = monomials(z, 2 * layout.degree)
    h = y[:, None] * g[:, : layout.n_h]
    return np.hstack([h, g, (y * y)[:, None]])


@dataclass
class MomentAccumulator:
    """Mergeable weighted power sums for one basis family.

    All sums are taken about a fixed per-feature ``shift``.  Merging two
    accumulators with different shifts re-centres the second one exactly
    (up to rounding).
    """

    basis: BasisSpec
    shift: np.ndarray
    count: int = 0
    sum_w: float = 0.0
    sum_w2: float = 0.0
    sum_wd: np.ndarray = field(default=None)
    sum_w2d: np.ndarray = field(default=None)
    sum_w2dd: np.ndarray = field(default=None)

    def __post_init__(self):
        p = self.layout.size
        if self.sum_wd is None:
            self.sum_wd = np.zeros(p)
            self.sum_w2d = np.zeros(p)
            self.sum_w2dd = np.zeros((p, p))

    @property
    def layout(self) -> MomentLayout:
        return MomentLayout(self.basis.dim, self.basis.degree)

    def copy(self) -> MomentAccumulator:
        return MomentAccumulator(
            self.basis, self.shift.copy(), self.count, self.sum_w, self.sum_w2,
            self.sum_wd.copy(), self.sum_w2d.copy(), self.sum_w2dd.copy(),
        )

    def _add_chunk(self, feats: np.ndarray, w: np.ndarray) -> None:
        d = feats - self.shift
        w2 = w * w
        self.count += feats.shape[0]
        self.sum_w += float(np.sum(w))
        self.sum_w2 += float(np.sum(w2))
        self.sum_wd += w @ d
        self.sum_w2d += w2 @ d
        cross = (d * w2[:, None]).T @ d
        self.sum_w2dd += 0.5 * (cross + cross.T)

    def update(self, sample: WeightedSample) -> MomentAccumulator:
        """Add a sample in place, chunk by chunk, and return self."""
        if sample.dim != self.basis.dim:
            raise InputError(f"sample has dim {sample.dim}, basis expects {self.basis.dim}")
        layout = self.layout
        for start in range(0, len(sample), CHUNK):
            stop = start + CHUNK
            z = self.basis.affine.apply(sample.x[start:stop])
            self._add_chunk(_features(z, sample.y[start:stop], layout), sample.w[start:stop])
        return self

    def merge(self, other: MomentAccumulator) -> MomentAccumulator:
        """Accumulator over the union of both point sets (self is not modified)."""
        if other.basis != self.basis:
            raise InputError("cannot merge accumulators built on different bases")
        out = self.copy()
        d = other.shift - self.shift
        sum_wd, sum_w2d, sum_w2dd = other.sum_wd, other.sum_w2d, other.sum_w2dd
        if np.any(d):
            sum_wd = sum_wd + d * other.sum_w
            sum_w2dd = sum_w2dd + _sym_outer(sum_w2d, d) + np.outer(d, d) * other.sum_w2
            sum_w2d = sum_w2d + d * other.sum_w2
        out.count += other.count
        out.sum_w += other.sum_w
        out.sum_w2 += other.sum_w2
        out.sum_wd += sum_wd
        out.sum_w2d += sum_w2d
        out.sum_w2dd += sum_w2dd
        return out

    __add__ = merge

    def raw_sums(self) -> dict:
        """Unshifted sums ``sum w a``, ``sum w^2 a`` and ``sum w^2 a a^T`` (mainly for inspection)."""
        c = self.shift
        return {
            "count": self.count,
            "sum_w": self.sum_w,
            "sum_w2": self.sum_w2,
            "sum_wa": self.sum_wd + c * self.sum_w,
            "sum_w2a": self.sum_w2d + c * self.sum_w2,
            "sum_w2aa": self.sum_w2dd + _sym_outer(self.sum_w2d, c) + np.outer(c, c) * self.sum_w2,
        }


def accumulate(sample: WeightedSample, basis: BasisSpec, shift=None) -> MomentAccumulator:
    """Accumulate weighted moments of ``sample`` for all monomials up to ``basis.degree``.

    ``shift`` defaults to the unweighted feature mean of the first chunk.
    Passing the shift of another accumulator makes a later ``merge`` exact
    to the last bit when the chunk boundaries line up.
    """
    if sample.dim != basis.dim:
        raise InputError(f"sample has dim {sample.dim}, basis expects {basis.dim}")
    layout = MomentLayout(basis.dim, basis.degree)
    if shift is None:
        if len(sample) == 0:
            shift = np.zeros(layout.size)
        else:
            head = sample.subset(slice(0, CHUNK))
            shift = _features(basis.affine.apply(head.x), head.y, layout).mean(axis=0)
    acc = MomentAccumulator(basis, np.array(shift, dtype=float))
    return acc.update(sample)


def clip_psd(cov: np.ndarray, rel_tol: float = 1e-10) -> tuple[np.ndarray, bool]:
    """Symmetrize ``cov`` and zero its negative eigenvalues.

    The eigen-decomposition is done on the correlation-scaled matrix so small
    variances keep their relative precision.  Returns the repaired matrix
    and a flag that is set when some eigenvalue was below
    ``-rel_tol * trace`` (a genuine violation rather than rounding).
    """
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov).copy()
    flagged = bool(np.any(diag < -rel_tol * max(np.sum(np.abs(diag)), np.finfo(float).tiny)))
    live = diag > 0
    out = np.zeros_like(cov)
    if not np.any(live):
        return out, flagged
    sub = cov[np.ix_(live, live)]
    s = np.sqrt(diag[live])
    corr = sub / np.outer(s, s)
    vals, vecs = np.linalg.eigh(corr)
    if vals[0] < 0:
        flagged = flagged or bool(vals[0] < -rel_tol * np.trace(corr))
        vals = np.clip(vals, 0.0, None)
        corr = (vecs * vals) @ vecs.T
        sub = corr * np.outer(s, s)
    out[np.ix_(live, live)] = 0.5 * (sub + sub.T)
    return out, flagged


class ParameterVector:
    """Estimated moments ``p`` (h, then g, then <y^2>) with covariance ``cov``.

    ``cov`` is the raw estimate.  ``cov_psd`` is the same matrix after
    :func:`clip_psd`; use it wherever a quadratic form must stay
    non-negative.
    """

    def __init__(self, values, cov, layout: MomentLayout, basis: BasisSpec, count: int, sum_w: float):
        self.values = values
        self.cov = cov
        self.layout = layout
        self.basis = basis
        self.count = count
        self.sum_w = sum_w

    @property
    def h(self) -> np.ndarray:
        return self.values[self.layout.h_slice()]

    @property
    def g(self) -> np.ndarray:
        return self.values[self.layout.g_slice()]

    @property
    def y_squared(self) -> float:
        return float(self.values[self.layout.q_index])

    @cached_property
    def _psd(self):
        return clip_psd(self.cov)

    @property
    def cov_psd(self) -> np.ndarray:
        return self._psd[0]

    @property
    def psd_clipped(self) -> bool:
        return self._psd[1]

    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def x_mean_cov(self) -> tuple[np.ndarray, np.ndarray]:
        """Weighted mean and covariance of the physical inputs, from first and second moments."""
        dim = self.layout.dim
        if self.layout.degree < 1:
            raise InputError("x covariance needs moments up to degree 2")
        lookup = {a: i for i, a in enumerate(monomial_exponents(dim, 2))}
        g = self.g
        unit = np.eye(dim, dtype=int)
        mz = np.array([g[lookup[tuple(unit[i])]] for i in range(dim)])
        szz = np.empty((dim, dim))
        for i in range(dim):
            for j in range(dim):
                szz[i, j] = g[lookup[tuple(unit[i] + unit[j])]]
        cz = szz - np.outer(mz, mz)
        scale = np.asarray(self.basis.affine.scale)
        mean = self.basis.affine.invert(mz)
        return mean, cz * np.outer(scale, scale)


def parameter_vector(acc: MomentAccumulator) -> ParameterVector:
    """Turn accumulated sums into moment estimates and their covariance."""
    n = acc.count
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points for a covariance estimate, got {n}")
    if acc.sum_w == 0:
        raise DegenerateWeightsError("weights sum to zero")
    layout = acc.layout
    e = acc.sum_wd / acc.sum_w
    values = acc.shift + e
    centred = acc.sum_w2dd - _sym_outer(e, acc.sum_w2d) + np.outer(e, e) * acc.sum_w2
    mean_w = acc.sum_w / n
    cov = centred / (n * (n - 1) * mean_w * mean_w)
    cov = 0.5 * (cov + cov.T)
    # <1> is exactly one with no spread
    k0 = layout.g_offset
    values[k0] = 1.0
    cov[k0, :] = 0.0
    cov[:, k0] = 0.0
    return ParameterVector(values, cov, layout, acc.basis, n, acc.sum_w)
