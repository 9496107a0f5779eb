"""
Independent cross-checks for the analytic machinery.

Nothing here reuses the moment accumulator or the Gram solver of the main
pipeline: the bootstrap and the brute-force fit build their normal
equations straight from the point list with plain numpy.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec
from .errors import InputError, MomentfitError
from .moments import WeightedSample
from .polyfit import PolynomialModel, coefficient_derivatives, solve_amplitudes

THREADS_ENV = "MOMENTFIT_THREADS"
FD_CONDITION_LIMIT = 1e8


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def normal_equations_fit(sample: WeightedSample, basis: BasisSpec) -> np.ndarray:
    """Weighted least-squares coefficients from the raw design matrix."""
    V = basis.evaluate(sample.x)
    w = sample.w
    G = (V * w[:, None]).T @ V
    h = V.T @ (w * sample.y)
    return np.linalg.solve(G, h)


@dataclass
class BootstrapReport:
    replicas: int
    seed: int
    coeffs: np.ndarray  # (replicas kept, K)
    empirical_coeff_cov: np.ndarray
    band_at_points: np.ndarray | None
    points: np.ndarray | None
    dropped: int


class BootstrapError(MomentfitError):
    pass


def bootstrap_fit(
    sample: WeightedSample,
    basis: BasisSpec,
    replicas: int = 1000,
    seed: int = 0,
    points=None,
) -> BootstrapReport:
    """Resample (x, y, w) rows with replacement, refit, collect the spread.

    Replicas whose Gram matrix is singular are dropped; more than 20 %
    dropped is an error.  The report is identical for identical seeds
    regardless of ``MOMENTFIT_THREADS``.
    """
    n = len(sample)
    if n < 10:
        raise InputError(f"bootstrap needs at least 10 points, got {n}")
    if replicas < 100:
        raise InputError("bootstrap needs at least 100 replicas")
    V = basis.evaluate(sample.x)
    wy = sample.w * sample.y
    Vw = V * sample.w[:, None]
    seeds = np.random.SeedSequence(seed).spawn(replicas)

    def one(ss):
        counts = np.bincount(np.random.default_rng(ss).integers(0, n, n), minlength=n).astype(float)
        G = (Vw * counts[:, None]).T @ V
        h = V.T @ (counts * wy)
        try:
            f = np.linalg.solve(G, h)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.cond(G) > 1e14 or not np.all(np.isfinite(f)):
            return None
        return f

    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            fits = list(pool.map(one, seeds))
    else:
        fits = [one(s) for s in seeds]
    kept = [f for f in fits if f is not None]
    dropped = replicas - len(kept)
    if dropped > 0.2 * replicas:
        raise BootstrapError(f"{dropped} of {replicas} bootstrap replicas had singular Gram matrices")
    coeffs = np.array(kept)
    cov = np.cov(coeffs, rowvar=False, ddof=1).reshape(V.shape[1], V.shape[1])
    band = None
    if points is not None:
        phi = basis.evaluate(points)
        band = np.std(coeffs @ phi.T, axis=0, ddof=1)
        points = np.asarray(points, dtype=float)
    return BootstrapReport(replicas, seed, coeffs, cov, band, points, dropped)


@dataclass
class KnownSigmaCovariance:
    """Straight-line fit ``a + b x`` with known per-point target uncertainties.

    ``cov`` is the usual weighted least-squares result ``G^-1 / c``.
    ``moment_matrix`` holds the alternative values ``[[g0, g1], [g1, g2]]`` for
    side-by-side comparison; it is not a covariance of ``(a, b)``.
    """

    coeffs: np.ndarray
    cov: np.ndarray
    c: float
    g: np.ndarray  # g0, g1, g2
    G: np.ndarray
    moment_matrix: np.ndarray


def known_sigma_covariance(x, y, sigma_y) -> KnownSigmaCovariance:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma_y = np.asarray(sigma_y, dtype=float)
    if np.any(sigma_y <= 0):
        raise InputError("all sigma_y must be positive")
    w = 1.0 / sigma_y**2
    c = float(np.sum(w))
    g = np.array([1.0, w @ x / c, w @ x**2 / c])
    h = np.array([w @ y / c, w @ (x * y) / c])
    G = np.array([[g[0], g[1]], [g[1], g[2]]])
    G_inv = np.linalg.inv(G)
    return KnownSigmaCovariance(G_inv @ h, G_inv / c, c, g, G, G.copy())


@dataclass
class FDCheck:
    max_rel_error: float
    skipped: bool = False
    notice: str = ""


def finite_difference_check(model: PolynomialModel, rel_step: float = 1e-6) -> FDCheck:
    """Compare analytic ``df/dh`` and ``df/dg`` with central differences.

    Each distinct moment is nudged by ``rel_step`` times the change that
    would move the coefficients by their own size, ``max|f| / max|df/dp|``
    (rounded to a power of two so the nudge itself is exact), and the Gram
    system is re-solved.  Scaling by the moment value instead breaks down
    for small high-order moments with large leverage: the second-order
    term of the central difference then dominates.  The error for one moment is the max-norm of the
    difference over the max-norm of the analytic column.  The constant
    ``<1>`` never varies and is not checked, nor are moments whose analytic
    column vanishes.  Models with condition estimate above 1e8 are skipped.
    """
    cond = model.diagnostics.get("conditionEstimate", np.inf)
    if model.gram is None:
        return FDCheck(float("nan"), True, "model has no Gram system")
    if not cond < FD_CONDITION_LIMIT:
        return FDCheck(float("nan"), True, f"skipped: condition estimate {cond:.3e} >= {FD_CONDITION_LIMIT:.0e}")
    gs = model.gram
    dh, dg = coefficient_derivatives(model)
    k = gs.n_coeffs
    g_vals = np.empty(gs.n_g)
    g_vals[gs.product_index] = gs.G

    def resolve(h, g):
        G = g[gs.product_index]
        return np.linalg.solve(G, h)

    def pow2(v):
        return 2.0 ** np.round(np.log2(v))

    f_scale = max(float(np.max(np.abs(model.coeffs))), np.finfo(float).tiny)
    worst = 0.0
    for j in range(k + gs.n_g):
        if j == k:  # <1>
            continue
        analytic = dh[:, j] if j < k else dg[:, j - k]
        scale = np.max(np.abs(analytic))
        if scale == 0:
            continue
        h_p, h_m = gs.h.copy(), gs.h.copy()
        g_p, g_m = g_vals.copy(), g_vals.copy()
        step = pow2(rel_step * f_scale / scale)
        if j < k:
            h_p[j] += step
            h_m[j] -= step
        else:
            o = j - k
            g_p[o] += step
            g_m[o] -= step
        numeric = (resolve(h_p, g_p) - resolve(h_m, g_m)) / (2 * step)
        worst = max(worst, float(np.max(np.abs(numeric - analytic)) / scale))
    return FDCheck(worst)


__all__ = [
    "BootstrapError",
    "BootstrapReport",
    "FDCheck",
    "KnownSigmaCovariance",
    "THREADS_ENV",
    "bootstrap_fit",
    "finite_difference_check",
    "known_sigma_covariance",
    "normal_equations_fit",
]
