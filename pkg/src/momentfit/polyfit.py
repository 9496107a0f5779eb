"""
Least-squares polynomial amplitudes from moments, and their uncertainty.

The mean squared residual ``<(y - sum_i f_i phi_i)^2>`` is minimised exactly
by ``G f = h`` with ``G[i, l] = <phi_i phi_l>`` and ``h[i] = <y phi_i>``.  The
moment covariance is pushed through ``f = G^-1 h`` to first order:

    df/dh_l = G^-1[:, l]
    df/dg_o = -G^-1 (dG/dg_o) f

where ``dG/dg_o`` is the 0/1 indicator of the Gram cells holding moment
``g_o``.  The pointwise variance of the fit is then ``phi(x)^T Cov(f) phi(x)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import BasisSpec, _as_points, basis_size, product_index
from .errors import ConditioningError, InputError
from .moments import ParameterVector, WeightedSample, accumulate, parameter_vector

CONDITION_GUARD = 1e12


@dataclass
class GramSystem:
    """Normal equations for one degree, cut out of a parameter vector."""

    basis: BasisSpec
    G: np.ndarray
    h: np.ndarray
    y_squared: float
    pcov: np.ndarray  # covariance of the stacked (h, g) entries used by this degree
    product_index: np.ndarray  # Gram cell -> local g index
    condition_estimate: float
    psd_clipped: bool = False

    @property
    def n_coeffs(self) -> int:
        return self.h.shape[0]

    @property
    def n_g(self) -> int:
        return self.pcov.shape[0] - self.n_coeffs


@dataclass
class PolynomialModel:
    """A fitted polynomial on standardized inputs.

    ``gram`` is kept for derivative and model-selection work; a model read
    back from disk has ``gram=None`` and can still predict.
    """

    basis: BasisSpec
    coeffs: np.ndarray
    coeff_cov: np.ndarray
    loss: float
    gram: GramSystem | None = None
    g_inv: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return self.basis.degree

    def predict(self, x) -> Prediction:
        return predict(self, x)


@dataclass
class Prediction:
    value: np.ndarray
    variance: np.ndarray
    extrapolated: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.variance)


def _equilibrated_condition(G: np.ndarray):
    """Jacobi-scale ``G``, LU-factor it and estimate its 1-norm condition."""
    diag = np.abs(np.diag(G))
    if not np.all(np.isfinite(G)) or np.any(diag == 0):
        return None, None, np.inf
    d = 1.0 / np.sqrt(diag)
    Ge = G * np.outer(d, d)
    try:
        lu = scipy.linalg.lu_factor(Ge, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return None, None, np.inf
    if np.any(np.diag(lu[0]) == 0):
        return None, None, np.inf
    inv = scipy.linalg.lu_solve(lu, np.eye(G.shape[0]), check_finite=False)
    cond = np.linalg.norm(Ge, 1) * np.linalg.norm(inv, 1)
    if not np.isfinite(cond):
        cond = np.inf
    return (lu, d), inv * np.outer(d, d), float(cond)


def build_gram(pv: ParameterVector, degree: int | None = None) -> GramSystem:
    """Gram matrix, moment vector and moment covariance for one degree.

    ``degree`` defaults to the full family degree of ``pv``.
    """
    layout = pv.layout
    degree = layout.degree if degree is None else degree
    if degree < 0 or degree > layout.degree:
        raise InputError(f"parameter vector holds moments up to degree {layout.degree}, asked for {degree}")
    basis = pv.basis.with_degree(degree)
    idx = product_index(layout.dim, degree)
    h_sl = layout.h_slice(degree)
    g_sl = layout.g_slice(degree)
    g = pv.values[g_sl]
    sel = np.r_[np.arange(h_sl.start, h_sl.stop), np.arange(g_sl.start, g_sl.stop)]
    pcov = pv.cov_psd[np.ix_(sel, sel)]
    G = g[idx]
    _, _, cond = _equilibrated_condition(G)
    return GramSystem(
        basis=basis,
        G=G,
        h=pv.values[h_sl].copy(),
        y_squared=pv.y_squared,
        pcov=pcov,
        product_index=idx,
        condition_estimate=cond,
        psd_clipped=pv.psd_clipped,
    )


def _coefficient_jacobian(g_inv: np.ndarray, coeffs: np.ndarray, idx: np.ndarray, n_g: int) -> np.ndarray:
    """``d f / d (h, g)`` as a ``(K, K + n_g)`` matrix."""
    k = coeffs.shape[0]
    # S[m, o] = sum over n with idx[m, n] == o of f_n, i.e. (dG/dg_o f)_m
    S = np.zeros((k, n_g))
    rows = np.repeat(np.arange(k), k)
    np.add.at(S, (rows, idx.ravel()), np.tile(coeffs, k))
    return np.hstack([g_inv, -g_inv @ S])


def solve_amplitudes(gs: GramSystem, guard: float = CONDITION_GUARD) -> PolynomialModel:
    """Solve ``G f = h`` and propagate the moment covariance into ``Cov(f)``.

    Raises :class:`ConditioningError` when the (Jacobi-scaled) 1-norm
    condition estimate exceeds ``guard``.
    """
    factors, g_inv, cond = _equilibrated_condition(gs.G)
    if factors is None or cond > guard:
        raise ConditioningError(cond, gs.basis.degree)
    lu, d = factors
    f = d * scipy.linalg.lu_solve(lu, d * gs.h, check_finite=False)
    # one step of iterative refinement
    r = gs.h - gs.G @ f
    f = f + d * scipy.linalg.lu_solve(lu, d * r, check_finite=False)
    g_inv = 0.5 * (g_inv + g_inv.T)

    jac = _coefficient_jacobian(g_inv, f, gs.product_index, gs.n_g)
    coeff_cov = jac @ gs.pcov @ jac.T
    coeff_cov = 0.5 * (coeff_cov + coeff_cov.T)
    loss = gs.y_squared - float(gs.h @ f)
    return PolynomialModel(
        basis=gs.basis,
        coeffs=f,
        coeff_cov=coeff_cov,
        loss=loss,
        gram=gs,
        g_inv=g_inv,
        diagnostics={"conditionEstimate": cond, "psdClipped": gs.psd_clipped},
    )


def coefficient_derivatives(model: PolynomialModel) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(df/dh, df/dg)``; columns follow the local h and g ordering."""
    gs = model.gram
    if gs is None:
        raise InputError("model carries no Gram system (was it loaded from a document?)")
    jac = _coefficient_jacobian(model.g_inv, model.coeffs, gs.product_index, gs.n_g)
    k = model.coeffs.shape[0]
    return jac[:, :k], jac[:, k:]


def predict(model: PolynomialModel, x) -> Prediction:
    """Fit value and variance at physical points ``x``.

    Points outside the training bounding box (when known) are flagged as
    extrapolated; the value is still returned.
    """
    pts = _as_points(x, model.basis.dim)
    phi = model.basis.evaluate(pts)
    value = phi @ model.coeffs
    variance = np.einsum("ni,ij,nj->n", phi, model.coeff_cov, phi)
    variance = np.clip(variance, 0.0, None)
    bbox = model.diagnostics.get("bbox")
    if bbox is None:
        extrap = np.zeros(len(value), dtype=bool)
    else:
        lo, hi = np.asarray(bbox[0]), np.asarray(bbox[1])
        extrap = np.any((pts < lo) | (pts > hi), axis=1)
    return Prediction(value, variance, extrap)


def fit(sample: WeightedSample, degree: int, standardize: bool = True, basis: BasisSpec | None = None) -> PolynomialModel:
    """One-shot fit of a single polynomial of the given total degree."""
    if basis is None:
        basis = BasisSpec.for_data(sample.x, degree, sample.w, standardize=standardize)
    else:
        basis = basis.with_degree(degree)
    pv = parameter_vector(accumulate(sample, basis))
    model = solve_amplitudes(build_gram(pv, degree))
    model.diagnostics["bbox"] = [sample.x.min(axis=0).tolist(), sample.x.max(axis=0).tolist()]
    return model


def physical_coefficients(model: PolynomialModel) -> np.ndarray:
    """Coefficients of the same polynomial in the unstandardized inputs.

    Expands ``prod_i ((x_i - c_i) / s_i)**b_i`` binomially.  Intended for
    display; at high degree the expansion loses precision quickly.
    """
    basis = model.basis
    exps = basis.exponents
    lookup = {a: i for i, a in enumerate(exps)}
    center, scale = basis.affine.center, basis.affine.scale
    out = np.zeros(len(exps))
    for coef, beta in zip(model.coeffs, exps):
        # per-axis expansion: list of (power, factor)
        terms = [[(k, math.comb(b, k) * (-c) ** (b - k) / s**b) for k in range(b + 1)]
                 for b, c, s in zip(beta, center, scale)]
        for combo in itertools.product(*terms):
            alpha = tuple(k for k, _ in combo)
            out[lookup[alpha]] += coef * math.prod(f for _, f in combo)
    return out


def loss_at(model: PolynomialModel, coeffs: np.ndarray) -> float:
    """Mean squared residual ``<y^2> - 2 f.h + f.G.f`` for arbitrary coefficients."""
    gs = model.gram
    return float(gs.y_squared - 2 * coeffs @ gs.h + coeffs @ gs.G @ coeffs)


__all__ = [
    "CONDITION_GUARD",
    "GramSystem",
    "PolynomialModel",
    "Prediction",
    "basis_size",
    "build_gram",
    "coefficient_derivatives",
    "fit",
    "loss_at",
    "physical_coefficients",
    "predict",
    "solve_amplitudes",
]
