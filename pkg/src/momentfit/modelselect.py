"""
Expected cross-validation loss and polynomial degree selection.

Holding the sample fixed and letting only the fitted coefficients vary, the
loss ``E+ = <y^2> - 2 f.h + f.G.f`` has its minimum at the least-squares
solution, so to second order

    E[E+] = loss_min + bias,    bias = 1/2 sum_lm d2E+/dp_l dp_m Cov(p_l, p_m)

and its spread is ``sigma = sqrt(2) * bias``, as for a chi-square variable.
Three ways of forming the bias are offered:

``upper-left``
    Only the h-h block of the Hessian, ``2 G^-1``, so
    ``bias = tr(G^-1 Cov(h))``.  The default.
``full``
    The h/g block Hessian with block coefficients 2, -4 and 6.
``exact``
    The Hessian of ``E+`` as a function of all moments.  Because
    ``E+ = loss_min + (f - f0).G.(f - f0)`` it reduces to
    ``bias = tr(G Cov(f))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, InputError
from .moments import ParameterVector
from .polyfit import CONDITION_GUARD, PolynomialModel, build_gram, coefficient_derivatives, solve_amplitudes

BLOCK_MODES = ("upper-left", "full", "exact")
_TAGS = {"upper-left": "upper-left-block", "full": "full-block", "exact": "exact-hessian"}


@dataclass(frozen=True)
class SelectConfig:
    """Degree scan settings.

    Degrees ``0 .. n_max + scan_extra`` are scanned; a region is only
    allowed to keep degrees ``<= n_max``.
    """

    n_max: int = 1
    scan_extra: int = 2
    significance: float = 0.0
    block_mode: str = "upper-left"

    def __post_init__(self):
        if self.n_max < 0:
            raise InputError("n_max must be >= 0")
        if self.scan_extra < 1:
            raise InputError("scan_extra must be >= 1")
        if self.significance < 0:
            raise InputError("significance must be >= 0")
        if self.block_mode not in BLOCK_MODES:
            raise InputError(f"block_mode must be one of {BLOCK_MODES}")

    @property
    def max_degree(self) -> int:
        return self.n_max + self.scan_extra


@dataclass
class DegreeReport:
    degree: int
    n_coeffs: int
    loss_min: float
    bias: float
    expected_loss: float
    sigma: float
    approximation: str
    condition_estimate: float = float("nan")
    flagged: bool = False

    def score(self, significance: float) -> float:
        return self.expected_loss + significance * self.sigma


def _bias_upper_left(model: PolynomialModel) -> float:
    k = model.coeffs.shape[0]
    cov_h = model.gram.pcov[:k, :k]
    return float(np.sum(model.g_inv * cov_h))


def _bias_full_block(model: PolynomialModel) -> float:
    k = model.coeffs.shape[0]
    _, dg = coefficient_derivatives(model)  # -G^-1 (dG/dg) f
    G = model.gram.G
    hess = np.block([
        [2.0 * model.g_inv, 4.0 * dg],
        [4.0 * dg.T, 6.0 * (dg.T @ G @ dg)],
    ])
    return 0.5 * float(np.sum(hess * model.gram.pcov))


def _bias_exact(model: PolynomialModel) -> float:
    return float(np.sum(model.gram.G * model.coeff_cov))


_BIAS = {"upper-left": _bias_upper_left, "full": _bias_full_block, "exact": _bias_exact}


def expected_loss(model: PolynomialModel, mode: str = "upper-left") -> DegreeReport:
    """Minimum loss, bias, expected loss and its spread for one fitted degree."""
    if model.gram is None:
        raise InputError("expected_loss needs a model with its Gram system")
    if mode not in _BIAS:
        raise InputError(f"unknown block mode {mode!r}")
    bias = _BIAS[mode](model)
    flagged = bool(model.diagnostics.get("psdClipped", False))
    if bias < 0:
        flagged = True
        bias = 0.0
    return DegreeReport(
        degree=model.degree,
        n_coeffs=model.coeffs.shape[0],
        loss_min=model.loss,
        bias=bias,
        expected_loss=model.loss + bias,
        sigma=math.sqrt(2.0) * bias,
        approximation=_TAGS[mode],
        condition_estimate=model.diagnostics.get("conditionEstimate", float("nan")),
        flagged=flagged,
    )


@dataclass
class LossDifference:
    delta: float
    sigma: float


def loss_difference(ra: DegreeReport, rb: DegreeReport) -> LossDifference:
    """Expected-loss change going from ``ra`` to ``rb``; its spread is ``|sigma_b - sigma_a|``."""
    return LossDifference(rb.expected_loss - ra.expected_loss, abs(rb.sigma - ra.sigma))


@dataclass
class Selection:
    chosen: int
    reports: list[DegreeReport]
    escalate: bool
    models: dict[int, PolynomialModel] = field(default_factory=dict, repr=False)
    excluded: dict[int, float] = field(default_factory=dict)

    def report(self, degree: int) -> DegreeReport:
        for r in self.reports:
            if r.degree == degree:
                return r
        raise KeyError(degree)

    def best_within(self, n_max: int, significance: float = 0.0) -> int:
        """Best-scoring scanned degree not above ``n_max``."""
        allowed = [r for r in self.reports if r.degree <= n_max]
        return _argmin(allowed, significance)


def _argmin(reports, significance):
    best = None
    for r in reports:  # ascending degree; strict '<' keeps the lower degree on ties
        if best is None or r.score(significance) < best.score(significance):
            best = r
    return best.degree


def select_degree(
    pv: ParameterVector,
    cfg: SelectConfig = SelectConfig(),
    degrees=None,
    guard: float = CONDITION_GUARD,
) -> Selection:
    """Scan degrees and pick the minimum of ``expected_loss + s * sigma``.

    ``degrees`` defaults to ``0 .. cfg.max_degree``.  The first degree that
    trips the conditioning guard ends the scan: it and every higher degree
    are listed in ``excluded``.
    """
    if degrees is None:
        degrees = range(cfg.max_degree + 1)
    degrees = sorted(degrees)
    if not degrees:
        raise InputError("empty degree range")
    if degrees[-1] > pv.layout.degree:
        raise InputError(
            f"scan to degree {degrees[-1]} needs moments up to {2 * degrees[-1]}, "
            f"parameter vector holds {2 * pv.layout.degree}"
        )
    reports, models, excluded = [], {}, {}
    for i, d in enumerate(degrees):
        try:
            model = solve_amplitudes(build_gram(pv, d), guard=guard)
        except ConditioningError as exc:
            excluded[d] = exc.estimate
            for rest in degrees[i + 1:]:
                excluded[rest] = float("nan")
            break
        models[d] = model
        reports.append(expected_loss(model, cfg.block_mode))
    if not reports:
        raise ConditioningError(excluded[degrees[0]], degrees[0])
    chosen = _argmin(reports, cfg.significance)
    return Selection(chosen, reports, chosen > cfg.n_max, models, excluded)


__all__ = [
    "BLOCK_MODES",
    "DegreeReport",
    "LossDifference",
    "SelectConfig",
    "Selection",
    "expected_loss",
    "loss_difference",
    "select_degree",
]
