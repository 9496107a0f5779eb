"""
Recursive splitting of the input space.

A region whose best degree exceeds ``n_max`` is cut through its weighted
mean by the hyperplane perpendicular to the principal axis of the input
covariance, and each side is fitted again.  In one dimension this is simply
a cut at the mean of ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .basis import BasisSpec, _as_points, basis_size
from .errors import DegenerateWeightsError, InputError, InsufficientDataError, NoSplitError
from .modelselect import DegreeReport, SelectConfig, select_degree
from .moments import ParameterVector, WeightedSample, accumulate, parameter_vector
from .polyfit import PolynomialModel, Prediction, build_gram, predict, solve_amplitudes

DEFAULT_MAX_DEPTH = 24


@dataclass(frozen=True)
class SplitRule:
    """Hyperplane through ``point`` with unit ``normal``; ``(x - point).normal <= 0`` goes left."""

    point: np.ndarray
    normal: np.ndarray

    def goes_left(self, x) -> np.ndarray:
        pts = _as_points(x, len(self.normal))
        return (pts - self.point) @ self.normal <= 0.0


def principal_axis(pv: ParameterVector) -> SplitRule:
    """Split rule at the weighted input mean, normal to the top eigenvector of Cov(x).

    The eigenvector sign is fixed by making its largest-magnitude component
    positive.
    """
    mean, cov = pv.x_mean_cov()
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    scale = float(np.max(np.abs(pv.basis.affine.scale))) ** 2
    if not vals[-1] > 1e-14 * scale:
        raise NoSplitError("input covariance vanishes; all points coincide")
    v = vecs[:, -1]
    v = v / np.linalg.norm(v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return SplitRule(np.asarray(mean, dtype=float), v)


@dataclass
class Leaf:
    model: PolynomialModel
    count: int
    bbox: tuple[list[float], list[float]]
    degenerate: bool = False
    reports: list[DegreeReport] = field(default_factory=list)
    leaf_id: int = -1


@dataclass
class Internal:
    rule: SplitRule
    left: "Node"
    right: "Node"


Node = Union[Leaf, Internal]


@dataclass
class RegionTree:
    root: Node
    config: SelectConfig
    min_leaf: int
    max_depth: int
    dim: int
    bbox: tuple[list[float], list[float]]

    def leaves(self) -> list[Leaf]:
        return list(_iter_leaves(self.root))

    @property
    def depth(self) -> int:
        return _depth(self.root)

    def predict(self, x) -> TreePrediction:
        return predict_tree(self, x)


def _iter_leaves(node):
    if isinstance(node, Leaf):
        yield node
    else:
        yield from _iter_leaves(node.left)
        yield from _iter_leaves(node.right)


def _depth(node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(_depth(node.left), _depth(node.right))


def default_min_leaf(dim: int, cfg: SelectConfig) -> int:
    return 4 * basis_size(dim, cfg.max_degree)


def _bbox(x: np.ndarray):
    return (x.min(axis=0).tolist(), x.max(axis=0).tolist())


def _constant_leaf(sample: WeightedSample) -> Leaf:
    """Degree-0 fallback for regions too small (or too degenerate) to scan."""
    basis = BasisSpec.for_data(sample.x, 0, sample.w)
    n = len(sample)
    sw = float(np.sum(sample.w))
    if n >= 2 and sw != 0:
        model = solve_amplitudes(build_gram(parameter_vector(accumulate(sample, basis)), 0))
    else:
        mean = float(sample.w @ sample.y / sw) if sw != 0 else float(np.mean(sample.y)) if n else 0.0
        model = PolynomialModel(basis, np.array([mean]), np.zeros((1, 1)), 0.0,
                                diagnostics={"conditionEstimate": 1.0, "psdClipped": False})
    model.diagnostics["degenerate"] = True
    model.diagnostics["bbox"] = list(_bbox(sample.x)) if n else None
    return Leaf(model, n, _bbox(sample.x) if n else ([], []), degenerate=True)


def grow_tree(
    sample: WeightedSample,
    cfg: SelectConfig = SelectConfig(),
    min_leaf: int | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> RegionTree:
    """Fit, and split wherever the scan asks for a degree above ``cfg.n_max``.

    Stops at ``max_depth`` or when a split would leave fewer than
    ``min_leaf`` points on either side; the leaf then keeps the best degree
    not above ``n_max``.
    """
    if len(sample) == 0:
        raise InputError("cannot grow a tree on an empty sample")
    if min_leaf is None:
        min_leaf = default_min_leaf(sample.dim, cfg)
    root = _grow(sample, cfg, min_leaf, max_depth, 0)
    tree = RegionTree(root, cfg, min_leaf, max_depth, sample.dim, _bbox(sample.x))
    for i, leaf in enumerate(tree.leaves()):
        leaf.leaf_id = i
    return tree


def _grow(sample, cfg, min_leaf, max_depth, depth) -> Node:
    n = len(sample)
    if n < max(min_leaf, 2):
        return _constant_leaf(sample)
    basis = BasisSpec.for_data(sample.x, cfg.max_degree, sample.w)
    try:
        pv = parameter_vector(accumulate(sample, basis))
        sel = select_degree(pv, cfg)
    except (InsufficientDataError, DegenerateWeightsError):
        return _constant_leaf(sample)

    def leaf():
        degree = sel.chosen if not sel.escalate else sel.best_within(cfg.n_max, cfg.significance)
        model = sel.models[degree]
        model.diagnostics["bbox"] = list(_bbox(sample.x))
        model.diagnostics["degenerate"] = False
        return Leaf(model, n, _bbox(sample.x), reports=sel.reports)

    if not sel.escalate or depth >= max_depth:
        return leaf()
    try:
        rule = principal_axis(pv)
    except NoSplitError:
        return leaf()
    left = rule.goes_left(sample.x)
    n_left = int(np.count_nonzero(left))
    if min(n_left, n - n_left) < min_leaf:
        return leaf()
    return Internal(
        rule,
        _grow(sample.subset(left), cfg, min_leaf, max_depth, depth + 1),
        _grow(sample.subset(~left), cfg, min_leaf, max_depth, depth + 1),
    )


@dataclass
class TreePrediction(Prediction):
    leaf_id: np.ndarray = None


def route(tree: RegionTree, x) -> np.ndarray:
    """Leaf id for every point."""
    pts = _as_points(x, tree.dim)
    out = np.empty(len(pts), dtype=int)

    def walk(node, index):
        if isinstance(node, Leaf):
            out[index] = node.leaf_id
            return
        left = node.rule.goes_left(pts[index])
        walk(node.left, index[left])
        walk(node.right, index[~left])

    walk(tree.root, np.arange(len(pts)))
    return out


def predict_tree(tree: RegionTree, x) -> TreePrediction:
    """Route points to their leaves and evaluate the leaf models there."""
    pts = _as_points(x, tree.dim)
    ids = route(tree, pts)
    value = np.empty(len(pts))
    variance = np.empty(len(pts))
    for leaf in tree.leaves():
        mask = ids == leaf.leaf_id
        if np.any(mask):
            p = predict(leaf.model, pts[mask])
            value[mask] = p.value
            variance[mask] = p.variance
    lo, hi = np.asarray(tree.bbox[0]), np.asarray(tree.bbox[1])
    extrap = np.any((pts < lo) | (pts > hi), axis=1)
    return TreePrediction(value, variance, extrap, ids)


def training_loss(tree: RegionTree, sample: WeightedSample) -> float:
    """Weighted sum of squared residuals over all leaves (``sum_leaf W_leaf * E_leaf``)."""
    p = predict_tree(tree, sample.x)
    return float(np.sum(sample.w * (sample.y - p.value) ** 2))


__all__ = [
    "DEFAULT_MAX_DEPTH",
    "Internal",
    "Leaf",
    "RegionTree",
    "SplitRule",
    "TreePrediction",
    "default_min_leaf",
    "grow_tree",
    "predict_tree",
    "principal_axis",
    "route",
    "training_loss",
]
