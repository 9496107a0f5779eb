"""
Versioned JSON model documents.

Floats are written with Python's shortest round-trip repr, so a document
read back predicts exactly what the in-memory tree predicts.
"""

from __future__ import annotations

import json
import os
from datetime import datetime, timezone

import numpy as np

from .basis import AffineMap, BasisSpec
from .errors import InputError
from .modelselect import SelectConfig
from .partition import Internal, Leaf, RegionTree, SplitRule
from .polyfit import PolynomialModel

FORMAT = "momentfit-model"
VERSION = 1


def provenance(input_hash: str | None = None, seed: int | None = None, stamp: bool = False) -> dict:
    """Provenance block.

    The timestamp comes from ``SOURCE_DATE_EPOCH`` when set, the clock when
    ``stamp`` is true, and is ``None`` otherwise so repeated runs produce
    byte-identical documents.
    """
    ts = None
    if "SOURCE_DATE_EPOCH" in os.environ:
        ts = datetime.fromtimestamp(int(os.environ["SOURCE_DATE_EPOCH"]), timezone.utc).isoformat()
    elif stamp:
        ts = datetime.now(timezone.utc).isoformat()
    return {"inputHash": input_hash, "timestamp": ts, "seed": seed}


def _leaf_doc(leaf: Leaf) -> dict:
    m = leaf.model
    diag = {
        "conditionEstimate": float(m.diagnostics.get("conditionEstimate", float("nan"))),
        "psdClipped": bool(m.diagnostics.get("psdClipped", False)),
        "degenerate": bool(leaf.degenerate),
        "loss": float(m.loss),
    }
    return {
        "type": "leaf",
        "count": leaf.count,
        "bbox": [list(map(float, leaf.bbox[0])), list(map(float, leaf.bbox[1]))],
        "affine": {"center": list(m.basis.affine.center), "scale": list(m.basis.affine.scale)},
        "degree": m.degree,
        "coeffs": [float(c) for c in m.coeffs],
        "coeffCov": [[float(v) for v in row] for row in m.coeff_cov],
        "diagnostics": diag,
    }


def _node_doc(node) -> dict:
    if isinstance(node, Leaf):
        return _leaf_doc(node)
    return {
        "type": "split",
        "rule": {"point": [float(v) for v in node.rule.point], "normal": [float(v) for v in node.rule.normal]},
        "left": _node_doc(node.left),
        "right": _node_doc(node.right),
    }


def tree_to_document(tree: RegionTree, prov: dict | None = None) -> dict:
    cfg = tree.config
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": {
            "nMax": cfg.n_max,
            "scanExtra": cfg.scan_extra,
            "significance": cfg.significance,
            "blockMode": cfg.block_mode,
            "minLeaf": tree.min_leaf,
            "maxDepth": tree.max_depth,
        },
        "dim": tree.dim,
        "bbox": [list(map(float, tree.bbox[0])), list(map(float, tree.bbox[1]))],
        "tree": _node_doc(tree.root),
        "provenance": prov if prov is not None else provenance(),
    }


def _leaf_from(doc: dict, dim: int) -> Leaf:
    affine = AffineMap(tuple(doc["affine"]["center"]), tuple(doc["affine"]["scale"]))
    basis = BasisSpec(dim, int(doc["degree"]), affine)
    coeffs = np.array(doc["coeffs"], dtype=float)
    cov = np.array(doc["coeffCov"], dtype=float).reshape(len(coeffs), len(coeffs))
    if len(coeffs) != basis.size:
        raise InputError(f"leaf has {len(coeffs)} coefficients, degree {basis.degree} needs {basis.size}")
    diag = dict(doc.get("diagnostics", {}))
    bbox = doc["bbox"]
    model = PolynomialModel(basis, coeffs, cov, float(diag.pop("loss", float("nan"))),
                            diagnostics={**diag, "bbox": bbox})
    return Leaf(model, int(doc["count"]), (bbox[0], bbox[1]), degenerate=bool(diag.get("degenerate", False)))


def _node_from(doc: dict, dim: int):
    kind = doc.get("type")
    if kind == "leaf":
        return _leaf_from(doc, dim)
    if kind == "split":
        rule = SplitRule(np.array(doc["rule"]["point"], dtype=float), np.array(doc["rule"]["normal"], dtype=float))
        return Internal(rule, _node_from(doc["left"], dim), _node_from(doc["right"], dim))
    raise InputError(f"unknown node type {kind!r}")


def document_to_tree(doc: dict) -> RegionTree:
    if doc.get("format") != FORMAT:
        raise InputError(f"not a model document (format {doc.get('format')!r})")
    if doc.get("version") != VERSION:
        raise InputError(f"unsupported model document version {doc.get('version')!r}")
    c = doc["config"]
    cfg = SelectConfig(int(c["nMax"]), int(c["scanExtra"]), float(c["significance"]), c["blockMode"])
    dim = int(doc["dim"])
    tree = RegionTree(_node_from(doc["tree"], dim), cfg, int(c["minLeaf"]), int(c["maxDepth"]), dim,
                      (doc["bbox"][0], doc["bbox"][1]))
    for i, leaf in enumerate(tree.leaves()):
        leaf.leaf_id = i
    return tree


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, allow_nan=True) + "\n"


def loads(text: str) -> RegionTree:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"model document is not valid JSON: {exc}") from None
    return document_to_tree(doc)


def single_model_tree(model: PolynomialModel, count: int, bbox, cfg: SelectConfig) -> RegionTree:
    """Wrap one fitted polynomial as a one-leaf tree so it shares the document format."""
    leaf = Leaf(model, count, bbox)
    leaf.leaf_id = 0
    return RegionTree(leaf, cfg, 0, 0, model.basis.dim, bbox)
