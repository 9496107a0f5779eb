"""
Command-line interface.

Exit codes: 0 success, 1 numerical failure (conditioning), 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import sys
from pathlib import Path

import numpy as np

from . import document
from .basis import BasisSpec
from .errors import ConditioningError, InputError, MomentfitError
from .io import file_hash, read_pgm, read_points_csv, read_sample_csv, write_pgm
from .modelselect import BLOCK_MODES, SelectConfig, select_degree
from .moments import WeightedSample, accumulate, parameter_vector
from .oracle import bootstrap_fit, finite_difference_check
from .partition import DEFAULT_MAX_DEPTH, grow_tree, predict_tree, training_loss
from .polyfit import build_gram, physical_coefficients, predict, solve_amplitudes

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


def _degree_range(text: str) -> range:
    try:
        lo, hi = (int(t) for t in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad degree range {text!r}")
    return range(lo, hi + 1)


def _grid_axis(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI:N, got {text!r}") from None


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _report_table(reports, chosen, excluded) -> str:
    lines = [f"{'degree':>6} {'nCoeffs':>7} {'lossMin':>14} {'expectedLoss':>14} {'sigma':>12}  chosen"]
    for r in reports:
        mark = "*" if r.degree == chosen else ""
        lines.append(f"{r.degree:>6} {r.n_coeffs:>7} {r.loss_min:>14.6e} {r.expected_loss:>14.6e} {r.sigma:>12.4e}  {mark}")
    for d, est in sorted(excluded.items()):
        note = f"cond ~ {est:.2e}" if math.isfinite(est) else "not scanned"
        lines.append(f"{d:>6} {'-':>7} {'excluded':>14} {'':>14} {'':>12}  {note}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    sample, _ = read_sample_csv(args.input)
    degrees = range(args.degree, args.degree + 1) if args.degree is not None else args.scan
    top = max(degrees)
    basis = BasisSpec.for_data(sample.x, top, sample.w, standardize=not args.raw)
    pv = parameter_vector(accumulate(sample, basis))
    cfg = SelectConfig(n_max=top, scan_extra=1, significance=args.significance, block_mode=args.block_mode)
    sel = select_degree(pv, cfg, degrees=degrees)
    model = sel.models[sel.chosen]
    bbox = (sample.x.min(axis=0).tolist(), sample.x.max(axis=0).tolist())
    model.diagnostics["bbox"] = list(bbox)
    sys.stdout.write(_report_table(sel.reports, sel.chosen, sel.excluded))
    sys.stdout.write(f"chosen degree {sel.chosen}\n")
    sys.stdout.write("coefficients: " + " ".join(f"{c:.10g}" for c in physical_coefficients(model)) + "\n")
    sys.stdout.write("coefficients (standardized inputs): " + " ".join(f"{c:.10g}" for c in model.coeffs) + "\n")
    if args.output:
        tree = document.single_model_tree(model, len(sample), bbox, cfg)
        prov = document.provenance(file_hash(args.input), args.seed, args.stamp)
        _write_text(args.output, document.dumps(document.tree_to_document(tree, prov)))
    return EXIT_OK


def cmd_tree(args) -> int:
    sample, _ = read_sample_csv(args.input)
    cfg = SelectConfig(args.nmax, args.scan_extra, args.significance, args.block_mode)
    tree = grow_tree(sample, cfg, min_leaf=args.min_leaf, max_depth=args.max_depth)
    loss = training_loss(tree, sample) / float(np.sum(sample.w))
    prov = document.provenance(file_hash(args.input), args.seed, args.stamp)
    if args.output:
        _write_text(args.output, document.dumps(document.tree_to_document(tree, prov)))
    sys.stdout.write(f"leaves {len(tree.leaves())}  depth {tree.depth}  total loss {loss:.6e}\n")
    return EXIT_OK


def bands_csv(tree, pts: np.ndarray) -> str:
    """CSV text with columns x1..xd,value,sigma (plus extrapolated when any point is outside)."""
    pred = predict_tree(tree, pts)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    flag = bool(np.any(pred.extrapolated))
    out.writerow([f"x{i + 1}" for i in range(tree.dim)] + ["value", "sigma"] + (["extrapolated"] if flag else []))
    for j in range(len(pts)):
        row = [repr(float(v)) for v in pts[j]] + [repr(float(pred.value[j])), repr(float(pred.sigma[j]))]
        if flag:
            row.append(int(pred.extrapolated[j]))
        out.writerow(row)
    return buf.getvalue()


def bands_svg(x: np.ndarray, value: np.ndarray, sigma: np.ndarray, width=640, height=400) -> str:
    lo, hi = value - sigma, value + sigma
    ymin, ymax = float(np.min(lo)), float(np.max(hi))
    ymax = ymax if ymax > ymin else ymin + 1.0
    xmin, xmax = float(x[0]), float(x[-1])
    xmax = xmax if xmax > xmin else xmin + 1.0

    def px(a, b):
        return f"{(a - xmin) / (xmax - xmin) * (width - 20) + 10:.2f},{height - 10 - (b - ymin) / (ymax - ymin) * (height - 20):.2f}"

    band = " ".join(px(a, b) for a, b in zip(x, hi)) + " " + " ".join(px(a, b) for a, b in zip(x[::-1], lo[::-1]))
    line = " ".join(px(a, b) for a, b in zip(x, value))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<polygon points="{band}" fill="#9ecae1" stroke="none"/>\n'
        f'<polyline points="{line}" fill="none" stroke="#08519c" stroke-width="1.5"/>\n'
        "</svg>\n"
    )


def cmd_bands(args) -> int:
    tree = document.loads(Path(args.model).read_text(encoding="utf-8"))
    if args.points:
        pts = read_points_csv(args.points, tree.dim)
    else:
        if len(args.grid) != tree.dim:
            raise InputError(f"model has {tree.dim} inputs; give --grid once per input")
        pts = np.array(list(itertools.product(*args.grid)), dtype=float).reshape(-1, tree.dim)
    _write_text(args.output, bands_csv(tree, pts))
    if args.svg:
        if tree.dim != 1:
            raise InputError("SVG bands are only drawn for one-dimensional models")
        order = np.argsort(pts[:, 0], kind="stable")
        pred = predict_tree(tree, pts[order])
        Path(args.svg).write_text(bands_svg(pts[order, 0], pred.value, pred.sigma), encoding="utf-8")
    return EXIT_OK


def image_to_sample(image: np.ndarray) -> WeightedSample:
    """Pixels as points: x = (col, row) scaled to [-1, 1]^2, y = intensity, w = 1."""
    height, width = image.shape
    r, c = np.mgrid[0:height, 0:width]
    u = 2.0 * c / (width - 1) - 1.0 if width > 1 else np.zeros_like(c, dtype=float)
    v = 2.0 * r / (height - 1) - 1.0 if height > 1 else np.zeros_like(r, dtype=float)
    x = np.column_stack([u.ravel(), v.ravel()])
    return WeightedSample(x, image.astype(float).ravel(), None)


def remodel_image(image: np.ndarray, cfg: SelectConfig, min_leaf=None, max_depth=DEFAULT_MAX_DEPTH):
    """Grow a tree on the pixels and resample it; returns (uint8 image, tree)."""
    sample = image_to_sample(image)
    tree = grow_tree(sample, cfg, min_leaf=min_leaf, max_depth=max_depth)
    pred = predict_tree(tree, sample.x)
    out = np.clip(np.rint(pred.value), 0, 255).astype(np.uint8).reshape(image.shape)
    return out, tree


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((a.astype(float) - b.astype(float)) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(255.0**2 / mse)


def cmd_remodel_image(args) -> int:
    image = read_pgm(args.input)
    cfg = SelectConfig(args.nmax, args.scan_extra, args.significance, args.block_mode)
    out, tree = remodel_image(image, cfg, args.min_leaf, args.max_depth)
    write_pgm(args.output, out)
    if args.model:
        prov = document.provenance(file_hash(args.input), args.seed, args.stamp)
        _write_text(args.model, document.dumps(document.tree_to_document(tree, prov)))
    sys.stdout.write(f"leaves {len(tree.leaves())}  depth {tree.depth}  PSNR {psnr(image, out):.2f} dB\n")
    return EXIT_OK


def cmd_bootstrap_check(args) -> int:
    sample, _ = read_sample_csv(args.input)
    basis = BasisSpec.for_data(sample.x, args.degree, sample.w, standardize=not args.raw)
    model = solve_amplitudes(build_gram(parameter_vector(accumulate(sample, basis))))
    qs = (0.25, 0.5, 0.75)
    pts = np.quantile(sample.x, qs, axis=0)
    boot = bootstrap_fit(sample, basis, args.replicas, args.seed, pts)
    analytic = predict(model, pts).sigma
    sys.stdout.write(f"{'quantile':>8} {'analytic':>12} {'bootstrap':>12} {'ratio':>8}\n")
    for q, a, b in zip(qs, analytic, boot.band_at_points):
        sys.stdout.write(f"{q:>8.2f} {a:>12.5e} {b:>12.5e} {a / b:>8.4f}\n")
    ratio = np.sqrt(np.diag(model.coeff_cov) / np.diag(boot.empirical_coeff_cov))
    sys.stdout.write("coefficient sigma ratios: " + " ".join(f"{r:.4f}" for r in ratio) + "\n")
    sys.stdout.write(f"replicas kept {boot.replicas - boot.dropped}/{boot.replicas}\n")
    return EXIT_OK


def cmd_fd_check(args) -> int:
    sample, _ = read_sample_csv(args.input)
    basis = BasisSpec.for_data(sample.x, args.degree, sample.w, standardize=not args.raw)
    # no guard here: an ill-conditioned model is reported as skipped, not as an error
    model = solve_amplitudes(build_gram(parameter_vector(accumulate(sample, basis))), guard=np.inf)
    res = finite_difference_check(model)
    if res.skipped:
        sys.stdout.write(res.notice + "\n")
    else:
        sys.stdout.write(f"max relative error {res.max_rel_error:.3e}\n")
    return EXIT_OK


def _selection_flags(p, nmax_default=1):
    p.add_argument("--nmax", type=int, default=nmax_default, help="largest degree a region may keep")
    p.add_argument("--scan-extra", type=int, default=2, help="degrees scanned beyond --nmax")
    p.add_argument("--significance", type=float, default=0.0, help="s in expectedLoss + s*sigma")
    p.add_argument("--min-leaf", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    p.add_argument("--block-mode", choices=BLOCK_MODES, default="upper-left")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stamp", action="store_true", help="record the wall-clock time in the document")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momentfit", description="Polynomial regression with analytic uncertainties.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one polynomial, choosing the degree by expected loss")
    p.add_argument("input")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--degree", type=int)
    g.add_argument("--scan", type=_degree_range, default=range(0, 4), metavar="LO..HI")
    p.add_argument("--significance", type=float, default=0.0)
    p.add_argument("--block-mode", choices=BLOCK_MODES, default="upper-left")
    p.add_argument("--raw", action="store_true", help="skip input standardization")
    p.add_argument("-o", "--output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stamp", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tree", help="recursive split-and-fit")
    p.add_argument("input")
    _selection_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("bands", help="evaluate value and sigma of a saved model")
    p.add_argument("model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--grid", type=_grid_axis, action="append", metavar="LO:HI:N")
    src.add_argument("--points")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("remodel-image", help="rebuild a PGM image from piecewise 2-D polynomials")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--model")
    _selection_flags(p)
    p.set_defaults(func=cmd_remodel_image)

    p = sub.add_parser("bootstrap-check", help="compare analytic bands with a bootstrap")
    p.add_argument("input")
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw", action="store_true")
    p.set_defaults(func=cmd_bootstrap_check)

    p = sub.add_parser("fd-check", help="finite-difference check of coefficient derivatives")
    p.add_argument("input")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--raw", action="store_true")
    p.set_defaults(func=cmd_fd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConditioningError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NUMERIC
    except (InputError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except MomentfitError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
