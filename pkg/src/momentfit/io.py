"""CSV and binary PGM (P5) reading and writing."""

from __future__ import annotations

import csv
import hashlib
import math
import re
from pathlib import Path

import numpy as np

from .errors import InputError
from .moments import WeightedSample

_XCOL = re.compile(r"^x(\d+)$")


def read_sample_csv(path) -> tuple[WeightedSample, list[str]]:
    """Read columns ``x1..xd``, ``y`` and optional ``w`` (any order) from a header-declared CSV.

    Returns the sample and the x column names in order.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        xcols = sorted((int(m.group(1)), i) for i, h in enumerate(header) if (m := _XCOL.match(h)))
        if not xcols:
            raise InputError(f"{path}: missing column 'x1'")
        if [k for k, _ in xcols] != list(range(1, len(xcols) + 1)):
            raise InputError(f"{path}: x columns must be x1..x{len(xcols)} without gaps")
        if "y" not in header:
            raise InputError(f"{path}: missing column 'y'")
        yi = header.index("y")
        wi = header.index("w") if "w" in header else None
        xi = [i for _, i in xcols]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.array(rows)
    w = data[:, wi] if wi is not None else None
    return WeightedSample(data[:, xi], data[:, yi], w), [header[i] for i in xi]


def write_sample_csv(path, sample: WeightedSample, weights: bool = False) -> None:
    names = [f"x{i + 1}" for i in range(sample.dim)] + ["y"] + (["w"] if weights else [])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(names)
        for j in range(len(sample)):
            row = [repr(float(v)) for v in sample.x[j]] + [repr(float(sample.y[j]))]
            if weights:
                row.append(repr(float(sample.w[j])))
            out.writerow(row)


def read_points_csv(path, dim: int) -> np.ndarray:
    """Points for band evaluation: columns ``x1..xd`` (extra columns ignored)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        want = [f"x{i + 1}" for i in range(dim)]
        missing = [c for c in want if c not in header]
        if missing:
            raise InputError(f"{path}: missing column '{missing[0]}'")
        idx = [header.index(c) for c in want]
        pts = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pts.append([float(row[i]) for i in idx])
            except (ValueError, IndexError) as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
    return np.array(pts, dtype=float).reshape(-1, dim)


def file_hash(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _pgm_tokens(data: bytes):
    """Yield (token, end offset) for the four header fields, skipping comments."""
    pos, n = 0, len(data)
    found = 0
    while found < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise InputError("truncated PGM header")
        found += 1
        yield data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM (magic ``P5``) into a ``(height, width)`` uint8 array."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise InputError(f"{path}: not a binary PGM (expected magic 'P5', got {data[:2]!r})")
    tokens = list(_pgm_tokens(data))
    try:
        width, height, maxval = (int(t) for t, _ in tokens[1:])
    except ValueError:
        raise InputError(f"{path}: malformed PGM header") from None
    if not 0 < maxval < 256:
        raise InputError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    start = tokens[-1][1] + 1  # exactly one whitespace byte after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=start) if len(data) >= start + width * height else None
    if pixels is None:
        raise InputError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width).copy()


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 2:
        raise InputError("PGM images must be 2-D")
    height, width = image.shape
    body = np.clip(image, 0, 255).astype(np.uint8).tobytes()
    Path(path).write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + body)
