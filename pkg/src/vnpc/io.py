"""File formats: input CSV, summary CSVs, binary draw files, traces and SVG plots."""

from __future__ import annotations

import csv
import os
import struct
from pathlib import Path

import numpy as np

DRAWS_MAGIC = b"VNPCDRW1"


class DataError(ValueError):
    """Malformed or incomplete input data."""


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(path, header: list[str], rows: np.ndarray) -> None:
    rows = np.asarray(rows, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    try:
        values = np.array([[float(v) for v in r] for r in body if r], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric or missing value ({exc})") from exc
    if values.size == 0:
        raise DataError(f"{path}: no data rows")
    if values.ndim != 2 or values.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    return header, values


def load_series(path, columns: list[str] | None = None, standardize: bool = False, diff: bool = False) -> tuple[np.ndarray, list[str]]:
    """Read an ``(n, d)`` series from CSV (header row, one column per series).

    ``columns`` selects by header name or zero-based index.  Differencing
    is applied before standardisation.
    """
    header, values = read_csv(path)
    if columns:
        idx = []
        for c in columns:
            if c in header:
                idx.append(header.index(c))
            elif c.isdigit() and int(c) < len(header):
                idx.append(int(c))
            else:
                raise DataError(f"unknown column {c!r}; available: {header}")
        values = values[:, idx]
        header = [header[i] for i in idx]
    if not np.all(np.isfinite(values)):
        raise DataError("missing or non-finite values in input")
    if diff:
        values = np.diff(values, axis=0)
    if standardize:
        sd = values.std(axis=0, ddof=1)
        if np.any(sd == 0):
            raise DataError("cannot standardise a constant column")
        values = (values - values.mean(axis=0)) / sd
    return values, header


def save_series(path, z: np.ndarray, names: list[str] | None = None) -> None:
    z = np.asarray(z, dtype=float)
    names = names or [f"z{i + 1}" for i in range(z.shape[1])]
    write_csv(path, names, z)


# Binary draws layout (little endian):
#   magic (8 bytes) | n, d, M, W as uint64 | omegas: W float64 |
#   draws: M*W*d*d complex128, C order (draw, frequency, row, column)


def save_draws(path, f: np.ndarray, omegas: np.ndarray, n: int) -> None:
    f = np.ascontiguousarray(f, dtype="<c16")
    M, W, d, _ = f.shape
    with open(path, "wb") as fh:
        fh.write(DRAWS_MAGIC)
        fh.write(struct.pack("<4Q", n, d, M, W))
        fh.write(np.ascontiguousarray(omegas, dtype="<f8").tobytes())
        fh.write(f.tobytes())


def load_draws(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Returns ``(f, omegas, n)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != DRAWS_MAGIC:
            raise DataError(f"{path}: not a draws file")
        n, d, M, W = struct.unpack("<4Q", fh.read(32))
        omegas = np.frombuffer(fh.read(8 * W), dtype="<f8").copy()
        f = np.frombuffer(fh.read(16 * M * W * d * d), dtype="<c16").copy()
    if f.size != M * W * d * d:
        raise DataError(f"{path}: truncated")
    return f.reshape(M, W, d, d), omegas, int(n)


def save_traces(path, draws) -> None:
    blocks = ["k", "radial", "location", "angles", "beta"]
    header = ["iter", "k", "log_posterior"] + [f"acc_{b}" for b in blocks]
    acc = draws.acceptance_trace
    if acc is None:
        acc = np.full((len(draws.iters), len(blocks)), np.nan)
    rows = np.column_stack([draws.iters, draws.k, draws.log_posterior, acc])
    write_csv(path, header, rows)


def svg_polyline(path, xs: np.ndarray, series: dict[str, np.ndarray], title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    """Minimal line plot, one polyline per named series."""
    W, H, pad = 640, 400, 50
    xs = np.asarray(xs, dtype=float)
    ys = np.concatenate([np.asarray(v, dtype=float).ravel() for v in series.values()])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="#888"/>',
        f'<text x="{W / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="12" y="{H / 2}" font-size="12" transform="rotate(-90 12 {H / 2})">{ylabel}</text>',
        f'<text x="{pad}" y="{H - pad + 15}" font-size="10">{x0:.3g}</text>',
        f'<text x="{W - pad}" y="{H - pad + 15}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{pad - 4}" y="{H - pad}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 4}" y="{pad + 8}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    for i, (name, ys_) in enumerate(series.items()):
        c = colors[i % len(colors)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, np.asarray(ys_, dtype=float)) if np.isfinite(y))
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{W - pad - 4}" y="{pad + 14 + 14 * i}" font-size="11" text-anchor="end" fill="{c}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
