"""Raster-only curve plotting.

Curves render into an 8-bit grayscale PGM with a fixed layout: a white
background, a black rectangular frame around the plot area, tick marks at the
minimum, midpoint, and maximum of each axis, and one polyline per series in a
distinct gray level (levels cycle through GRAY_LEVELS in series order).

The layout is deliberately simple and fully documented so tests (and
downstream tooling) can invert the pixel mapping: see AxisTransform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from .errors import DataError
from .fileio import write_pgm8

GRAY_LEVELS = (80, 160, 40, 200, 120, 0)


@dataclass(frozen=True)
class PlotLayout:
    width: int = 480
    height: int = 320
    margin_left: int = 56
    margin_right: int = 16
    margin_top: int = 16
    margin_bottom: int = 32

    @property
    def plot_cols(self) -> Tuple[int, int]:
        return self.margin_left, self.width - self.margin_right - 1

    @property
    def plot_rows(self) -> Tuple[int, int]:
        return self.margin_top, self.height - self.margin_bottom - 1


@dataclass(frozen=True)
class AxisTransform:
    """Affine data-to-pixel mapping for one plot."""

    x0: float
    x1: float
    y0: float
    y1: float
    layout: PlotLayout

    def to_pixel(self, x, y):
        c0, c1 = self.layout.plot_cols
        r0, r1 = self.layout.plot_rows
        px = c0 + (np.asarray(x, dtype=float) - self.x0) / (self.x1 - self.x0) * (c1 - c0)
        py = r1 - (np.asarray(y, dtype=float) - self.y0) / (self.y1 - self.y0) * (r1 - r0)
        return px, py

    def to_data(self, px, py):
        c0, c1 = self.layout.plot_cols
        r0, r1 = self.layout.plot_rows
        x = self.x0 + (np.asarray(px, dtype=float) - c0) / (c1 - c0) * (self.x1 - self.x0)
        y = self.y0 + (r1 - np.asarray(py, dtype=float)) / (r1 - r0) * (self.y1 - self.y0)
        return x, y

    @property
    def x_per_pixel(self) -> float:
        c0, c1 = self.layout.plot_cols
        return (self.x1 - self.x0) / (c1 - c0)

    @property
    def y_per_pixel(self) -> float:
        r0, r1 = self.layout.plot_rows
        return (self.y1 - self.y0) / (r1 - r0)


def _draw_line(img: np.ndarray, p0, p1, gray: int) -> None:
    x0, y0 = p0
    x1, y1 = p1
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    xs = np.rint(np.linspace(x0, x1, n)).astype(int)
    ys = np.rint(np.linspace(y0, y1, n)).astype(int)
    ok = (xs >= 0) & (xs < img.shape[1]) & (ys >= 0) & (ys < img.shape[0])
    img[ys[ok], xs[ok]] = gray


def _pad_range(lo: float, hi: float) -> Tuple[float, float]:
    if hi > lo:
        return lo, hi
    return lo - 0.5, hi + 0.5


def render_curves(
    series: Dict[str, Tuple[Sequence[float], Sequence[float]]],
    layout: PlotLayout = PlotLayout(),
):
    """Render named series into a grayscale raster.

    Returns (image, transform): the uint8 image and the data/pixel mapping
    used, including tick positions at min/mid/max of each axis.
    """
    if not series or all(len(x) == 0 for x, _ in series.values()):
        raise DataError("nothing to plot: no data points")
    xs_all = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys_all = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    x0, x1 = _pad_range(float(xs_all.min()), float(xs_all.max()))
    y0, y1 = _pad_range(float(ys_all.min()), float(ys_all.max()))
    tr = AxisTransform(x0, x1, y0, y1, layout)
    img = np.full((layout.height, layout.width), 255, dtype=np.uint8)
    c0, c1 = layout.plot_cols
    r0, r1 = layout.plot_rows
    for idx, (name, (x, y)) in enumerate(sorted(series.items())):
        gray = GRAY_LEVELS[idx % len(GRAY_LEVELS)]
        px, py = tr.to_pixel(np.asarray(x, float), np.asarray(y, float))
        if px.size == 1:
            _draw_line(img, (px[0], py[0]), (px[0], py[0]), gray)
            continue
        for i in range(px.size - 1):
            _draw_line(img, (px[i], py[i]), (px[i + 1], py[i + 1]), gray)
    # frame and ticks go on top so the axes stay crisp at the data extremes
    img[r0, c0 : c1 + 1] = 0
    img[r1, c0 : c1 + 1] = 0
    img[r0 : r1 + 1, c0] = 0
    img[r0 : r1 + 1, c1] = 0
    for frac in (0.0, 0.5, 1.0):
        px, _ = tr.to_pixel(x0 + frac * (x1 - x0), y0)
        col = int(np.rint(px))
        img[r1 + 1 : r1 + 5, col] = 0
        _, py = tr.to_pixel(x0, y0 + frac * (y1 - y0))
        row = int(np.rint(py))
        img[row, c0 - 4 : c0] = 0
    return img, tr


def read_curve_csv(path: Union[str, Path]):
    """Read a curve CSV: an 'x' or 'threshold' column, optional text columns
    forming series keys, and one or more numeric value columns."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path}: empty CSV")
    cols = list(rows[0].keys())
    x_col = "threshold" if "threshold" in cols else ("x" if "x" in cols else cols[0])

    def is_number(s):
        try:
            float(s)
            return True
        except (TypeError, ValueError):
            return False

    value_cols = [
        c for c in cols if c != x_col and all(is_number(r[c]) for r in rows)
    ]
    key_cols = [c for c in cols if c != x_col and c not in value_cols]
    if not value_cols:
        raise DataError(f"{path}: no numeric value columns")
    return rows, x_col, key_cols, value_cols


def plot_csv(
    csv_path: Union[str, Path],
    out_dir: Union[str, Path],
    layout: PlotLayout = PlotLayout(),
):
    """Render one PGM per numeric column of a curve CSV.

    Rows sharing the same non-numeric key columns form one series.  Returns
    the list of files written.
    """
    rows, x_col, key_cols, value_cols = read_curve_csv(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(csv_path).stem
    written = []
    for col in value_cols:
        series: Dict[str, Tuple[list, list]] = {}
        for row in rows:
            key = "|".join(row[c] for c in key_cols) or "series"
            xs, ys = series.setdefault(key, ([], []))
            xs.append(float(row[x_col]))
            ys.append(float(row[col]))
        img, _ = render_curves(series, layout)
        path = out_dir / f"{stem}_{col}.pgm"
        write_pgm8(path, img)
        written.append(path)
    return written
