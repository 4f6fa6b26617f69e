"""Depth image container shared by every pipeline stage.

A depth image stores metric depths on an H x W grid; pixels holding
``INVALID_DEPTH`` (0.0) carry no measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

INVALID_DEPTH = 0.0


@dataclass(eq=False)
class DepthImage:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError("depth image must be a 2-D grid")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DataError("depths must be finite and non-negative")
        self.values = v

    @classmethod
    def empty(cls, width: int, height: int) -> "DepthImage":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.values > 0

    def count_valid(self) -> int:
        return int(np.count_nonzero(self.values > 0))

    def copy(self) -> "DepthImage":
        return DepthImage(self.values.copy())

    def clipped(self, max_depth: float) -> "DepthImage":
        """Copy with depths beyond ``max_depth`` marked invalid."""
        out = self.values.copy()
        out[out > max_depth] = INVALID_DEPTH
        return DepthImage(out)


@dataclass(eq=False)
class FlowField:
    """Dense pixel-displacement field (du, dv) with a validity mask."""

    flow: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.flow, dtype=float)
        v = np.asarray(self.valid, dtype=bool)
        if f.ndim != 3 or f.shape[2] != 2 or f.shape[:2] != v.shape:
            raise DataError("flow field must be (H, W, 2) with an (H, W) mask")
        if not np.all(np.isfinite(f[v])):
            raise DataError("flow must be finite where valid")
        self.flow = f
        self.valid = v

    @classmethod
    def invalid(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width, 2)), np.zeros((height, width), bool))

    def sample(self, cols: np.ndarray, rows: np.ndarray):
        """Flow vectors and validity at integer pixel positions."""
        return self.flow[rows, cols], self.valid[rows, cols]


def rasterize_points(
    cols: np.ndarray,
    rows: np.ndarray,
    depths: np.ndarray,
    width: int,
    height: int,
    order: np.ndarray | None = None,
) -> DepthImage:
    """Z-buffer scatter of point depths onto a pixel grid (nearest wins).

    ``order`` optionally supplies a secondary sort key used to break exact
    depth ties deterministically (smaller key wins).
    """
    cols = np.asarray(cols)
    rows = np.asarray(rows)
    depths = np.asarray(depths, dtype=float)
    img = np.zeros((height, width))
    if cols.size == 0:
        return DepthImage(img)
    flat = rows * width + cols
    if order is None:
        perm = np.lexsort((depths, flat))
    else:
        perm = np.lexsort((np.asarray(order), depths, flat))
    flat = flat[perm]
    depths = depths[perm]
    first = np.ones(flat.size, dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    img.reshape(-1)[flat[first]] = depths[first]
    return DepthImage(img)
