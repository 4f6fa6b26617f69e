"""Enhanced radar depth: neighborhood expansion and the multi-channel image.

Expansion propagates each radar depth to its association neighborhood with the
predicted confidence; conflicts keep the most confident write.  The
multi-channel enhanced radar (MER) image then thresholds the expanded
confidence at increasing levels, one densified depth channel per level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .association import NeighborhoodSpec, PdaVolume
from .depth import DepthImage, FlowField
from .errors import DataError

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


@dataclass(eq=False)
class ExpandedDepth:
    """Densified radar depth with a per-pixel association confidence."""

    depth: DepthImage
    confidence: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.confidence, dtype=float)
        if c.shape != self.depth.values.shape:
            raise DataError("confidence grid must match the depth image")
        if np.any((c > 0) & ~self.depth.valid_mask):
            raise DataError("confidence set on pixels without depth")
        self.confidence = c


@dataclass(eq=False)
class MerImage:
    """Stack of densified depth channels at increasing confidence thresholds."""

    channels: np.ndarray
    thresholds: tuple

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=float)
        th = tuple(float(t) for t in self.thresholds)
        if ch.ndim != 3 or ch.shape[2] != len(th):
            raise DataError("channel count must match threshold count")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise DataError("thresholds must be strictly increasing")
        if any(not (0.0 < t < 1.0) for t in th):
            raise DataError("thresholds must lie in (0, 1)")
        self.channels = ch
        self.thresholds = th

    @property
    def n_channels(self) -> int:
        return len(self.thresholds)

    def channel(self, index: int) -> DepthImage:
        return DepthImage(self.channels[:, :, index].copy())

    @classmethod
    def empty(cls, width: int, height: int) -> "MerImage":
        return cls(np.zeros((height, width, 0)), ())


def expand(
    radar_depth: DepthImage,
    pda: PdaVolume,
    spec: Optional[NeighborhoodSpec] = None,
) -> ExpandedDepth:
    """Propagate radar depths to their neighborhoods, keeping the most
    confident write per pixel; equal confidences keep the smaller depth.
    """
    spec = spec or pda.spec
    if pda.values.shape[:2] != radar_depth.values.shape:
        raise DataError("association volume does not match the radar image")
    h, w = radar_depth.values.shape
    d = radar_depth.values
    rows, cols = np.nonzero(d > 0)
    depths = d[rows, cols]
    targets = []
    confs = []
    writes = []
    for k, (di, dj) in enumerate(spec.offsets()):
        ti = rows + int(di)
        tj = cols + int(dj)
        ok = (ti >= 0) & (ti < h) & (tj >= 0) & (tj < w)
        targets.append(ti[ok] * w + tj[ok])
        confs.append(pda.values[rows[ok], cols[ok], k].astype(float))
        writes.append(depths[ok])
    depth_out = np.zeros((h, w))
    conf_out = np.zeros((h, w))
    if targets:
        flat = np.concatenate(targets)
        conf = np.concatenate(confs)
        val = np.concatenate(writes)
        if flat.size:
            # per pixel: max confidence wins, ties resolve to the smaller depth
            perm = np.lexsort((-val, conf, flat))
            flat, conf, val = flat[perm], conf[perm], val[perm]
            last = np.ones(flat.size, dtype=bool)
            last[:-1] = flat[1:] != flat[:-1]
            depth_out.reshape(-1)[flat[last]] = val[last]
            conf_out.reshape(-1)[flat[last]] = conf[last]
    return ExpandedDepth(DepthImage(depth_out), conf_out)


def build_mer(
    exp: ExpandedDepth, thresholds: Sequence[float] = DEFAULT_THRESHOLDS
) -> MerImage:
    """Threshold the expanded depth at each confidence level (strict >)."""
    th = tuple(float(t) for t in thresholds)
    h, w = exp.depth.values.shape
    channels = np.zeros((h, w, len(th)))
    for l, t in enumerate(th):
        keep = exp.confidence > t
        channels[:, :, l] = np.where(keep, exp.depth.values, 0.0)
    return MerImage(channels, th)


@dataclass(eq=False)
class Stage2Input:
    """Feature stack for a depth-completion consumer.

    Channel order is fixed: raw radar depth, the MER channels from lowest to
    highest threshold, then the two optical-flow components (du, dv).
    """

    stack: np.ndarray
    channel_names: tuple
    mer_thresholds: tuple

    @property
    def n_mer(self) -> int:
        return len(self.mer_thresholds)


def assemble_stage2_input(
    radar_depth: DepthImage,
    mer: MerImage,
    optical_flow: Optional[FlowField] = None,
) -> Stage2Input:
    """Stack radar depth, MER channels, and flow into one float32 volume."""
    h, w = radar_depth.values.shape
    if mer.channels.shape[:2] != (h, w) and mer.n_channels > 0:
        raise DataError("MER size does not match the radar image")
    if optical_flow is None:
        optical_flow = FlowField.invalid(w, h)
    if optical_flow.flow.shape[:2] != (h, w):
        raise DataError("flow size does not match the radar image")
    flow = np.where(optical_flow.valid[:, :, None], optical_flow.flow, 0.0)
    parts = [radar_depth.values[:, :, None]]
    if mer.n_channels:
        parts.append(mer.channels)
    parts.append(flow)
    names = (
        ("radar",)
        + tuple(f"mer_{t:g}" for t in mer.thresholds)
        + ("flow_u", "flow_v")
    )
    stack = np.concatenate(parts, axis=2).astype(np.float32)
    return Stage2Input(stack, names, mer.thresholds)


def _completion_anchors(inp: Stage2Input):
    """Anchor pixels for the baseline completion.

    With MER channels present, anchors are the union of all channels and each
    anchor's weight is the highest threshold it crosses; otherwise the raw
    radar pixels serve as anchors with weight 1.
    """
    stack = inp.stack
    if inp.n_mer:
        mer = stack[:, :, 1 : 1 + inp.n_mer]
        valid = mer > 0
        any_valid = valid.any(axis=2)
        rows, cols = np.nonzero(any_valid)
        first = np.argmax(valid[rows, cols, :], axis=1)
        depths = mer[rows, cols, first]
        level = valid[rows, cols, :].sum(axis=1) - 1
        weights = np.asarray(inp.mer_thresholds, dtype=float)[level]
    else:
        raw = stack[:, :, 0]
        rows, cols = np.nonzero(raw > 0)
        depths = raw[rows, cols].astype(float)
        weights = np.ones(rows.size)
    return rows, cols, depths, weights


def complete_depth_baseline(inp: Stage2Input, k_neighbors: int = 8) -> DepthImage:
    """Confidence-weighted inverse-distance blend of the K nearest anchors.

    A deterministic, non-learned stand-in for an image-guided completion
    network; returns an all-invalid image when no anchor exists.
    """
    h, w = inp.stack.shape[:2]
    rows, cols, depths, conf = _completion_anchors(inp)
    if rows.size == 0:
        return DepthImage.empty(w, h)
    k = min(k_neighbors, rows.size)
    tree = cKDTree(np.column_stack([rows, cols]).astype(float))
    gi, gj = np.mgrid[0:h, 0:w]
    query = np.column_stack([gi.reshape(-1), gj.reshape(-1)]).astype(float)
    dist, idx = tree.query(query, k=k)
    if k == 1:
        # one anchor: its depth verbatim, no blend arithmetic
        pred = depths[idx]
    else:
        weights = conf[idx] / (dist + 1e-6)
        pred = (weights * depths[idx]).sum(axis=1) / weights.sum(axis=1)
    return DepthImage(pred.reshape(h, w))
