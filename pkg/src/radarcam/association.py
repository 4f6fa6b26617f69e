"""Pixel depth association: neighborhood layout, labels, loss, and predictors.

A radar pixel at (i, j) is associated with each pixel of a fixed rectangular
neighborhood through an N-channel volume: channel k holds the probability that
the neighbor at offset (i_k, j_k) shares the radar pixel's depth.  Labels are
binary, predictions continuous in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .depth import DepthImage, FlowField
from .errors import DataError

#: Clip applied to probabilities before any logarithm.
PROB_EPS = 1e-7


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Rectangular neighborhood around a radar pixel.

    The anchor sits below the rectangle center (more room above, since radar
    points typically need to extend upward in the image): ``up`` rows above,
    ``down`` rows below, ``left``/``right`` columns to the sides.
    """

    width: int = 5
    height: int = 36
    up: int = 30
    down: int = 5
    left: int = 2
    right: int = 2

    def __post_init__(self):
        if self.up + self.down + 1 != self.height:
            raise DataError("up + down + 1 must equal the neighborhood height")
        if self.left + self.right + 1 != self.width:
            raise DataError("left + right + 1 must equal the neighborhood width")

    @property
    def size(self) -> int:
        return self.width * self.height

    def offsets(self) -> np.ndarray:
        """(N, 2) array of (row, col) offsets in channel order (row-major)."""
        di = np.arange(-self.up, self.down + 1)
        dj = np.arange(-self.left, self.right + 1)
        grid = np.stack(np.meshgrid(di, dj, indexing="ij"), axis=-1)
        return grid.reshape(-1, 2)

    def index_of(self, di: int, dj: int) -> int:
        if not (-self.up <= di <= self.down and -self.left <= dj <= self.right):
            raise DataError(f"offset ({di}, {dj}) outside neighborhood")
        return (di + self.up) * self.width + (dj + self.left)


@dataclass(frozen=True)
class LabelParams:
    """Depth-agreement thresholds: absolute (meters) and relative (unitless)."""

    t_abs: float = 1.0
    t_rel: float = 0.05

    def __post_init__(self):
        if self.t_abs <= 0 or self.t_rel <= 0:
            raise DataError("label thresholds must be positive")


@dataclass(eq=False)
class PdaVolume:
    """H x W x N association volume (labels or predicted probabilities)."""

    values: np.ndarray
    spec: NeighborhoodSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[2] != self.spec.size:
            raise DataError(
                f"volume shape {v.shape} does not match neighborhood size "
                f"{self.spec.size}"
            )
        self.values = v

    @property
    def shape(self):
        return self.values.shape

    def max_over_neighbors(self) -> np.ndarray:
        return self.values.max(axis=2)


def _shift(arr: np.ndarray, di: int, dj: int):
    """Value at (i + di, j + dj) for every (i, j); second output marks
    positions whose neighbor falls inside the image."""
    h, w = arr.shape
    out = np.zeros_like(arr)
    ok = np.zeros(arr.shape, dtype=bool)
    src_i = slice(max(di, 0), h + min(di, 0))
    dst_i = slice(max(-di, 0), h + min(-di, 0))
    src_j = slice(max(dj, 0), w + min(dj, 0))
    dst_j = slice(max(-dj, 0), w + min(-dj, 0))
    out[dst_i, dst_j] = arr[src_i, src_j]
    ok[dst_i, dst_j] = True
    return out, ok


def compute_labels(
    radar_depth: DepthImage,
    lidar_truth: DepthImage,
    spec: NeighborhoodSpec,
    params: LabelParams,
):
    """Binary association labels and their validity weights.

    A neighbor is labeled 1 when both the absolute and the relative depth
    difference against the radar depth fall strictly inside the thresholds.
    The weight is 1 only where a radar pixel exists and the neighbor carries a
    reference depth; labels are 0 wherever the weight is 0.

    Returns:
        (labels, weights): a PdaVolume with {0,1} values and a bool array of
        the same shape.
    """
    if radar_depth.values.shape != lidar_truth.values.shape:
        raise DataError("radar and reference depth images differ in size")
    d = radar_depth.values
    radar_valid = d > 0
    n = spec.size
    labels = np.zeros(d.shape + (n,), dtype=np.float32)
    weights = np.zeros(d.shape + (n,), dtype=bool)
    for k, (di, dj) in enumerate(spec.offsets()):
        truth_k, inside = _shift(lidar_truth.values, int(di), int(dj))
        w = radar_valid & inside & (truth_k > 0)
        err = d - truth_k
        hit = w & (np.abs(err) < params.t_abs) & (np.abs(err) < params.t_rel * d)
        labels[:, :, k] = hit
        weights[:, :, k] = w
    return PdaVolume(labels, spec), weights


class BceLoss(NamedTuple):
    total: float
    mean: float
    count: int


def weighted_bce(z: np.ndarray, labels: PdaVolume, weights: np.ndarray) -> BceLoss:
    """Weighted binary cross entropy on raw scores.

    Uses the overflow-safe form log(1 + exp(z)) = max(z, 0) + log1p(exp(-|z|)).
    Returns the weighted sum, the mean over nonzero weights, and that count.
    """
    z = np.asarray(z, dtype=float)
    a = np.asarray(labels.values if isinstance(labels, PdaVolume) else labels)
    w = np.asarray(weights)
    if not (z.shape == a.shape == w.shape):
        raise DataError("score, label, and weight shapes must match")
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    terms = w * (-a * z + softplus)
    total = float(terms.sum(dtype=np.float64))
    count = int(np.count_nonzero(w))
    mean = total / count if count else 0.0
    return BceLoss(total, mean, count)


def weighted_bce_grad(
    z: np.ndarray, labels: PdaVolume, weights: np.ndarray
) -> np.ndarray:
    """Gradient of weighted_bce's total with respect to the raw scores."""
    z = np.asarray(z, dtype=float)
    a = np.asarray(labels.values if isinstance(labels, PdaVolume) else labels)
    return np.asarray(weights) * (expit(z) - a)


def sigmoid_scores(z: np.ndarray) -> np.ndarray:
    """Elementwise logistic sigmoid mapping raw scores to probabilities."""
    return expit(np.asarray(z, dtype=float))


def logit_scores(p: np.ndarray, eps: float = PROB_EPS) -> np.ndarray:
    """Inverse of sigmoid_scores with probabilities clipped to [eps, 1-eps]."""
    q = np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)
    return np.log(q) - np.log1p(-q)


def oracle_predictor(
    radar_depth: DepthImage,
    truth_depth: DepthImage,
    spec: NeighborhoodSpec,
    params: LabelParams,
) -> PdaVolume:
    """Upper-bound predictor: the ground-truth labels read as probabilities.

    Only available in simulation, where a dense reference depth exists.
    """
    labels, _ = compute_labels(radar_depth, truth_depth, spec, params)
    return labels


def noisy_oracle_predictor(
    radar_depth: DepthImage,
    truth_depth: DepthImage,
    spec: NeighborhoodSpec,
    params: LabelParams,
    rng: np.random.Generator,
    sharpness: float = 3.0,
    jitter: float = 0.01,
) -> PdaVolume:
    """Degraded oracle emulating an imperfect learned predictor.

    Confidence decays exponentially with the absolute depth error of the
    association (``exp(-sharpness * |error|)``) plus a small Gaussian jitter.
    The jitter is kept small relative to the channel-threshold spacing so the
    confidence ordering still tracks the error ordering.
    """
    if radar_depth.values.shape != truth_depth.values.shape:
        raise DataError("radar and reference depth images differ in size")
    d = radar_depth.values
    radar_valid = d > 0
    values = np.zeros(d.shape + (spec.size,), dtype=np.float32)
    for k, (di, dj) in enumerate(spec.offsets()):
        truth_k, inside = _shift(truth_depth.values, int(di), int(dj))
        ok = radar_valid & inside & (truth_k > 0)
        err = np.abs(d - truth_k)
        values[:, :, k] = np.where(ok, np.exp(-sharpness * err), 0.0)
    if jitter > 0:
        values += rng.normal(0.0, jitter, size=values.shape).astype(np.float32)
    np.clip(values, PROB_EPS, 1.0 - PROB_EPS, out=values)
    values[~radar_valid, :] = 0.0
    return PdaVolume(values, spec)


def heuristic_predictor(
    radar_depth: DepthImage,
    radar_flow: FlowField,
    optical_flow: FlowField,
    spec: NeighborhoodSpec,
    flow_gate: float = 3.0,
    decay: float = 0.01,
) -> PdaVolume:
    """Non-learned baseline scoring neighbors by proximity, gated by flow.

    Each radar pixel whose scene flow agrees with the optical flow at the same
    pixel (L2 difference <= ``flow_gate`` pixels) receives the score profile
    exp(-decay * neighbor_distance); disagreeing or flow-less pixels get an
    all-zero slice.
    """
    d = radar_depth.values
    radar_valid = d > 0
    offsets = spec.offsets().astype(float)
    profile = np.exp(-decay * np.linalg.norm(offsets, axis=1)).astype(np.float32)
    both = radar_valid & radar_flow.valid & optical_flow.valid
    diff = np.linalg.norm(radar_flow.flow - optical_flow.flow, axis=2)
    gate = both & (diff <= flow_gate)
    values = np.zeros(d.shape + (spec.size,), dtype=np.float32)
    values[gate, :] = profile
    return PdaVolume(values, spec)
