"""Depth-error metrics and region-restricted evaluation.

Metrics are always computed over pixels valid in both prediction and ground
truth (intersected with an optional region mask).  Pooling is per-pixel
across the evaluated set; per-image rows are emitted so either convention can
be recomputed downstream.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .association import PdaVolume
from .depth import DepthImage
from .errors import DataError
from .mer import MerImage


@dataclass(frozen=True)
class MetricReport:
    """Standard depth-completion error metrics over one pixel set."""

    mae: float
    abs_rel: float
    rmse: float
    rmse_log: float
    n_pixels: int
    region_tag: str = "full"

    def __post_init__(self):
        if self.n_pixels > 0 and self.rmse < self.mae - 1e-12:
            raise DataError("rmse < mae: inconsistent metric computation")

    @classmethod
    def empty(cls, region_tag: str = "full") -> "MetricReport":
        return cls(0.0, 0.0, 0.0, 0.0, 0, region_tag)


def depth_metrics(
    pred: DepthImage,
    truth: DepthImage,
    mask: Optional[np.ndarray] = None,
    region_tag: str = "full",
) -> MetricReport:
    """MAE / AbsRel / RMSE / RMSE-log over jointly valid pixels."""
    if pred.values.shape != truth.values.shape:
        raise DataError("prediction and truth differ in size")
    sel = pred.valid_mask & truth.valid_mask
    if mask is not None:
        sel &= np.asarray(mask, dtype=bool)
    n = int(np.count_nonzero(sel))
    if n == 0:
        return MetricReport.empty(region_tag)
    p = pred.values[sel]
    t = truth.values[sel]
    err = p - t
    mae = float(np.mean(np.abs(err)))
    abs_rel = float(np.mean(np.abs(err) / t))
    rmse = float(np.sqrt(np.mean(err**2)))
    rmse_log = float(np.sqrt(np.mean((np.log(p) - np.log(t)) ** 2)))
    return MetricReport(mae, abs_rel, rmse, rmse_log, n, region_tag)


def region_pda(expanded_confidence: np.ndarray, level: float = 0.9) -> np.ndarray:
    """Pixels whose expanded association confidence strictly exceeds level."""
    return np.asarray(expanded_confidence) > level


def region_low_height(
    height_above_ground: np.ndarray,
    valid: Optional[np.ndarray] = None,
    low: float = 0.3,
    high: float = 2.0,
) -> np.ndarray:
    """Pixels whose true surface sits in the low height band above ground."""
    h = np.asarray(height_above_ground)
    mask = (h >= low) & (h <= high)
    if valid is not None:
        mask &= np.asarray(valid, dtype=bool)
    return mask


def pda_curve(mer: MerImage, truth: DepthImage):
    """Per-channel (threshold, valid area, MAE) rows for a MER image."""
    rows = []
    for l, t in enumerate(mer.thresholds):
        channel = mer.channel(l)
        report = depth_metrics(channel, truth, region_tag=f"pda>{t:g}")
        rows.append(
            {
                "threshold": float(t),
                "area": channel.count_valid(),
                "mae": report.mae,
                "n_pixels": report.n_pixels,
            }
        )
    return rows


def discard_rate(pda: PdaVolume, radar_mask: np.ndarray, t1: float = 0.5) -> float:
    """Fraction of radar pixels whose best association stays below the lowest
    channel threshold (treated as occluded and dropped)."""
    radar_mask = np.asarray(radar_mask, dtype=bool)
    n = int(np.count_nonzero(radar_mask))
    if n == 0:
        return 0.0
    best = pda.max_over_neighbors()[radar_mask]
    return float(np.count_nonzero(best < t1)) / n


def write_metrics_csv(
    path: Union[str, Path], rows: Sequence[dict], fieldnames: Sequence[str]
) -> None:
    """Deterministic CSV writer (fixed field order, repr-stable floats)."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    k: (f"{v:.9g}" if isinstance(v, float) else v)
                    for k, v in row.items()
                }
            )


def write_metrics_json(path: Union[str, Path], reports: dict) -> None:
    """Aggregate JSON summary keyed by region and method."""
    doc = {
        region: {method: asdict(rep) for method, rep in methods.items()}
        for region, methods in reports.items()
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
