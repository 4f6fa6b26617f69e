"""End-to-end pipeline: simulate, accumulate, label, densify, complete, score.

Every run is a pure function of (scene, config, seed): artifacts are written
with deterministic bytes, and each run emits a manifest carrying the exact
config echo, its hash, and the resolved seed so the run can be reproduced.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from . import fileio
from .accumulation import (
    AccumulationConfig,
    accumulate_radar,
    build_semidense_truth,
    radar_scene_flow,
)
from .association import (
    LabelParams,
    NeighborhoodSpec,
    compute_labels,
    heuristic_predictor,
    noisy_oracle_predictor,
    oracle_predictor,
)
from .depth import DepthImage
from .errors import ConfigError, DataError
from .library import SCENE_BUILDERS, build_scene
from .mer import (
    DEFAULT_THRESHOLDS,
    MerImage,
    assemble_stage2_input,
    build_mer,
    complete_depth_baseline,
    expand,
)
from .metrics import (
    depth_metrics,
    discard_rate,
    pda_curve,
    region_low_height,
    region_pda,
    write_metrics_csv,
    write_metrics_json,
)
from .parallel import parallel_map
from .scene import (
    RNG_PREDICTOR,
    Scene,
    camera_occluded,
    load_scene,
    observed_flow,
    occlusion_tolerance,
    render_truth,
    sample_lidar,
    sample_radar,
    scene_to_dict,
)

DEFAULTS_VERSION = 1

PREDICTORS = ("oracle", "noisy-oracle", "heuristic")


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline parameters; defaults follow the reference configuration."""

    scene: str = "occluded-radar"
    out_dir: str = "out"
    frame: Optional[int] = None
    predictor: str = "oracle"
    label: LabelParams = field(default_factory=LabelParams)
    neighborhood: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)
    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    accumulation: AccumulationConfig = field(default_factory=AccumulationConfig)
    radar_window: float = 0.3
    flow_noise_sigma: Optional[float] = None
    noisy_sharpness: float = 3.0
    noisy_jitter: float = 0.01
    heuristic_gate: float = 3.0
    heuristic_decay: float = 0.01
    completion_k: int = 8
    seed: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ConfigError(
                f"unknown predictor {self.predictor!r}; choose from "
                f"{', '.join(PREDICTORS)}"
            )
        if len(self.thresholds) < 1 or any(
            b <= a for a, b in zip(self.thresholds, self.thresholds[1:])
        ):
            raise ConfigError("MER thresholds must be strictly increasing")

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["label"] = dataclasses.asdict(self.label)
        doc["neighborhood"] = dataclasses.asdict(self.neighborhood)
        doc["accumulation"] = dataclasses.asdict(self.accumulation)
        doc["thresholds"] = list(self.thresholds)
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def default_frame(self) -> int:
        return self.accumulation.frames_before * self.accumulation.stride


def resolve_scene(config: PipelineConfig) -> Scene:
    """Load the scene (library name or JSON path) and apply overrides."""
    name = config.scene
    if name in SCENE_BUILDERS:
        scene = build_scene(name)
    else:
        path = Path(name)
        if not path.exists():
            raise ConfigError(
                f"scene {name!r} is neither a library scene nor a file"
            )
        scene = load_scene(path)
    updates = {}
    if config.seed is not None:
        updates["rng_seed"] = config.seed
    if config.flow_noise_sigma is not None:
        updates["flow_noise_sigma"] = config.flow_noise_sigma
    if updates:
        scene = dataclasses.replace(scene, **updates)
    return scene


class PipelineRun:
    """Lazily evaluated pipeline stages over one scene and target frame."""

    def __init__(self, config: PipelineConfig, scene: Optional[Scene] = None):
        self.config = config
        self.scene = scene or resolve_scene(config)
        self.target = (
            config.frame if config.frame is not None else config.default_frame()
        )
        if not 0 <= self.target < self.scene.n_frames:
            raise DataError(
                f"target frame {self.target} outside the "
                f"{self.scene.n_frames}-frame sequence"
            )

    @cached_property
    def truth(self):
        return render_truth(self.scene, self.target)

    @cached_property
    def semidense(self):
        return build_semidense_truth(
            self.scene,
            self.target,
            self.config.accumulation,
            self.truth,
            workers=self.config.workers,
        )

    @cached_property
    def radar(self):
        return accumulate_radar(self.scene, self.target, self.config.radar_window)

    @cached_property
    def labels_weights(self):
        return compute_labels(
            self.radar.depth,
            self.semidense.depth,
            self.config.neighborhood,
            self.config.label,
        )

    @cached_property
    def observed_forward_flow(self):
        return observed_flow(self.scene, self.target, self.truth.optical_flow)

    @cached_property
    def pda(self):
        cfg = self.config
        if cfg.predictor == "oracle":
            return oracle_predictor(
                self.radar.depth, self.truth.depth, cfg.neighborhood, cfg.label
            )
        if cfg.predictor == "noisy-oracle":
            return noisy_oracle_predictor(
                self.radar.depth,
                self.truth.depth,
                cfg.neighborhood,
                cfg.label,
                rng=self.scene.rng(RNG_PREDICTOR, self.target),
                sharpness=cfg.noisy_sharpness,
                jitter=cfg.noisy_jitter,
            )
        radar_flow = radar_scene_flow(self.scene, self.target, self.radar)
        return heuristic_predictor(
            self.radar.depth,
            radar_flow,
            self.observed_forward_flow,
            cfg.neighborhood,
            flow_gate=cfg.heuristic_gate,
            decay=cfg.heuristic_decay,
        )

    @cached_property
    def expanded(self):
        return expand(self.radar.depth, self.pda)

    @cached_property
    def mer(self):
        return build_mer(self.expanded, self.config.thresholds)

    @cached_property
    def completion_mer(self) -> DepthImage:
        stack = assemble_stage2_input(
            self.radar.depth, self.mer, self.observed_forward_flow
        )
        return complete_depth_baseline(stack, self.config.completion_k)

    @cached_property
    def completion_radar(self) -> DepthImage:
        cam = self.scene.camera
        stack = assemble_stage2_input(
            self.radar.depth,
            MerImage.empty(cam.width, cam.height),
            self.observed_forward_flow,
        )
        return complete_depth_baseline(stack, self.config.completion_k)

    @cached_property
    def regions(self) -> dict:
        return {
            "full": None,
            "pda_gt_0.9": region_pda(self.expanded.confidence, 0.9),
            "low_height": region_low_height(
                self.truth.height, self.truth.depth.valid_mask
            ),
        }

    @cached_property
    def method_images(self) -> dict:
        mer09 = DepthImage(
            np.where(
                region_pda(self.expanded.confidence, 0.9),
                self.expanded.depth.values,
                0.0,
            )
        )
        return {
            "radar": self.radar.depth,
            "mer@0.9": mer09,
            "completion_radar": self.completion_radar,
            "completion_mer": self.completion_mer,
        }

    @cached_property
    def reports(self) -> dict:
        out = {}
        for region, mask in self.regions.items():
            out[region] = {
                method: depth_metrics(img, self.truth.depth, mask, region)
                for method, img in self.method_images.items()
            }
        return out

    @cached_property
    def curve_rows(self) -> list:
        rows = pda_curve(self.mer, self.truth.depth)
        for row in rows:
            row["scene"] = self.scene.name
        return rows

    def discard_fraction(self) -> float:
        labels, _ = self.labels_weights
        return discard_rate(
            self.pda, self.radar.depth.valid_mask, self.config.thresholds[0]
        )

    def counts(self) -> dict:
        semi = self.semidense
        if len(self.radar.depths):
            occluded, _ = camera_occluded(
                self.scene,
                self.target,
                self.radar.world,
                tol=occlusion_tolerance(self.radar.depths),
            )
        else:
            occluded = np.zeros(0, dtype=bool)
        return {
            "radar_returns": int(len(self.radar.depths)),
            "radar_camera_occluded": int(np.count_nonzero(occluded)),
            "accumulated_points": int(len(semi.points)),
            "removed_flow": semi.removed_flow,
            "removed_box": semi.removed_box,
            "unchecked_flow": semi.unchecked_flow,
            "semidense_valid": semi.depth.count_valid(),
            "completion_anchors_mer": self.mer.channel(0).count_valid(),
            "discard_rate": self.discard_fraction(),
        }


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _manifest_for(config: PipelineConfig, scene: Scene, target, extra: dict) -> dict:
    return {
        "defaults_version": DEFAULTS_VERSION,
        "config": config.to_dict(),
        "config_sha256": config.config_hash(),
        "scene_name": scene.name,
        "seed": scene.rng_seed,
        "target_frame": target,
        **extra,
    }


def _manifest(run: PipelineRun, extra: dict) -> dict:
    return _manifest_for(run.config, run.scene, run.target, extra)


def run_accumulate(config: PipelineConfig) -> dict:
    """Write the filtered semi-dense ground truth and its sidecar."""
    run = PipelineRun(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    semi = run.semidense
    fileio.write_pgm16(out / "semidense_gt.pgm", semi.depth)
    sidecar = _manifest(
        run,
        {
            "removed_flow": semi.removed_flow,
            "removed_box": semi.removed_box,
            "unchecked_flow": semi.unchecked_flow,
            "accumulated_points": int(len(semi.points)),
            "valid_pixels": semi.depth.count_valid(),
        },
    )
    _write_json(out / "semidense_gt.json", sidecar)
    return sidecar


def run_gen_labels(config: PipelineConfig) -> dict:
    run = PipelineRun(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels, weights = run.labels_weights
    fileio.write_pgm16(out / "radar_depth.pgm", run.radar.depth)
    fileio.write_label_volumes(out / "labels.pdab", labels, weights)
    doc = _manifest(
        run,
        {
            "radar_pixels": run.radar.depth.count_valid(),
            "label_positives": int(labels.values.sum()),
            "weighted_entries": int(np.count_nonzero(weights)),
        },
    )
    _write_json(out / "labels.json", doc)
    return doc


def run_build_mer(config: PipelineConfig) -> dict:
    run = PipelineRun(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_pda_volume(out / "pda_pred.pdav", run.pda)
    fileio.write_pgm16(out / "expanded_depth.pgm", run.expanded.depth)
    fileio.write_float_grid(out / "expanded_conf.fgr", run.expanded.confidence)
    fileio.write_mer(out / "mer.mer", run.mer)
    for l in range(run.mer.n_channels):
        fileio.write_pgm16(out / f"mer_ch{l + 1}.pgm", run.mer.channel(l))
    doc = _manifest(
        run,
        {
            "expanded_valid": run.expanded.depth.count_valid(),
            "channel_valid": [
                run.mer.channel(l).count_valid() for l in range(run.mer.n_channels)
            ],
            "discard_rate": run.discard_fraction(),
        },
    )
    _write_json(out / "mer.json", doc)
    return doc


def run_complete(config: PipelineConfig) -> dict:
    run = PipelineRun(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_pgm16(out / "completion_radar.pgm", run.completion_radar)
    fileio.write_pgm16(out / "completion_mer.pgm", run.completion_mer)
    full = run.reports["full"]
    doc = _manifest(
        run,
        {
            "mae_radar": full["completion_radar"].mae,
            "mae_mer": full["completion_mer"].mae,
        },
    )
    _write_json(out / "completion.json", doc)
    return doc


_COMPARISON_FIELDS = (
    "scene",
    "method",
    "region",
    "mae",
    "abs_rel",
    "rmse",
    "rmse_log",
    "n_pixels",
)


def _comparison_rows(run: PipelineRun) -> list:
    rows = []
    for region, methods in run.reports.items():
        for method, rep in methods.items():
            rows.append(
                {
                    "scene": run.scene.name,
                    "method": method,
                    "region": region,
                    "mae": rep.mae,
                    "abs_rel": rep.abs_rel,
                    "rmse": rep.rmse,
                    "rmse_log": rep.rmse_log,
                    "n_pixels": rep.n_pixels,
                }
            )
    return rows


def _write_eval_tables(run: PipelineRun, out: Path) -> list:
    rows = _comparison_rows(run)
    write_metrics_csv(out / "comparison.csv", rows, _COMPARISON_FIELDS)
    write_metrics_csv(
        out / "pda_curve.csv",
        run.curve_rows,
        ("scene", "threshold", "area", "mae", "n_pixels"),
    )
    write_metrics_json(out / "metrics.json", run.reports)
    return rows


def run_eval(config: PipelineConfig) -> dict:
    run = PipelineRun(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = _write_eval_tables(run, out)
    doc = _manifest(run, {"rows": len(rows)})
    _write_json(out / "eval.json", doc)
    return doc


def run_pipeline(config: PipelineConfig) -> dict:
    """Full pipeline: ground truth, labels, predictor, MER, completion, eval."""
    run = PipelineRun(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_pgm16(out / "truth_depth.pgm", run.truth.depth)
    fileio.write_pgm16(out / "semidense_gt.pgm", run.semidense.depth)
    fileio.write_pgm16(out / "radar_depth.pgm", run.radar.depth)
    labels, weights = run.labels_weights
    fileio.write_label_volumes(out / "labels.pdab", labels, weights)
    fileio.write_pda_volume(out / "pda_pred.pdav", run.pda)
    fileio.write_pgm16(out / "expanded_depth.pgm", run.expanded.depth)
    fileio.write_float_grid(out / "expanded_conf.fgr", run.expanded.confidence)
    fileio.write_mer(out / "mer.mer", run.mer)
    for l in range(run.mer.n_channels):
        fileio.write_pgm16(out / f"mer_ch{l + 1}.pgm", run.mer.channel(l))
    fileio.write_pgm16(out / "completion_radar.pgm", run.completion_radar)
    fileio.write_pgm16(out / "completion_mer.pgm", run.completion_mer)
    _write_eval_tables(run, out)
    manifest = _manifest(run, {"counts": run.counts()})
    _write_json(out / "manifest.json", manifest)
    return manifest


def run_simulate(
    config: PipelineConfig, frames: Optional[list] = None
) -> dict:
    """Render and write every frame's truth products and sensor sweeps."""
    scene = resolve_scene(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one_frame(f: int) -> dict:
        truth = render_truth(scene, f)
        fileio.write_pgm16(out / f"depth_{f:04d}.pgm", truth.depth)
        flow3 = np.concatenate(
            [
                truth.optical_flow.flow,
                truth.optical_flow.valid[:, :, None].astype(float),
            ],
            axis=2,
        )
        fileio.write_float_grid(out / f"flow_{f:04d}.fgr", flow3)
        masks = np.stack(
            [
                truth.instance_mask.astype(float),
                truth.vehicle_mask.astype(float),
                truth.height,
            ],
            axis=2,
        )
        fileio.write_float_grid(out / f"masks_{f:04d}.fgr", masks)
        sweep = sample_lidar(scene, f)
        lidar_rows = np.column_stack(
            [
                sweep.positions,
                sweep.instance_ids.astype(float),
                np.full(len(sweep), sweep.timestamp),
            ]
        )
        fileio.write_float_grid(out / f"lidar_{f:04d}.fgr", lidar_rows.reshape(-1, 5, 1))
        returns = sample_radar(scene, f)
        occ_count = 0
        if returns:
            radar_world = scene.ego_pose(f).compose(scene.radar.pose)
            world = radar_world.apply(np.array([r.position for r in returns]))
            dist = np.linalg.norm(
                world - scene.camera_pose_world(f).translation, axis=1
            )
            occ, _ = camera_occluded(scene, f, world, tol=occlusion_tolerance(dist))
            occ_count = int(np.count_nonzero(occ))
            radar_rows = np.column_stack(
                [
                    np.array([r.position for r in returns]),
                    np.array([r.radial_velocity for r in returns]),
                    np.full(len(returns), scene.time_of(f)),
                    np.array([r.true_position for r in returns]),
                    np.array([float(r.instance_id) for r in returns]),
                ]
            )
        else:
            radar_rows = np.zeros((0, 9))
        fileio.write_float_grid(
            out / f"radar_{f:04d}.fgr", radar_rows.reshape(-1, 9, 1)
        )
        return {
            "frame": f,
            "lidar_points": int(len(sweep)),
            "radar_returns": len(returns),
            "radar_camera_occluded": occ_count,
        }

    frame_list = list(frames) if frames is not None else list(range(scene.n_frames))
    stats = parallel_map(one_frame, frame_list, config.workers)
    manifest = _manifest_for(
        config,
        scene,
        None,
        {
            "scene": scene_to_dict(scene),
            "frames": stats,
            "total_radar_camera_occluded": sum(
                s["radar_camera_occluded"] for s in stats
            ),
        },
    )
    _write_json(out / "manifest.json", manifest)
    return manifest
