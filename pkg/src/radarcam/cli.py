"""Command-line driver.

Subcommands: simulate, accumulate, gen-labels, build-mer, complete, eval,
pipeline, plot.  Exit codes: 0 on success, 2 on configuration errors
(bad flags, malformed scene files), 3 on data errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .accumulation import AccumulationConfig
from .association import LabelParams, NeighborhoodSpec
from .errors import ConfigError, DataError, RadarCamError
from .library import scene_names
from .pipeline import (
    PREDICTORS,
    PipelineConfig,
    run_accumulate,
    run_build_mer,
    run_complete,
    run_eval,
    run_gen_labels,
    run_pipeline,
    run_simulate,
)
from .plotting import plot_csv


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scene",
        required=True,
        help=f"scene JSON path or library name ({', '.join(scene_names())})",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the scene RNG seed")
    parser.add_argument("--frame", type=int, default=None, help="target frame index")
    parser.add_argument(
        "--predictor", choices=PREDICTORS, default="oracle",
        help="association predictor",
    )
    parser.add_argument("--ta", type=float, default=1.0, help="absolute label threshold (m)")
    parser.add_argument("--tr", type=float, default=0.05, help="relative label threshold")
    parser.add_argument("--t-flow", type=float, default=3.0, help="flow-consistency threshold (px)")
    parser.add_argument("--frames-after", type=int, default=21)
    parser.add_argument("--frames-before", type=int, default=4)
    parser.add_argument("--stride", type=int, default=2)
    parser.add_argument(
        "--thresholds", default="0.5,0.6,0.7,0.8,0.9,0.95",
        help="comma-separated MER confidence thresholds",
    )
    parser.add_argument("--flow-noise", type=float, default=None, help="override flow noise sigma (px)")
    parser.add_argument("--radar-window", type=float, default=0.3, help="radar accumulation window (s)")
    parser.add_argument("--completion-k", type=int, default=8)
    parser.add_argument("--heuristic-gate", type=float, default=3.0)
    parser.add_argument("--heuristic-decay", type=float, default=0.01)
    parser.add_argument("--noisy-sharpness", type=float, default=3.0)
    parser.add_argument("--noisy-jitter", type=float, default=0.01)
    parser.add_argument(
        "--workers", type=int, default=os.cpu_count() or 1,
        help="frame-level worker count (results are worker-independent)",
    )


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    try:
        thresholds = tuple(float(t) for t in args.thresholds.split(",") if t)
    except ValueError as exc:
        raise ConfigError(f"bad --thresholds value: {exc}") from exc
    try:
        return PipelineConfig(
            scene=args.scene,
            out_dir=args.out,
            frame=args.frame,
            predictor=args.predictor,
            label=LabelParams(args.ta, args.tr),
            neighborhood=NeighborhoodSpec(),
            thresholds=thresholds,
            accumulation=AccumulationConfig(
                args.frames_after, args.frames_before, args.stride, args.t_flow
            ),
            radar_window=args.radar_window,
            flow_noise_sigma=args.flow_noise,
            noisy_sharpness=args.noisy_sharpness,
            noisy_jitter=args.noisy_jitter,
            heuristic_gate=args.heuristic_gate,
            heuristic_decay=args.heuristic_decay,
            completion_k=args.completion_k,
            seed=args.seed,
            workers=args.workers,
        )
    except DataError as exc:
        # parameter validation failures are configuration errors here
        raise ConfigError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarcam",
        description="Radar-camera pixel depth association pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "render all frames' truth and sensor sweeps to disk"),
        ("accumulate", "build the filtered semi-dense LiDAR ground truth"),
        ("gen-labels", "generate association labels and weights"),
        ("build-mer", "predict associations and build the MER image"),
        ("complete", "run the baseline depth completion (radar vs. MER)"),
        ("eval", "evaluate all methods over the standard regions"),
        ("pipeline", "run every stage and write all artifacts"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    plot = sub.add_parser("plot", help="render curve CSVs into PGM images")
    plot.add_argument("--csv", required=True, help="input curve CSV")
    plot.add_argument("--out", required=True, help="output directory")
    return parser


_RUNNERS = {
    "simulate": run_simulate,
    "accumulate": run_accumulate,
    "gen-labels": run_gen_labels,
    "build-mer": run_build_mer,
    "complete": run_complete,
    "eval": run_eval,
    "pipeline": run_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "plot":
            written = plot_csv(args.csv, args.out)
            print(json.dumps({"written": [str(p) for p in written]}, indent=2))
            return 0
        config = _config_from_args(args)
        result = _RUNNERS[args.command](config)
        summary = {
            k: result[k]
            for k in ("scene_name", "seed", "target_frame", "config_sha256")
            if k in result
        }
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except RadarCamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
