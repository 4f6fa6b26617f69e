"""Radar-camera pixel depth association toolkit.

Library and CLI for associating sparse radar returns with camera pixels,
densifying radar depth into a multi-channel enhanced radar image, building
accumulated LiDAR ground truth with occlusion filtering, and evaluating the
whole chain on synthetic scenes with exact ground truth.
"""

from .accumulation import (
    AccumulationConfig,
    accumulate_lidar,
    accumulate_points,
    accumulate_radar,
    box_segmentation_filter,
    build_semidense_truth,
    flow_consistency_filter,
    point_scene_flow,
)
from .association import (
    FlowField,
    LabelParams,
    NeighborhoodSpec,
    PdaVolume,
    compute_labels,
    heuristic_predictor,
    noisy_oracle_predictor,
    oracle_predictor,
    sigmoid_scores,
    weighted_bce,
    weighted_bce_grad,
)
from .depth import INVALID_DEPTH, DepthImage
from .errors import ConfigError, DataError, RadarCamError, SceneFormatError
from .geometry import (
    BoundingBox3D,
    CameraModel,
    LidarPoint,
    RadarReturn,
    RigidTransform,
    compensate_moving_point,
    compensate_radar,
    interpolate_box,
    project,
)
from .library import build_scene, occlusion_scene_names, scene_names
from .mer import (
    DEFAULT_THRESHOLDS,
    ExpandedDepth,
    MerImage,
    assemble_stage2_input,
    build_mer,
    complete_depth_baseline,
    expand,
)
from .metrics import (
    MetricReport,
    depth_metrics,
    discard_rate,
    pda_curve,
    region_low_height,
    region_pda,
)
from .pipeline import PipelineConfig, run_pipeline, run_simulate
from .scene import (
    FrameTruth,
    Scene,
    load_scene,
    render_truth,
    sample_lidar,
    sample_radar,
    save_scene,
)

__version__ = "0.1.0"
