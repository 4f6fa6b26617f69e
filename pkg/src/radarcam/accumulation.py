"""Multi-frame accumulation and occlusion filtering.

LiDAR sweeps from a window of frames are compensated into one target frame
(ego motion for static points, interpolated box poses for points on movers)
and rasterized with a z-buffer into a semi-dense depth image.  Accumulated
points occluded in the target view are removed by two complementary filters:
flow consistency (scene flow vs. optical flow) and the per-instance
box/segmentation depth gate.  Radar sweeps accumulate over a short history
the same way, with radial-velocity compensation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .depth import DepthImage, FlowField, rasterize_points
from .parallel import parallel_map
from .errors import DataError
from .geometry import (
    BoundingBox3D,
    CameraModel,
    RigidTransform,
    bin_pixels,
    compensate_radar,
    project_floats,
)
from .scene import (
    FrameTruth,
    Scene,
    move_world_points,
    observed_flow,
    optical_flow_between,
    render_truth,
    sample_lidar,
    sample_radar,
)


@dataclass(frozen=True)
class AccumulationConfig:
    """Accumulation window: counts of strided frames after/before the target,
    plus the flow-consistency threshold in pixels."""

    frames_after: int = 21
    frames_before: int = 4
    stride: int = 2
    t_flow: float = 3.0

    def __post_init__(self):
        if self.frames_after < 0 or self.frames_before < 0:
            raise DataError("frame counts must be non-negative")
        if self.stride < 1:
            raise DataError("stride must be at least 1")
        if self.t_flow <= 0:
            raise DataError("flow threshold must be positive")

    def window(self, target: int) -> list:
        """Source frame indices: the target plus strided neighbors."""
        before = [target - k * self.stride for k in range(self.frames_before, 0, -1)]
        after = [target + k * self.stride for k in range(1, self.frames_after + 1)]
        return before + [target] + after


@dataclass(eq=False)
class AccumulatedPoints:
    """Parallel arrays of accumulated points, compensated to the target frame."""

    world: np.ndarray
    cols: np.ndarray
    rows: np.ndarray
    depths: np.ndarray
    frames: np.ndarray
    instance_ids: np.ndarray

    def __len__(self) -> int:
        return self.depths.size

    def subset(self, mask: np.ndarray) -> "AccumulatedPoints":
        return AccumulatedPoints(
            self.world[mask],
            self.cols[mask],
            self.rows[mask],
            self.depths[mask],
            self.frames[mask],
            self.instance_ids[mask],
        )


def accumulate_points(
    scene: Scene, target: int, cfg: AccumulationConfig, workers: int = 1
) -> AccumulatedPoints:
    """Gather the window's LiDAR points in the target camera, unfiltered."""
    frames = cfg.window(target)
    if frames[0] < 0 or frames[-1] >= scene.n_frames:
        raise DataError(
            f"accumulation window {frames[0]}..{frames[-1]} outside the "
            f"{scene.n_frames}-frame sequence"
        )
    cam = scene.camera
    cam_from_world = scene.camera_pose_world(target).inverse()
    t_dst = scene.time_of(target)

    def one_frame(f: int):
        sweep = sample_lidar(scene, f)
        if len(sweep) == 0:
            return None
        lidar_world = scene.ego_pose(f).compose(scene.lidar.pose)
        world = lidar_world.apply(sweep.positions)
        world = move_world_points(
            scene, world, sweep.instance_ids, scene.time_of(f), t_dst
        )
        cols, rows, z, ok = bin_pixels(cam_from_world.apply(world), cam)
        return (
            world[ok],
            cols[ok],
            rows[ok],
            z[ok],
            np.full(int(ok.sum()), f, dtype=np.int32),
            sweep.instance_ids[ok],
        )

    chunks = [c for c in parallel_map(one_frame, frames, workers) if c is not None]
    if not chunks:
        empty = np.zeros(0)
        return AccumulatedPoints(
            np.zeros((0, 3)), empty.astype(int), empty.astype(int), empty,
            empty.astype(np.int32), empty.astype(np.int32),
        )
    parts = [np.concatenate([c[i] for c in chunks]) for i in range(6)]
    return AccumulatedPoints(*parts)


def rasterize_accumulated(
    points: AccumulatedPoints, cam: CameraModel, max_depth: float = 50.0
) -> DepthImage:
    """Deterministic z-buffer of accumulated points, clipped to (0, max_depth]."""
    keep = points.depths <= max_depth
    return rasterize_points(
        points.cols[keep],
        points.rows[keep],
        points.depths[keep],
        cam.width,
        cam.height,
        order=points.frames[keep],
    )


def accumulate_lidar(
    scene: Scene,
    target: int,
    cfg: Optional[AccumulationConfig] = None,
    workers: int = 1,
) -> DepthImage:
    """Semi-dense accumulated LiDAR depth at the target frame (no filtering)."""
    cfg = cfg or AccumulationConfig()
    pts = accumulate_points(scene, target, cfg, workers)
    return rasterize_accumulated(pts, scene.camera, scene.max_depth)


def point_scene_flow(
    points_t: np.ndarray,
    points_t2: np.ndarray,
    cam_t: RigidTransform,
    cam_t2: RigidTransform,
    cam: CameraModel,
):
    """Image-space scene flow of 3D points between two camera poses.

    ``points_t``/``points_t2`` are the world positions at the two times
    (identical for static points, box-compensated for movers).  Returns
    (flow (M, 2), valid): flow is pixel(t2) - pixel(t), valid only where the
    point is in front of both cameras and inside the image at t.
    """
    p1 = cam_t.inverse().apply(points_t)
    p2 = cam_t2.inverse().apply(points_t2)
    u1, v1, z1 = project_floats(p1, cam)
    u2, v2, z2 = project_floats(p2, cam)
    valid = (
        (z1 > 0)
        & (z2 > 0)
        & (u1 >= -0.5)
        & (u1 < cam.width - 0.5)
        & (v1 >= -0.5)
        & (v1 < cam.height - 0.5)
    )
    flow = np.where(valid[:, None], np.stack([u2 - u1, v2 - v1], axis=1), 0.0)
    return flow, valid


def flow_consistency_filter(
    points: AccumulatedPoints,
    point_flow: np.ndarray,
    point_flow_valid: np.ndarray,
    optical_flow: FlowField,
    t_flow: float = 3.0,
):
    """Discard points whose scene flow disagrees with the optical flow.

    A point is removed when both flows are available at its pixel and their
    L2 difference exceeds ``t_flow`` pixels.  Points that cannot be checked
    (no optical flow at the pixel, or no scene flow) are kept and counted.

    Returns (keep, checked): boolean masks over the points.
    """
    of, of_valid = optical_flow.sample(points.cols, points.rows)
    checked = point_flow_valid & of_valid
    diff = np.linalg.norm(point_flow - of, axis=1)
    keep = ~(checked & (diff > t_flow))
    return keep, checked


def project_box_region(
    box: BoundingBox3D,
    cam_pose: RigidTransform,
    cam: CameraModel,
    instance_mask: np.ndarray,
):
    """Image region of an instance: 3D-box projection intersected with the
    instance's segmentation pixels.  Also returns the box's maximum corner
    depth (None when the box is entirely behind the camera)."""
    corners_cam = cam_pose.inverse().apply(box.corners())
    z = corners_cam[:, 2]
    max_depth = float(z.max())
    in_front = z > 1e-6
    if not np.any(in_front):
        return np.zeros_like(instance_mask, dtype=bool), None
    u, v, _ = project_floats(corners_cam[in_front], cam)
    hull_mask = _convex_hull_mask(
        u, v, cam.width, cam.height, partial=not np.all(in_front)
    )
    return hull_mask & (instance_mask == box.instance_id), max_depth


def _convex_hull_mask(u, v, width, height, partial=False):
    """Pixel mask of the convex hull of projected points.

    When some corners were behind the camera (``partial``), the hull is
    extended to the image border along the corners' outward directions.
    """
    if partial:
        # conservative: span the full vertical extent at the projected columns
        u = np.concatenate([u, u])
        v = np.concatenate([np.zeros_like(v), np.full_like(v, height - 1.0)])
    pts = np.column_stack([u, v])
    hull = _convex_hull_2d(pts)
    if hull.shape[0] < 3:
        return np.zeros((height, width), dtype=bool)
    jj, ii = np.meshgrid(np.arange(width), np.arange(height))
    inside = np.ones((height, width), dtype=bool)
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        cross = (b[0] - a[0]) * (ii - a[1]) - (b[1] - a[1]) * (jj - a[0])
        inside &= cross >= 0
    return inside


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise in (u, v) coordinates."""
    pts = np.unique(points, axis=0)
    if pts.shape[0] < 3:
        return pts

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    ordered = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    lower = half(ordered)
    upper = half(ordered[::-1])
    return np.array(lower[:-1] + upper[:-1])


def box_segmentation_filter(
    points: AccumulatedPoints,
    vehicle_mask: np.ndarray,
    instance_mask: np.ndarray,
    boxes: Sequence[BoundingBox3D],
    cam_pose: RigidTransform,
    cam: CameraModel,
):
    """Remove points that fall on an instance region but lie behind the
    instance's 3D box (deeper than its maximum corner depth)."""
    keep = np.ones(len(points), dtype=bool)
    region_any = np.zeros_like(vehicle_mask, dtype=bool)
    for box in boxes:
        region, max_depth = project_box_region(box, cam_pose, cam, instance_mask)
        region &= vehicle_mask
        if max_depth is None:
            continue
        region_any |= region
        on_region = region[points.rows, points.cols]
        keep &= ~(on_region & (points.depths > max_depth))
    return keep, region_any


@dataclass(eq=False)
class SemiDenseResult:
    """Filtered accumulated ground truth plus filtering diagnostics."""

    depth: DepthImage
    points: AccumulatedPoints
    keep: np.ndarray
    removed_flow: int
    removed_box: int
    unchecked_flow: int
    truth: FrameTruth


def build_semidense_truth(
    scene: Scene,
    target: int,
    cfg: Optional[AccumulationConfig] = None,
    truth: Optional[FrameTruth] = None,
    apply_filters: bool = True,
    workers: int = 1,
) -> SemiDenseResult:
    """Accumulate, filter occlusions, and rasterize the semi-dense label depth.

    Flow consistency runs against the noisy observed optical flow of the
    target frame (forward, falling back to the backward neighbor for points
    that cannot be checked forward); the box/segmentation gate runs against
    the target-frame instance masks and actor boxes.  Depth clipping to the
    scene's range happens after all filters.
    """
    cfg = cfg or AccumulationConfig()
    truth = truth or render_truth(scene, target)
    points = accumulate_points(scene, target, cfg, workers)
    keep = np.ones(len(points), dtype=bool)
    removed_flow = removed_box = unchecked = 0
    if apply_filters and len(points):
        cam_t = scene.camera_pose_world(target)
        t0 = scene.time_of(target)
        checked_any = np.zeros(len(points), dtype=bool)
        for direction, other in (("fwd", target + 1), ("bwd", target - 1)):
            if not 0 <= other < scene.n_frames:
                continue
            flow_field = (
                truth.optical_flow
                if direction == "fwd"
                else optical_flow_between(scene, target, other)
            )
            noisy = observed_flow(
                scene, target, flow_field, backward=direction == "bwd"
            )
            moved = move_world_points(
                scene, points.world, points.instance_ids, t0, scene.time_of(other)
            )
            pf, pf_valid = point_scene_flow(
                points.world, moved, cam_t, scene.camera_pose_world(other), scene.camera
            )
            keep_dir, checked = flow_consistency_filter(
                points, pf, pf_valid & ~checked_any, noisy, cfg.t_flow
            )
            keep &= keep_dir
            checked_any |= checked
            if direction == "fwd" and np.all(checked_any):
                break
        removed_flow = int(np.count_nonzero(~keep))
        unchecked = int(np.count_nonzero(~checked_any))
        boxes = scene.actor_boxes(t0)
        keep_box, _ = box_segmentation_filter(
            points, truth.vehicle_mask, truth.instance_mask, boxes, cam_t,
            scene.camera,
        )
        removed_box = int(np.count_nonzero(keep & ~keep_box))
        keep &= keep_box
    survivors = points.subset(keep)
    depth = rasterize_accumulated(survivors, scene.camera, scene.max_depth)
    return SemiDenseResult(
        depth=depth,
        points=points,
        keep=keep,
        removed_flow=removed_flow,
        removed_box=removed_box,
        unchecked_flow=unchecked,
        truth=truth,
    )


def flag_occluded_points(
    scene: Scene,
    target: int,
    points: AccumulatedPoints,
    truth: FrameTruth,
    geom_tol: float = 1e-3,
):
    """Simulator-side ground truth of which accumulated points are occluded.

    A point is flagged occluded when the exact ray from the camera toward it
    is blocked by a nearer surface AND keeping it would corrupt the label
    image: its depth disagrees with the rendered truth at its pixel beyond
    the depth-agreement tolerance (or the pixel has no truth at all).
    ``visible`` marks points whose ray is unobstructed.  Points that are
    blocked but land on a pixel whose truth still matches their depth
    (sub-pixel silhouette grazers) fall in neither bucket: removing or
    keeping them is equally sound.

    Returns (occluded, visible): masks over the points; both exclude points
    outside the camera view.
    """
    from .scene import camera_occluded, occlusion_tolerance

    blocked, in_view = camera_occluded(scene, target, points.world, tol=geom_tol)
    truth_at = truth.depth.values[points.rows, points.cols]
    disagree = (truth_at <= 0) | (
        np.abs(points.depths - truth_at) > occlusion_tolerance(points.depths)
    )
    occluded = blocked & disagree
    visible = in_view & ~blocked
    return occluded, visible


@dataclass(eq=False)
class RadarFrame:
    """Accumulated radar returns projected into the target camera."""

    depth: DepthImage
    cols: np.ndarray
    rows: np.ndarray
    depths: np.ndarray
    world: np.ndarray
    velocity_world: np.ndarray
    returns: list = field(default_factory=list)


def accumulate_radar(
    scene: Scene, target: int, window: float = 0.3
) -> RadarFrame:
    """Accumulate radar sweeps over a short history into the target frame.

    Each return is advanced by its radial velocity and mapped through ego
    motion, then projected with a nearest-depth z-buffer.  The per-return
    world-frame velocity vector is kept for scene-flow computation.
    """
    cam = scene.camera
    t_dst = scene.time_of(target)
    ego_dst = scene.ego_pose(target)
    cam_from_ego = scene.camera.pose.inverse()
    all_world = []
    all_vel = []
    all_returns = []
    for f in range(target, -1, -1):
        dt = t_dst - scene.time_of(f)
        if dt > window + 1e-9:
            break
        returns = sample_radar(scene, f)
        if not returns:
            continue
        radar_world = scene.ego_pose(f).compose(scene.radar.pose)
        ego_motion = scene.ego_motion(f, target)
        for ret in returns:
            p_ego = compensate_radar(
                ret, dt, ego_motion, scene.radar.pose, max_dt=window + 1e-6
            )
            unit = ret.position / np.linalg.norm(ret.position)
            vel_world = radar_world.rotation @ (unit * ret.radial_velocity)
            all_world.append(ego_dst.apply(p_ego))
            all_vel.append(vel_world)
            all_returns.append(ret)
    if not all_world:
        empty = np.zeros(0)
        return RadarFrame(
            DepthImage.empty(cam.width, cam.height),
            empty.astype(int), empty.astype(int), empty,
            np.zeros((0, 3)), np.zeros((0, 3)), [],
        )
    world = np.asarray(all_world)
    vel = np.asarray(all_vel)
    cam_pts = scene.camera_pose_world(target).inverse().apply(world)
    cols, rows, z, ok = bin_pixels(cam_pts, cam)
    ok &= z <= scene.max_depth
    depth = rasterize_points(
        cols[ok], rows[ok], z[ok], cam.width, cam.height
    )
    return RadarFrame(
        depth=depth,
        cols=cols[ok],
        rows=rows[ok],
        depths=z[ok],
        world=world[ok],
        velocity_world=vel[ok],
        returns=[r for r, o in zip(all_returns, ok) if o],
    )


def radar_scene_flow(scene: Scene, target: int, radar: RadarFrame) -> FlowField:
    """Scene flow of accumulated radar points (constant radial velocity
    model), rasterized sparsely at the radar pixels."""
    cam = scene.camera
    field_flow = np.zeros((cam.height, cam.width, 2))
    field_valid = np.zeros((cam.height, cam.width), dtype=bool)
    if len(radar.depths) == 0 or target + 1 >= scene.n_frames:
        return FlowField(field_flow, field_valid)
    dt = scene.time_of(target + 1) - scene.time_of(target)
    moved = radar.world + radar.velocity_world * dt
    flow, valid = point_scene_flow(
        radar.world,
        moved,
        scene.camera_pose_world(target),
        scene.camera_pose_world(target + 1),
        scene.camera,
    )
    # nearest return wins a shared pixel, matching the depth z-buffer
    order = np.lexsort((radar.depths, radar.rows * cam.width + radar.cols))
    for i in order[::-1]:
        if valid[i]:
            field_flow[radar.rows[i], radar.cols[i]] = flow[i]
            field_valid[radar.rows[i], radar.cols[i]] = True
    return FlowField(field_flow, field_valid)
