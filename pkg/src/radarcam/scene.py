"""Synthetic multi-frame scenes with exact ground truth.

Scenes are built from axis-aligned rectangle patches and (possibly yawed)
boxes so every sensor sample is an exact analytic ray cast.  Each frame can
produce a dense truth depth, instance masks, analytic optical flow, a LiDAR
sweep, and a single-row radar sweep with beam-height error, so downstream
stages can be verified against exact ground truth.

World and ego frames are x-forward / y-left / z-up with the ground at z = 0.
The scene file is a JSON document with blocks ``calibration``, ``primitives``,
``actors``, ``trajectory``, ``frames`` (``frame_times``), and ``rng_seed``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .depth import DepthImage, FlowField
from .errors import DataError, SceneFormatError
from .geometry import (
    CAMERA_LIKE_ROTATION,
    BoundingBox3D,
    CameraModel,
    LidarPoint,
    RadarReturn,
    RigidTransform,
    interpolate_box,
    interpolate_pose,
    move_points_between_boxes,
    project_floats,
    yaw_rotation,
)

_AXIS_NAMES = "xyz"


@dataclass(frozen=True, eq=False)
class RectPatch:
    """Axis-aligned rectangular patch: a plane slab bounded on the two
    remaining axes.  ``axis`` names the normal direction."""

    axis: int
    offset: float
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(2)
        hi = np.asarray(self.hi, dtype=float).reshape(2)
        if np.any(hi <= lo):
            raise DataError("rect bounds must have positive extent")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def lateral_axes(self):
        return tuple(a for a in range(3) if a != self.axis)


@dataclass(frozen=True, eq=False)
class ActorTrack:
    """Keyframed rigid mover: linear center motion, yaw slerp between keys."""

    instance_id: int
    dimensions: np.ndarray
    times: np.ndarray
    centers: np.ndarray
    yaws: np.ndarray
    category: str = "vehicle"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        y = np.asarray(self.yaws, dtype=float)
        d = np.asarray(self.dimensions, dtype=float).reshape(3)
        if t.size != c.shape[0] or t.size != y.size or t.size == 0:
            raise DataError("actor keyframe arrays must have equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise DataError("actor keyframe times must be strictly increasing")
        for a in (t, c, y, d):
            a.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "yaws", y)
        object.__setattr__(self, "dimensions", d)

    def _segment(self, t: float) -> int:
        if self.times.size == 1:
            return 0
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), self.times.size - 2)

    def _key_box(self, i: int) -> BoundingBox3D:
        return BoundingBox3D(
            center=self.centers[i],
            dimensions=self.dimensions,
            rotation=yaw_rotation(self.yaws[i]),
            instance_id=self.instance_id,
            timestamp=self.times[i],
        )

    def box_at(self, t: float) -> BoundingBox3D:
        if self.times.size == 1:
            box = self._key_box(0)
            return BoundingBox3D(
                box.center, box.dimensions, box.rotation, box.instance_id, t
            )
        i = self._segment(t)
        return interpolate_box(self._key_box(i), self._key_box(i + 1), t)

    def velocity_at(self, t: float) -> np.ndarray:
        if self.times.size == 1:
            return np.zeros(3)
        i = self._segment(t)
        dt = self.times[i + 1] - self.times[i]
        return (self.centers[i + 1] - self.centers[i]) / dt


@dataclass(frozen=True, eq=False)
class EgoTrack:
    """Keyframed ego trajectory; poses interpolate like actor boxes."""

    times: np.ndarray
    positions: np.ndarray
    yaws: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        y = np.asarray(self.yaws, dtype=float)
        if t.size != p.shape[0] or t.size != y.size or t.size == 0:
            raise DataError("trajectory keyframe arrays must have equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise DataError("trajectory times must be strictly increasing")
        for a in (t, p, y):
            a.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "yaws", y)

    def pose_at(self, t: float) -> RigidTransform:
        if self.times.size == 1:
            return RigidTransform(yaw_rotation(self.yaws[0]), self.positions[0])
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), self.times.size - 2)
        span = self.times[i + 1] - self.times[i]
        alpha = (t - self.times[i]) / span
        return interpolate_pose(
            RigidTransform(yaw_rotation(self.yaws[i]), self.positions[i]),
            RigidTransform(yaw_rotation(self.yaws[i + 1]), self.positions[i + 1]),
            float(alpha),
        )


@dataclass(frozen=True, eq=False)
class RadarRig:
    """Single-row radar: horizontal fan of azimuths with beam-height error.

    The radar must be mounted level (its x-z plane horizontal).  True hits are
    cast horizontally at a sampled height in [beam_low, beam_high]; the
    reported point keeps the measured azimuth and range but is placed in the
    nominal horizontal plane at world height ``plane_height``.  With
    ``occlusion_mode`` off, returns hidden from the camera are dropped.
    """

    pose: RigidTransform
    plane_height: float = 0.5
    azimuths: np.ndarray = field(default_factory=lambda: np.deg2rad(np.arange(-35.0, 35.5, 1.0)))
    beam_low: float = 0.0
    beam_high: float = 2.5
    occlusion_mode: bool = True
    max_range: float = 70.0

    def __post_init__(self):
        a = np.asarray(self.azimuths, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "azimuths", a)
        if self.beam_high < self.beam_low:
            raise DataError("beam height interval is inverted")


@dataclass(frozen=True, eq=False)
class LidarRig:
    """Spinning multi-beam LiDAR restricted to a forward azimuth sector."""

    pose: RigidTransform
    elevations: np.ndarray = field(default_factory=lambda: np.deg2rad(np.linspace(-28.0, 6.0, 32)))
    azimuths: np.ndarray = field(default_factory=lambda: np.deg2rad(np.arange(-50.0, 50.25, 0.6)))
    max_range: float = 70.0

    def __post_init__(self):
        e = np.asarray(self.elevations, dtype=float)
        a = np.asarray(self.azimuths, dtype=float)
        e.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "elevations", e)
        object.__setattr__(self, "azimuths", a)


@dataclass(eq=False)
class Scene:
    """Immutable scene description; all sampling operations are pure."""

    name: str
    camera: CameraModel
    radar: RadarRig
    lidar: LidarRig
    primitives: tuple
    actors: tuple
    ego: EgoTrack
    frame_times: np.ndarray
    rng_seed: int = 0
    max_depth: float = 50.0
    flow_noise_sigma: float = 0.5
    tags: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.frame_times, dtype=float)
        if t.size == 0 or (t.size > 1 and np.any(np.diff(t) <= 0)):
            raise DataError("frame times must be non-empty and strictly increasing")
        t.setflags(write=False)
        self.frame_times = t
        for actor in self.actors:
            if actor.times[0] > t[0] or actor.times[-1] < t[-1]:
                raise DataError(
                    f"actor {actor.instance_id} trajectory does not cover the "
                    f"frame interval"
                )
        ids = [a.instance_id for a in self.actors]
        if len(ids) != len(set(ids)) or any(i <= 0 for i in ids):
            raise DataError("actor instance ids must be unique positive ints")

    @property
    def n_frames(self) -> int:
        return int(self.frame_times.size)

    def time_of(self, frame: int) -> float:
        if not 0 <= frame < self.n_frames:
            raise DataError(f"frame {frame} outside 0..{self.n_frames - 1}")
        return float(self.frame_times[frame])

    def ego_pose(self, frame: int) -> RigidTransform:
        return self.ego.pose_at(self.time_of(frame))

    def camera_pose_world(self, frame: int) -> RigidTransform:
        return self.ego_pose(frame).compose(self.camera.pose)

    def ego_motion(self, src_frame: int, dst_frame: int) -> RigidTransform:
        """Transform mapping source ego coordinates into destination ego."""
        return self.ego_pose(dst_frame).inverse().compose(self.ego_pose(src_frame))

    def actor_boxes(self, t: float) -> list:
        return [actor.box_at(t) for actor in self.actors]

    def actor_by_id(self, instance_id: int) -> ActorTrack:
        for actor in self.actors:
            if actor.instance_id == instance_id:
                return actor
        raise DataError(f"unknown actor instance {instance_id}")

    def rng(self, domain: int, frame: int) -> np.random.Generator:
        """Deterministic per-purpose, per-frame random stream."""
        return np.random.default_rng([self.rng_seed, domain, frame])


# rng domain codes (stable across runs and worker schedules)
RNG_RADAR_BEAM = 101
RNG_FLOW_NOISE_FWD = 102
RNG_FLOW_NOISE_BWD = 103
RNG_PREDICTOR = 104


def _ray_rect(origins, dirs, rect: RectPatch, tmin: float):
    a = rect.axis
    b1, b2 = rect.lateral_axes
    da = dirs[:, a]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rect.offset - origins[:, a]) / da
        p1 = origins[:, b1] + t * dirs[:, b1]
        p2 = origins[:, b2] + t * dirs[:, b2]
        ok = (
            (da != 0)
            & (t > tmin)
            & (p1 >= rect.lo[0])
            & (p1 <= rect.hi[0])
            & (p2 >= rect.lo[1])
            & (p2 <= rect.hi[1])
        )
    return np.where(ok, t, np.inf)


def _ray_box(origins, dirs, box: BoundingBox3D, tmin: float):
    o = (origins - box.center) @ box.rotation
    d = dirs @ box.rotation
    half = box.dimensions / 2.0
    t_near = np.full(origins.shape[0], -np.inf)
    t_far = np.full(origins.shape[0], np.inf)
    for a in range(3):
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-half[a] - o[:, a]) / d[:, a]
            tb = (half[a] - o[:, a]) / d[:, a]
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        para = d[:, a] == 0
        inside = np.abs(o[:, a]) <= half[a]
        lo = np.where(para, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(para, np.where(inside, np.inf, -np.inf), hi)
        t_near = np.maximum(t_near, lo)
        t_far = np.minimum(t_far, hi)
    valid = t_near <= t_far
    entry = np.where(valid & (t_near > tmin), t_near, np.inf)
    exit_ = np.where(valid & (t_far > tmin), t_far, np.inf)
    return np.minimum(entry, exit_)


def cast_rays(
    origins: np.ndarray,
    dirs: np.ndarray,
    primitives: Sequence,
    boxes: Sequence[BoundingBox3D] = (),
    tmin: float = 1e-9,
):
    """Nearest hit of each ray against all geometry.

    Returns (t, instance): ray parameters (inf on miss) and the instance id of
    the hit surface (0 for static geometry).
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if origins.shape[0] == 1 and dirs.shape[0] > 1:
        origins = np.broadcast_to(origins, dirs.shape)
    best = np.full(dirs.shape[0], np.inf)
    inst = np.zeros(dirs.shape[0], dtype=np.int32)
    for prim in primitives:
        if isinstance(prim, RectPatch):
            t = _ray_rect(origins, dirs, prim, tmin)
        else:
            t = _ray_box(origins, dirs, prim, tmin)
        closer = t < best
        best = np.where(closer, t, best)
    for box in boxes:
        t = _ray_box(origins, dirs, box, tmin)
        closer = t < best
        best = np.where(closer, t, best)
        inst = np.where(closer, np.int32(box.instance_id), inst)
    return best, inst


@dataclass(eq=False)
class GeomBuffers:
    """Per-pixel geometry of one rendered frame."""

    depth: np.ndarray
    points_world: np.ndarray
    instance: np.ndarray
    valid: np.ndarray
    cam_pose: RigidTransform


@dataclass(eq=False)
class FrameTruth:
    """Ground-truth rasters for one frame.

    ``optical_flow`` maps this frame's pixels to the next frame; it is invalid
    everywhere on the last frame.  ``height`` is meters above ground of the
    visible surface.
    """

    depth: DepthImage
    instance_mask: np.ndarray
    vehicle_mask: np.ndarray
    optical_flow: FlowField
    height: np.ndarray


def render_geometry(scene: Scene, frame: int) -> GeomBuffers:
    """Z-buffer rasterization of all primitives and actors at frame time."""
    cam = scene.camera
    t = scene.time_of(frame)
    pose = scene.camera_pose_world(frame)
    jj, ii = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    dirs_cam = np.stack(
        [
            (jj.reshape(-1) - cam.cx) / cam.fx,
            (ii.reshape(-1) - cam.cy) / cam.fy,
            np.ones(cam.width * cam.height),
        ],
        axis=1,
    )
    dirs_world = dirs_cam @ pose.rotation.T
    hit_t, inst = cast_rays(
        pose.translation, dirs_world, scene.primitives, scene.actor_boxes(t)
    )
    valid = np.isfinite(hit_t) & (hit_t <= scene.max_depth)
    depth = np.where(valid, hit_t, 0.0).reshape(cam.height, cam.width)
    pts = pose.translation + np.where(valid, hit_t, 0.0)[:, None] * dirs_world
    return GeomBuffers(
        depth=depth,
        points_world=pts.reshape(cam.height, cam.width, 3),
        instance=np.where(valid, inst, 0).reshape(cam.height, cam.width).astype(np.int32),
        valid=valid.reshape(cam.height, cam.width),
        cam_pose=pose,
    )


def move_world_points(
    scene: Scene,
    points: np.ndarray,
    instances: np.ndarray,
    t_src: float,
    t_dst: float,
) -> np.ndarray:
    """Advance world points from t_src to t_dst; points on actors ride their
    interpolated boxes, static points stay put."""
    out = np.array(points, dtype=float)
    for actor in scene.actors:
        mask = instances == actor.instance_id
        if np.any(mask):
            out[mask] = move_points_between_boxes(
                out[mask], actor.box_at(t_src), actor.box_at(t_dst)
            )
    return out


def optical_flow_between(
    scene: Scene, frame: int, to_frame: int, geom: Optional[GeomBuffers] = None
) -> FlowField:
    """Analytic optical flow from one frame's pixels to another frame."""
    cam = scene.camera
    geom = geom or render_geometry(scene, frame)
    t0 = scene.time_of(frame)
    t1 = scene.time_of(to_frame)
    pts = geom.points_world.reshape(-1, 3)
    inst = geom.instance.reshape(-1)
    moved = move_world_points(scene, pts, inst, t0, t1)
    cam_pose1 = scene.camera_pose_world(to_frame)
    pts_cam1 = cam_pose1.inverse().apply(moved)
    u1, v1, z1 = project_floats(pts_cam1, cam)
    jj, ii = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    du = u1.reshape(cam.height, cam.width) - jj
    dv = v1.reshape(cam.height, cam.width) - ii
    valid = geom.valid & (z1.reshape(cam.height, cam.width) > 0)
    flow = np.where(valid[:, :, None], np.stack([du, dv], axis=2), 0.0)
    return FlowField(flow, valid)


def render_truth(scene: Scene, frame: int) -> FrameTruth:
    """Dense truth depth, masks, surface heights, and flow to the next frame."""
    geom = render_geometry(scene, frame)
    if frame + 1 < scene.n_frames:
        flow = optical_flow_between(scene, frame, frame + 1, geom)
    else:
        flow = FlowField.invalid(scene.camera.width, scene.camera.height)
    height = np.where(geom.valid, geom.points_world[:, :, 2], 0.0)
    return FrameTruth(
        depth=DepthImage(geom.depth),
        instance_mask=geom.instance,
        vehicle_mask=geom.instance > 0,
        optical_flow=flow,
        height=height,
    )


@dataclass(eq=False)
class LidarSweep:
    """One LiDAR revolution: sensor-frame points plus hit instance ids."""

    positions: np.ndarray
    instance_ids: np.ndarray
    timestamp: float

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, i: int) -> LidarPoint:
        return LidarPoint(
            self.positions[i], self.timestamp, int(self.instance_ids[i])
        )


def sample_lidar(
    scene: Scene, frame: int, rig: Optional[LidarRig] = None
) -> LidarSweep:
    """Exact ray-cast LiDAR sweep at frame time."""
    rig = rig or scene.lidar
    t = scene.time_of(frame)
    pose = scene.ego_pose(frame).compose(rig.pose)
    az, el = np.meshgrid(rig.azimuths, rig.elevations)
    az = az.reshape(-1)
    el = el.reshape(-1)
    # sensor frame: z boresight, x right, y down; elevation positive upward
    dirs_sensor = np.stack(
        [np.sin(az) * np.cos(el), -np.sin(el), np.cos(az) * np.cos(el)], axis=1
    )
    dirs_world = dirs_sensor @ pose.rotation.T
    hit_t, inst = cast_rays(
        pose.translation, dirs_world, scene.primitives, scene.actor_boxes(t)
    )
    ok = np.isfinite(hit_t) & (hit_t <= rig.max_range)
    positions = dirs_sensor[ok] * hit_t[ok][:, None]
    return LidarSweep(positions, inst[ok].astype(np.int32), t)


def occlusion_tolerance(
    dist: np.ndarray, t_abs: float = 1.0, t_rel: float = 0.05
) -> np.ndarray:
    """Association-scale occlusion tolerance: a point only counts as occluded
    when the visible surface is nearer by more than the depth-agreement
    thresholds allow."""
    return np.maximum(t_abs, t_rel * np.asarray(dist, dtype=float))


def camera_occluded(scene: Scene, frame: int, points_world: np.ndarray, tol=1e-3):
    """Geometric camera-visibility test for world points at frame time.

    Returns (occluded, in_view): a point is occluded when the ray from the
    camera toward it meets a surface more than ``tol`` meters (scalar or
    per-point array) before the point; in_view marks points projecting inside
    the image in front of the camera.
    """
    cam = scene.camera
    pose = scene.camera_pose_world(frame)
    pts = np.atleast_2d(np.asarray(points_world, dtype=float))
    pts_cam = pose.inverse().apply(pts)
    u, v, z = project_floats(pts_cam, cam)
    in_view = (z > 0) & (u >= -0.5) & (u < cam.width - 0.5) & (v >= -0.5) & (v < cam.height - 0.5)
    dirs = pts - pose.translation
    dist = np.linalg.norm(dirs, axis=1)
    hit_t, _ = cast_rays(
        pose.translation, dirs, scene.primitives,
        scene.actor_boxes(scene.time_of(frame)),
    )
    gap = (1.0 - np.minimum(hit_t, 1.0)) * dist
    occluded = in_view & (gap > tol)
    return occluded, in_view


def sample_radar(
    scene: Scene,
    frame: int,
    rig: Optional[RadarRig] = None,
    rng: Optional[np.random.Generator] = None,
) -> list:
    """Single-row radar sweep with beam-height error.

    For each azimuth a true-hit height is drawn from the rig's beam interval
    and a horizontal ray is cast at that height from the radar's lateral
    position; the measured range is the distance from the radar origin to the
    true hit.  The reported point sits at the measured azimuth and range in
    the nominal plane at world height ``plane_height``; the true hit stays on
    the return as simulator-private ground truth.
    """
    rig = rig or scene.radar
    rng = rng or scene.rng(RNG_RADAR_BEAM, frame)
    t = scene.time_of(frame)
    pose = scene.ego_pose(frame).compose(rig.pose)
    if abs(pose.rotation[2, 0]) > 1e-9 or abs(pose.rotation[2, 2]) > 1e-9:
        raise DataError("radar must be mounted level (horizontal scan plane)")
    origin = pose.translation
    az = rig.azimuths
    dirs_sensor = np.stack([np.sin(az), np.zeros_like(az), np.cos(az)], axis=1)
    dirs_world = dirs_sensor @ pose.rotation.T
    heights = rng.uniform(rig.beam_low, rig.beam_high, size=az.size)
    origins = np.column_stack(
        [np.full(az.size, origin[0]), np.full(az.size, origin[1]), heights]
    )
    boxes = scene.actor_boxes(t)
    hit_t, inst = cast_rays(origins, dirs_world, scene.primitives, boxes)
    ok = np.isfinite(hit_t)
    true_hits = origins + np.where(ok, hit_t, 0.0)[:, None] * dirs_world
    ranges = np.linalg.norm(true_hits - origin, axis=1)
    ok &= ranges <= rig.max_range
    reported = np.column_stack(
        [
            origin[0] + ranges * dirs_world[:, 0],
            origin[1] + ranges * dirs_world[:, 1],
            np.full(az.size, rig.plane_height),
        ]
    )
    if not rig.occlusion_mode and np.any(ok):
        cam_origin = scene.camera_pose_world(frame).translation
        dist = np.linalg.norm(reported[ok] - cam_origin, axis=1)
        occ, _ = camera_occluded(
            scene, frame, reported[ok], tol=occlusion_tolerance(dist)
        )
        keep = np.ones(az.size, dtype=bool)
        keep[np.nonzero(ok)[0][occ]] = False
        ok &= keep
    inv = pose.inverse()
    returns = []
    for i in np.nonzero(ok)[0]:
        vel = 0.0
        if inst[i] > 0:
            v_world = scene.actor_by_id(int(inst[i])).velocity_at(t)
            u = (true_hits[i] - origin) / max(ranges[i], 1e-12)
            vel = float(v_world @ u)
        returns.append(
            RadarReturn(
                position=inv.apply(reported[i]),
                radial_velocity=vel,
                timestamp=t,
                true_position=inv.apply(true_hits[i]),
                instance_id=int(inst[i]),
            )
        )
    return returns


# ---------------------------------------------------------------------------
# scene file (de)serialization


def _need(d: dict, key: str, path: str):
    if key not in d:
        raise SceneFormatError("missing required field", path=f"{path}.{key}")
    return d[key]


def _pose_from_dict(d: dict, path: str) -> RigidTransform:
    trans = _need(d, "translation", path)
    quat = _need(d, "quaternion", path)
    try:
        return RigidTransform.from_quaternion(quat, trans)
    except (DataError, ValueError) as exc:
        raise SceneFormatError(str(exc), path=path) from exc


def _pose_to_dict(pose: RigidTransform) -> dict:
    return {
        "translation": [float(x) for x in pose.translation],
        "quaternion": [float(x) for x in pose.quaternion()],
    }


def _angles_from_dict(d: dict, path: str) -> np.ndarray:
    start = float(_need(d, "start", path))
    stop = float(_need(d, "stop", path))
    step = float(_need(d, "step", path))
    if step <= 0:
        raise SceneFormatError("step must be positive", path=f"{path}.step")
    return np.deg2rad(np.arange(start, stop + step / 2.0, step))


def scene_from_dict(doc: dict) -> Scene:
    """Build a Scene from its JSON document; raises SceneFormatError with the
    offending field path on malformed input."""
    try:
        cal = _need(doc, "calibration", "$")
        cam_d = _need(cal, "camera", "$.calibration")
        camera = CameraModel(
            fx=float(_need(cam_d, "fx", "$.calibration.camera")),
            fy=float(_need(cam_d, "fy", "$.calibration.camera")),
            cx=float(_need(cam_d, "cx", "$.calibration.camera")),
            cy=float(_need(cam_d, "cy", "$.calibration.camera")),
            width=int(_need(cam_d, "width", "$.calibration.camera")),
            height=int(_need(cam_d, "height", "$.calibration.camera")),
            pose=_pose_from_dict(
                _need(cam_d, "pose", "$.calibration.camera"),
                "$.calibration.camera.pose",
            ),
        )
        rad_d = _need(cal, "radar", "$.calibration")
        beam = rad_d.get("beam_height", {"low": 0.0, "high": 2.5})
        radar = RadarRig(
            pose=_pose_from_dict(
                _need(rad_d, "pose", "$.calibration.radar"),
                "$.calibration.radar.pose",
            ),
            plane_height=float(rad_d.get("plane_height", 0.5)),
            azimuths=_angles_from_dict(
                _need(rad_d, "azimuth_deg", "$.calibration.radar"),
                "$.calibration.radar.azimuth_deg",
            ),
            beam_low=float(beam.get("low", 0.0)),
            beam_high=float(beam.get("high", 2.5)),
            occlusion_mode=bool(rad_d.get("occlusion_mode", True)),
            max_range=float(rad_d.get("max_range", 70.0)),
        )
        lid_d = _need(cal, "lidar", "$.calibration")
        elev = _need(lid_d, "elevation_deg", "$.calibration.lidar")
        lidar = LidarRig(
            pose=_pose_from_dict(
                _need(lid_d, "pose", "$.calibration.lidar"),
                "$.calibration.lidar.pose",
            ),
            elevations=np.deg2rad(
                np.linspace(
                    float(_need(elev, "start", "$.calibration.lidar.elevation_deg")),
                    float(_need(elev, "stop", "$.calibration.lidar.elevation_deg")),
                    int(_need(elev, "count", "$.calibration.lidar.elevation_deg")),
                )
            ),
            azimuths=_angles_from_dict(
                _need(lid_d, "azimuth_deg", "$.calibration.lidar"),
                "$.calibration.lidar.azimuth_deg",
            ),
            max_range=float(lid_d.get("max_range", 70.0)),
        )
        prims = []
        for n, p in enumerate(doc.get("primitives", [])):
            path = f"$.primitives[{n}]"
            kind = _need(p, "type", path)
            if kind == "rect":
                axis = _AXIS_NAMES.index(_need(p, "axis", path))
                bounds = _need(p, "bounds", path)
                lat = [a for a in _AXIS_NAMES if a != _AXIS_NAMES[axis]]
                lo = [float(bounds[a][0]) for a in lat]
                hi = [float(bounds[a][1]) for a in lat]
                prims.append(
                    RectPatch(axis, float(_need(p, "offset", path)), lo, hi)
                )
            elif kind == "box":
                prims.append(
                    BoundingBox3D(
                        center=_need(p, "center", path),
                        dimensions=_need(p, "size", path),
                        rotation=yaw_rotation(
                            math.radians(float(p.get("yaw_deg", 0.0)))
                        ),
                        instance_id=0,
                    )
                )
            else:
                raise SceneFormatError(
                    f"unknown primitive type {kind!r}", path=f"{path}.type"
                )
        actors = []
        for n, a in enumerate(doc.get("actors", [])):
            path = f"$.actors[{n}]"
            kfs = _need(a, "keyframes", path)
            if not kfs:
                raise SceneFormatError("actor needs keyframes", path=path)
            actors.append(
                ActorTrack(
                    instance_id=int(_need(a, "id", path)),
                    dimensions=_need(a, "size", path),
                    times=[float(k["t"]) for k in kfs],
                    centers=[k["center"] for k in kfs],
                    yaws=[math.radians(float(k.get("yaw_deg", 0.0))) for k in kfs],
                    category=a.get("category", "vehicle"),
                )
            )
        traj = _need(doc, "trajectory", "$")
        ego = EgoTrack(
            times=[float(k["t"]) for k in traj],
            positions=[k["position"] for k in traj],
            yaws=[math.radians(float(k.get("yaw_deg", 0.0))) for k in traj],
        )
        return Scene(
            name=str(doc.get("name", "scene")),
            camera=camera,
            radar=radar,
            lidar=lidar,
            primitives=tuple(prims),
            actors=tuple(actors),
            ego=ego,
            frame_times=_need(doc, "frame_times", "$"),
            rng_seed=int(doc.get("rng_seed", 0)),
            max_depth=float(doc.get("max_depth", 50.0)),
            flow_noise_sigma=float(doc.get("flow_noise_sigma", 0.5)),
            tags=tuple(doc.get("tags", [])),
        )
    except SceneFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, DataError) as exc:
        raise SceneFormatError(f"invalid scene document: {exc}") from exc


def scene_to_dict(scene: Scene) -> dict:
    def deg(values):
        return np.rad2deg(np.asarray(values))

    rad_az = deg(scene.radar.azimuths)
    lid_az = deg(scene.lidar.azimuths)
    lid_el = deg(scene.lidar.elevations)
    prims = []
    for p in scene.primitives:
        if isinstance(p, RectPatch):
            lat = [a for a in _AXIS_NAMES if a != _AXIS_NAMES[p.axis]]
            prims.append(
                {
                    "type": "rect",
                    "axis": _AXIS_NAMES[p.axis],
                    "offset": float(p.offset),
                    "bounds": {
                        lat[0]: [float(p.lo[0]), float(p.hi[0])],
                        lat[1]: [float(p.lo[1]), float(p.hi[1])],
                    },
                }
            )
        else:
            yaw = math.degrees(math.atan2(p.rotation[1, 0], p.rotation[0, 0]))
            prims.append(
                {
                    "type": "box",
                    "center": [float(x) for x in p.center],
                    "size": [float(x) for x in p.dimensions],
                    "yaw_deg": yaw,
                }
            )
    actors = []
    for a in scene.actors:
        actors.append(
            {
                "id": a.instance_id,
                "category": a.category,
                "size": [float(x) for x in a.dimensions],
                "keyframes": [
                    {
                        "t": float(t),
                        "center": [float(x) for x in c],
                        "yaw_deg": math.degrees(y),
                    }
                    for t, c, y in zip(a.times, a.centers, a.yaws)
                ],
            }
        )
    return {
        "name": scene.name,
        "rng_seed": scene.rng_seed,
        "max_depth": scene.max_depth,
        "flow_noise_sigma": scene.flow_noise_sigma,
        "tags": list(scene.tags),
        "frame_times": [float(t) for t in scene.frame_times],
        "calibration": {
            "camera": {
                "fx": scene.camera.fx,
                "fy": scene.camera.fy,
                "cx": scene.camera.cx,
                "cy": scene.camera.cy,
                "width": scene.camera.width,
                "height": scene.camera.height,
                "pose": _pose_to_dict(scene.camera.pose),
            },
            "radar": {
                "pose": _pose_to_dict(scene.radar.pose),
                "plane_height": scene.radar.plane_height,
                "azimuth_deg": {
                    "start": float(rad_az[0]),
                    "stop": float(rad_az[-1]),
                    "step": float(rad_az[1] - rad_az[0]) if rad_az.size > 1 else 1.0,
                },
                "beam_height": {
                    "low": scene.radar.beam_low,
                    "high": scene.radar.beam_high,
                },
                "occlusion_mode": scene.radar.occlusion_mode,
                "max_range": scene.radar.max_range,
            },
            "lidar": {
                "pose": _pose_to_dict(scene.lidar.pose),
                "elevation_deg": {
                    "start": float(lid_el[0]),
                    "stop": float(lid_el[-1]),
                    "count": int(lid_el.size),
                },
                "azimuth_deg": {
                    "start": float(lid_az[0]),
                    "stop": float(lid_az[-1]),
                    "step": float(lid_az[1] - lid_az[0]) if lid_az.size > 1 else 1.0,
                },
                "max_range": scene.lidar.max_range,
            },
        },
        "primitives": prims,
        "actors": actors,
        "trajectory": [
            {
                "t": float(t),
                "position": [float(x) for x in p],
                "yaw_deg": math.degrees(y),
            }
            for t, p, y in zip(scene.ego.times, scene.ego.positions, scene.ego.yaws)
        ],
    }


def load_scene(path: Union[str, Path]) -> Scene:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(
            f"scene file is not valid JSON: {exc.msg}", line=exc.lineno
        ) from exc
    return scene_from_dict(doc)


def save_scene(scene: Scene, path: Union[str, Path]) -> None:
    Path(path).write_text(
        json.dumps(scene_to_dict(scene), indent=2, sort_keys=True) + "\n"
    )


def observed_flow(
    scene: Scene, frame: int, truth_flow: FlowField, backward: bool = False
) -> FlowField:
    """Ground-truth flow degraded by seeded Gaussian pixel noise, emulating an
    imperfect optical-flow estimator."""
    sigma = scene.flow_noise_sigma
    if sigma <= 0:
        return truth_flow
    domain = RNG_FLOW_NOISE_BWD if backward else RNG_FLOW_NOISE_FWD
    rng = scene.rng(domain, frame)
    noise = rng.normal(0.0, sigma, size=truth_flow.flow.shape)
    flow = np.where(truth_flow.valid[:, :, None], truth_flow.flow + noise, 0.0)
    return FlowField(flow, truth_flow.valid)
