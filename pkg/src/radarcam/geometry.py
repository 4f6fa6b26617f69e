"""Rigid transforms, pinhole projection, and motion compensation for the sensor rig.

Conventions: world and ego frames are x-forward / y-left / z-up; every sensor
frame is camera-like, z along the boresight, x right, y down.  All operations
are pure functions over immutable inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import DataError

_ORTHO_TOL = 1e-9

#: Rotation of a level, forward-looking camera-like sensor relative to the ego
#: frame (sensor z -> ego x, sensor x -> ego -y, sensor y -> ego -z).
CAMERA_LIKE_ROTATION = np.array(
    [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
)
CAMERA_LIKE_ROTATION.setflags(write=False)


def _as_vec3(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(3)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion: ``apply(p) = rotation @ p + translation`` (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = _as_vec3(self.translation).copy()
        if not np.allclose(r @ r.T, np.eye(3), atol=_ORTHO_TOL):
            raise DataError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise DataError("rotation determinant must be +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_quaternion(quat_wxyz, translation) -> "RigidTransform":
        """Build from a unit quaternion in (w, x, y, z) order."""
        w, x, y, z = np.asarray(quat_wxyz, dtype=float).reshape(4)
        rot = Rotation.from_quat([x, y, z, w]).as_matrix()
        return RigidTransform(rot, translation)

    def quaternion(self) -> np.ndarray:
        """Unit quaternion in (w, x, y, z) order, w >= 0."""
        x, y, z, w = Rotation.from_matrix(self.rotation).as_quat()
        q = np.array([w, x, y, z])
        return -q if w < 0 else q

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole intrinsics plus the sensor-to-ego pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise DataError("image size must be positive")


@dataclass(frozen=True, eq=False)
class RadarReturn:
    """Single radar measurement in the radar sensor frame.

    ``radial_velocity`` is the target's ego-motion-compensated range rate,
    positive when moving away.  ``true_position`` and ``instance_id`` are
    simulator-private ground truth and absent on "real" returns.
    """

    position: np.ndarray
    radial_velocity: float
    timestamp: float
    true_position: Optional[np.ndarray] = None
    instance_id: int = 0

    def __post_init__(self):
        p = _as_vec3(self.position)
        p.setflags(write=False)
        object.__setattr__(self, "position", p)
        if self.true_position is not None:
            tp = _as_vec3(self.true_position)
            tp.setflags(write=False)
            object.__setattr__(self, "true_position", tp)
        if not np.linalg.norm(p) > 0:
            raise DataError("radar return must have positive range")
        if not np.isfinite(self.timestamp):
            raise DataError("radar timestamp must be finite")

    @property
    def range(self) -> float:
        return float(np.linalg.norm(self.position))


@dataclass(frozen=True, eq=False)
class LidarPoint:
    """Single LiDAR measurement in the LiDAR sensor frame."""

    position: np.ndarray
    timestamp: float
    instance_id: int = 0

    def __post_init__(self):
        p = _as_vec3(self.position)
        p.setflags(write=False)
        object.__setattr__(self, "position", p)


@dataclass(frozen=True, eq=False)
class BoundingBox3D:
    """Oriented 3D box; ``dimensions`` are full extents along the local axes."""

    center: np.ndarray
    dimensions: np.ndarray
    rotation: np.ndarray
    instance_id: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        c = _as_vec3(self.center)
        d = _as_vec3(self.dimensions)
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        if not np.all(d > 0):
            raise DataError("box dimensions must be positive")
        for a in (c, d, r):
            a.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "dimensions", d)
        object.__setattr__(self, "rotation", r)

    def corners(self) -> np.ndarray:
        """The 8 box corners, shape (8, 3)."""
        signs = np.array(list(itertools.product((-1, 1), repeat=3)), dtype=float)
        return self.center + (signs * self.dimensions / 2.0) @ self.rotation.T

    def to_local(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p - self.center) @ self.rotation

    def contains(self, points: np.ndarray, tol: float = 1e-6) -> np.ndarray:
        local = np.atleast_2d(self.to_local(points))
        inside = np.all(np.abs(local) <= self.dimensions / 2.0 + tol, axis=1)
        return inside if np.asarray(points).ndim > 1 else bool(inside[0])


class PixelHit(NamedTuple):
    u: int
    v: int
    depth: float


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # fixed binning convention: round-to-nearest, halves toward +inf
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)


def project(point, cam: CameraModel) -> Optional[PixelHit]:
    """Project a camera-frame point to an integer pixel, or None if out of view."""
    x, y, z = _as_vec3(point)
    if z <= 0:
        return None
    u = cam.fx * x / z + cam.cx
    v = cam.fy * y / z + cam.cy
    ui, vi = int(_round_half_up(u)), int(_round_half_up(v))
    if not (0 <= ui < cam.width and 0 <= vi < cam.height):
        return None
    return PixelHit(ui, vi, float(z))


def project_floats(points: np.ndarray, cam: CameraModel):
    """Sub-pixel projection of (M, 3) camera-frame points.

    Returns (u, v, z) arrays; u/v are only meaningful where z > 0.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    z = p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.fx * p[:, 0] / z + cam.cx
        v = cam.fy * p[:, 1] / z + cam.cy
    return u, v, z


def bin_pixels(points: np.ndarray, cam: CameraModel):
    """Integer pixel binning for (M, 3) camera-frame points.

    Returns (cols, rows, depth, in_view); cols/rows are valid only where
    in_view is set.
    """
    u, v, z = project_floats(points, cam)
    in_front = z > 0
    cols = _round_half_up(np.where(in_front, u, -1.0))
    rows = _round_half_up(np.where(in_front, v, -1.0))
    in_view = (
        in_front
        & (cols >= 0)
        & (cols < cam.width)
        & (rows >= 0)
        & (rows < cam.height)
    )
    return cols, rows, z, in_view


def back_project(u, v, depth, cam: CameraModel) -> np.ndarray:
    """Camera-frame 3D point of pixel (u, v) at the given depth."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    depth = np.asarray(depth, dtype=float)
    x = (u - cam.cx) / cam.fx * depth
    y = (v - cam.cy) / cam.fy * depth
    return np.stack(np.broadcast_arrays(x, y, depth), axis=-1)


def compensate_radar(
    ret: RadarReturn,
    dt: float,
    ego_motion: RigidTransform,
    radar_pose: Optional[RigidTransform] = None,
    max_dt: float = 0.35,
) -> np.ndarray:
    """Predict a radar return's position in the destination ego frame.

    The point is advanced along its radial unit vector by radial_velocity*dt
    in the sensor frame, then mapped through the sensor extrinsics and
    ``ego_motion`` (source ego -> destination ego).  Tangential target motion
    is not observable and is not compensated.
    """
    if abs(dt) > max_dt + 1e-12:
        raise DataError(
            f"compensation interval {dt:.3f}s exceeds the {max_dt:.3f}s window"
        )
    unit = ret.position / np.linalg.norm(ret.position)
    moved = ret.position + unit * (ret.radial_velocity * dt)
    if radar_pose is not None:
        moved = radar_pose.apply(moved)
    return ego_motion.apply(moved)


def interpolate_pose(
    pose_a: RigidTransform, pose_b: RigidTransform, alpha: float
) -> RigidTransform:
    """Interpolate between two poses: linear translation, quaternion slerp."""
    if alpha <= 0.0:
        return pose_a
    if alpha >= 1.0:
        return pose_b
    rots = Rotation.from_matrix(
        np.stack([pose_a.rotation, pose_b.rotation])
    )
    rot = Slerp([0.0, 1.0], rots)(alpha).as_matrix()
    trans = (1.0 - alpha) * pose_a.translation + alpha * pose_b.translation
    return RigidTransform(rot, trans)


def interpolate_box(
    box_a: BoundingBox3D, box_b: BoundingBox3D, t: float
) -> BoundingBox3D:
    """Pose of a rigid object at time t between two keyframe boxes."""
    if box_a.instance_id != box_b.instance_id:
        raise DataError(
            f"cannot interpolate boxes of instances "
            f"{box_a.instance_id} and {box_b.instance_id}"
        )
    if not (box_a.timestamp <= t <= box_b.timestamp):
        raise DataError(
            f"time {t} outside [{box_a.timestamp}, {box_b.timestamp}]"
        )
    span = box_b.timestamp - box_a.timestamp
    alpha = 0.0 if span == 0 else (t - box_a.timestamp) / span
    pose = interpolate_pose(
        RigidTransform(box_a.rotation, box_a.center),
        RigidTransform(box_b.rotation, box_b.center),
        alpha,
    )
    return BoundingBox3D(
        center=pose.translation,
        dimensions=box_a.dimensions,
        rotation=pose.rotation,
        instance_id=box_a.instance_id,
        timestamp=t,
    )


def move_points_between_boxes(
    points: np.ndarray, box_src: BoundingBox3D, box_dst: BoundingBox3D
) -> np.ndarray:
    """Re-express (M, 3) points rigidly attached to box_src through box_dst."""
    local = box_src.to_local(points)
    return local @ box_dst.rotation.T + box_dst.center


def compensate_moving_point(
    p: Union[LidarPoint, np.ndarray],
    box_src: BoundingBox3D,
    box_dst: BoundingBox3D,
    tol: float = 1e-6,
) -> np.ndarray:
    """Map a point riding on a moving object from one box pose to another."""
    pos = p.position if isinstance(p, LidarPoint) else _as_vec3(p)
    if not box_src.contains(pos, tol=tol):
        raise DataError("point lies outside the source bounding box")
    return move_points_between_boxes(pos[None, :], box_src, box_dst)[0]


def yaw_rotation(yaw: float) -> np.ndarray:
    """Rotation about world z by ``yaw`` radians (x toward y positive)."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
