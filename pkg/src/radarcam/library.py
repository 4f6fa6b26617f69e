"""Built-in scene library.

Six canned scenes, each exercising one hazard of radar-camera depth fusion:

- ``empty-road``      flat ground only; the radar sweep is empty.
- ``occluded-radar``  a parked car hides a wall's lower band from the roof
                      camera while the grill radar still ranges the wall.
- ``tall-pole``       a 4 m pole produces returns well above the nominal
                      radar plane (beam-height error).
- ``crossing-mover``  a laterally crossing car: tangential velocity is
                      invisible to radar and backgrounds get occluded.
- ``approach-corridor`` driving toward a parked car: occlusions along the
                      motion direction have near-zero flow parallax.
- ``parked-row``      several parked cars at varying yaw beside the lane.

Scenes tagged ``occlusion`` guarantee at least one camera-occluded radar
return and are the set used by the occlusion-filter and completion
acceptance checks.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .geometry import (
    CAMERA_LIKE_ROTATION,
    BoundingBox3D,
    CameraModel,
    RigidTransform,
    yaw_rotation,
)
from .scene import ActorTrack, EgoTrack, LidarRig, RadarRig, RectPatch, Scene

N_FRAMES = 52
FRAME_DT = 0.1


def _rig_camera() -> CameraModel:
    return CameraModel(
        fx=320.0,
        fy=320.0,
        cx=200.0,
        cy=96.0,
        width=400,
        height=192,
        pose=RigidTransform(CAMERA_LIKE_ROTATION, [1.6, 0.0, 1.55]),
    )


def _rig_radar() -> RadarRig:
    return RadarRig(pose=RigidTransform(CAMERA_LIKE_ROTATION, [3.2, 0.0, 0.5]))


def _rig_lidar() -> LidarRig:
    return LidarRig(pose=RigidTransform(CAMERA_LIKE_ROTATION, [1.3, 0.0, 1.85]))


def _ground() -> RectPatch:
    return RectPatch(axis=2, offset=0.0, lo=[-5.0, -40.0], hi=[130.0, 40.0])


def _wall(x: float, half_width: float, height: float) -> BoundingBox3D:
    return BoundingBox3D(
        center=[x, 0.0, height / 2.0],
        dimensions=[0.4, 2.0 * half_width, height],
        rotation=np.eye(3),
        instance_id=0,
    )


def _parked_car(instance_id: int, x: float, y: float, yaw_deg: float = 0.0,
                size=(4.4, 1.8, 1.44)) -> ActorTrack:
    times = [0.0, (N_FRAMES - 1) * FRAME_DT]
    return ActorTrack(
        instance_id=instance_id,
        dimensions=list(size),
        times=times,
        centers=[[x, y, size[2] / 2.0]] * 2,
        yaws=[np.deg2rad(yaw_deg)] * 2,
    )


def _scene(name, seed, ego_speed, primitives, actors=(), tags=()) -> Scene:
    times = np.arange(N_FRAMES) * FRAME_DT
    end = float(times[-1])
    return Scene(
        name=name,
        camera=_rig_camera(),
        radar=_rig_radar(),
        lidar=_rig_lidar(),
        primitives=tuple(primitives),
        actors=tuple(actors),
        ego=EgoTrack(
            times=[0.0, end],
            positions=[[0.0, 0.0, 0.0], [ego_speed * end, 0.0, 0.0]],
            yaws=[0.0, 0.0],
        ),
        frame_times=times,
        rng_seed=seed,
        tags=tuple(tags),
    )


def empty_road() -> Scene:
    return _scene("empty-road", seed=1001, ego_speed=5.0, primitives=[_ground()])


def occluded_radar() -> Scene:
    # camera sits 0.1 m above the parked car's roof, so the wall's lower band
    # is hidden from the camera but not from the low radar
    return _scene(
        "occluded-radar",
        seed=1002,
        ego_speed=1.2,
        primitives=[_ground(), _wall(22.0, 14.0, 3.2)],
        actors=[_parked_car(1, 12.0, 0.3, 0.0, size=(4.5, 1.9, 1.45))],
        tags=("occlusion",),
    )


def tall_pole() -> Scene:
    pole = BoundingBox3D(
        center=[16.0, -1.0, 2.0],
        dimensions=[0.35, 0.35, 4.0],
        rotation=np.eye(3),
        instance_id=0,
    )
    return _scene(
        "tall-pole",
        seed=1003,
        ego_speed=4.0,
        primitives=[_ground(), pole, _wall(34.0, 10.0, 3.6)],
    )


def crossing_mover() -> Scene:
    end = (N_FRAMES - 1) * FRAME_DT
    speed = 3.1
    y0 = 2.98
    mover = ActorTrack(
        instance_id=1,
        dimensions=[4.4, 1.8, 1.5],
        times=[0.0, end],
        centers=[[13.0, y0, 0.75], [13.0, y0 - speed * end, 0.75]],
        yaws=[-np.pi / 2.0] * 2,
    )
    return _scene(
        "crossing-mover",
        seed=1004,
        ego_speed=2.0,
        primitives=[_ground(), _wall(30.0, 12.0, 3.4)],
        actors=[mover],
        tags=("occlusion",),
    )


def approach_corridor() -> Scene:
    left = BoundingBox3D(
        center=[35.0, 4.5, 1.5], dimensions=[80.0, 0.5, 3.0],
        rotation=np.eye(3), instance_id=0,
    )
    right = BoundingBox3D(
        center=[35.0, -4.5, 1.5], dimensions=[80.0, 0.5, 3.0],
        rotation=np.eye(3), instance_id=0,
    )
    return _scene(
        "approach-corridor",
        seed=1005,
        ego_speed=5.0,
        primitives=[_ground(), left, right, _wall(52.0, 4.2, 3.5)],
        actors=[_parked_car(1, 38.0, 1.3, 0.0, size=(4.4, 1.8, 1.4))],
        tags=("occlusion",),
    )


def parked_row() -> Scene:
    return _scene(
        "parked-row",
        seed=1006,
        ego_speed=6.0,
        primitives=[_ground(), _wall(36.0, 16.0, 3.6)],
        actors=[
            _parked_car(1, 14.0, -3.2, 4.0, size=(4.6, 1.9, 1.75)),
            _parked_car(2, 22.0, -3.1, -3.0, size=(4.4, 1.8, 1.5)),
            _parked_car(3, 30.0, -3.3, 2.0, size=(4.8, 1.9, 1.8)),
        ],
        tags=("occlusion",),
    )


SCENE_BUILDERS = {
    "empty-road": empty_road,
    "occluded-radar": occluded_radar,
    "tall-pole": tall_pole,
    "crossing-mover": crossing_mover,
    "approach-corridor": approach_corridor,
    "parked-row": parked_row,
}


def scene_names() -> list:
    return sorted(SCENE_BUILDERS)


def occlusion_scene_names() -> list:
    return [n for n in scene_names() if "occlusion" in SCENE_BUILDERS[n]().tags]


def build_scene(name: str) -> Scene:
    try:
        return SCENE_BUILDERS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown scene {name!r}; available: {', '.join(scene_names())}"
        ) from None
