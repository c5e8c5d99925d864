"""Simulated captures and their on-disk recording layout.

Layout of a recording directory::

    frames/000000.pgm ...   8-bit binary PGM per frame
    cameras.json            intrinsics + world-from-camera quaternion (x, y, z, w) and translation
    points.bin              little-endian float32 xyz triplets
    visibility.json         per-frame point indices
    instances.json          boxes, point indices and captions
    scene.json              ground-truth shapes and point labels (oracle only)
    gt/<id>.obj             ground-truth meshes (oracle only)
"""

import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from PIL import Image

from flowshape.common.utils import read_json, write_json
from flowshape.exceptions import MissingAssetError
from flowshape.geometry.mesh import load_obj, save_obj
from flowshape.geometry.sdf import mesh_shape
from flowshape.synthworld.camera import Camera, CameraFrame, TrajectoryConfig, generate_trajectory
from flowshape.synthworld.oracles import JitterConfig, ObjectInstance, detect_instances_oracle
from flowshape.synthworld.render import RenderConfig, RenderedView, render_frame
from flowshape.synthworld.scene import SceneSpec
from flowshape.synthworld.slam import PointCloudTrack, SlamConfig, simulate_slam_points

log = logging.getLogger(__name__)

RECORDING_FILES = ("cameras.json", "points.bin", "visibility.json", "instances.json")


@dataclass
class Recording:
    frames: List[CameraFrame]
    track: PointCloudTrack
    instances: List[ObjectInstance]
    scene: Optional[SceneSpec] = None
    # rendered depth and ids, only present for in-memory captures
    views: List[RenderedView] = field(default_factory=list)


def simulate_capture(scene: SceneSpec, trajectory_config: TrajectoryConfig = None, slam_config: SlamConfig = None,
                     jitter_config: JitterConfig = None, render_config: RenderConfig = None,
                     seed: int = 0) -> Recording:
    """Trajectory, rendering, SLAM points and oracle detections for one scene."""
    trajectory = generate_trajectory(scene.center(), trajectory_config or TrajectoryConfig(), seed)
    views = [render_frame(scene, cam, k, render_config) for k, cam in enumerate(trajectory)]
    track = simulate_slam_points(scene, trajectory, slam_config, views=views)
    instances = detect_instances_oracle(scene, track, jitter_config, seed) if len(track) else []
    return Recording([v.frame for v in views], track, instances, scene, views)


def save_recording(recording: Recording, root: str, gt_resolution: int = 64) -> None:
    os.makedirs(os.path.join(root, "frames"), exist_ok=True)
    cameras = []
    for frame in recording.frames:
        pixels = np.round(np.clip(frame.image, 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(pixels).save(os.path.join(root, "frames", f"{frame.frame_id:06d}.pgm"))
        cameras.append({'frame_id': frame.frame_id, **frame.camera.to_dict()})
    write_json(os.path.join(root, "cameras.json"), cameras)

    recording.track.points.astype("<f4").tofile(os.path.join(root, "points.bin"))
    write_json(os.path.join(root, "visibility.json"), [v.tolist() for v in recording.track.visibility])
    write_json(os.path.join(root, "instances.json"), [inst.to_dict() for inst in recording.instances])

    if recording.scene is not None:
        scene_data = recording.scene.to_dict()
        scene_data['point_object_ids'] = recording.track.object_ids.tolist()
        write_json(os.path.join(root, "scene.json"), scene_data)
        os.makedirs(os.path.join(root, "gt"), exist_ok=True)
        for obj in recording.scene.objects:
            save_obj(mesh_shape(obj.shape, gt_resolution), os.path.join(root, "gt", f"{obj.object_id}.obj"))
    log.debug("Saved recording with %d frames and %d points to %s", len(recording.frames),
              len(recording.track), root)


def load_recording(root: str) -> Recording:
    """Read a recording directory.

    Raises:
        MissingAssetError: A required file is absent
    """
    for name in RECORDING_FILES:
        if not os.path.isfile(os.path.join(root, name)):
            raise MissingAssetError(f"Recording {root} has no {name}")
    frames = []
    for entry in read_json(os.path.join(root, "cameras.json")):
        path = os.path.join(root, "frames", f"{entry['frame_id']:06d}.pgm")
        try:
            with Image.open(path) as img:
                image = np.asarray(img, dtype=np.float64) / 255.0
        except FileNotFoundError as err:
            raise MissingAssetError(f"Frame image {path} is missing") from err
        frames.append(CameraFrame(int(entry['frame_id']), Camera.from_dict(entry), image))

    points = np.fromfile(os.path.join(root, "points.bin"), dtype="<f4").astype(np.float64).reshape(-1, 3)
    visibility = [np.asarray(v, dtype=np.int64) for v in read_json(os.path.join(root, "visibility.json"))]
    instances = [ObjectInstance.from_dict(d) for d in read_json(os.path.join(root, "instances.json"))]

    scene, labels = None, np.full(len(points), -1, dtype=np.int64)
    scene_path = os.path.join(root, "scene.json")
    if os.path.isfile(scene_path):
        scene_data = read_json(scene_path)
        scene = SceneSpec.from_dict(scene_data)
        labels = np.asarray(scene_data.get('point_object_ids', labels), dtype=np.int64)
    return Recording(frames, PointCloudTrack(points, visibility, labels), instances, scene)


def load_gt_mesh(root: str, object_id: int):
    path = os.path.join(root, "gt", f"{object_id}.obj")
    if not os.path.isfile(path):
        raise MissingAssetError(f"No ground-truth mesh for object {object_id} in {root}")
    return load_obj(path)
