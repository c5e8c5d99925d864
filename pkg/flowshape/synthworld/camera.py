"""Pinhole cameras (OpenCV convention: x right, y down, z forward) and capture trajectories."""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.spatial.transform import Rotation

from flowshape.common.utils import make_rng
from flowshape.exceptions import ConfigError, InvalidShapeSpecError

log = logging.getLogger(__name__)

WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    @classmethod
    def from_fov(cls, width: int = 64, height: int = 64, fov_deg: float = 60.0) -> "Intrinsics":
        f = 0.5 * width / np.tan(0.5 * np.deg2rad(fov_deg))
        return cls(float(f), float(f), width / 2.0, height / 2.0, int(width), int(height))

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy,
                'width': self.width, 'height': self.height}


@dataclass(frozen=True)
class Camera:
    """Intrinsics plus the world-from-camera pose ``x_world = R @ x_cam + t``."""
    intrinsics: Intrinsics
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def validate(self) -> None:
        k = self.intrinsics
        if not (k.fx > 0 and k.fy > 0 and k.width > 0 and k.height > 0):
            raise InvalidShapeSpecError(f"Invalid intrinsics {k}")
        R = np.asarray(self.rotation)
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6 or np.linalg.det(R) < 0:
            raise InvalidShapeSpecError("Camera rotation is not orthonormal")

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.center) @ np.asarray(self.rotation)

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (N, 2) and z-depth (N,) of world points."""
        cam = self.to_camera(points)
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.intrinsics.fx * cam[:, 0] / z + self.intrinsics.cx
            v = self.intrinsics.fy * cam[:, 1] / z + self.intrinsics.cy
        return np.stack([u, v], axis=1), z

    def pixel_of(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer pixel (row, col) of each point and whether it lands in the image in front of the camera."""
        uv, z = self.project(points)
        with np.errstate(invalid="ignore"):
            col = np.round(np.nan_to_num(uv[:, 0], nan=-1.0, posinf=-1.0, neginf=-1.0)).astype(np.int64)
            row = np.round(np.nan_to_num(uv[:, 1], nan=-1.0, posinf=-1.0, neginf=-1.0)).astype(np.int64)
        inside = (z > 1e-9) & (col >= 0) & (col < self.intrinsics.width) & (row >= 0) & (row < self.intrinsics.height)
        return row, col, inside

    def ray_directions(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Unit world-space directions of the rays through the given pixel centers."""
        k = self.intrinsics
        cam = np.stack([(cols - k.cx) / k.fx, (rows - k.cy) / k.fy, np.ones_like(cols, dtype=np.float64)], axis=-1)
        world = cam @ np.asarray(self.rotation).T
        return world / np.linalg.norm(world, axis=-1, keepdims=True)

    def pixel_rays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Origins and directions for every pixel, row-major."""
        k = self.intrinsics
        rows, cols = np.meshgrid(np.arange(k.height, dtype=np.float64), np.arange(k.width, dtype=np.float64),
                                 indexing="ij")
        dirs = self.ray_directions(rows.ravel(), cols.ravel())
        return np.broadcast_to(self.center, dirs.shape).copy(), dirs

    def backproject(self, rows: np.ndarray, cols: np.ndarray, depth: np.ndarray) -> np.ndarray:
        k = self.intrinsics
        cam = np.stack([(cols - k.cx) / k.fx * depth, (rows - k.cy) / k.fy * depth, depth], axis=-1)
        return cam @ np.asarray(self.rotation).T + self.center

    def to_dict(self) -> dict:
        # scipy quaternions are scalar-last (x, y, z, w)
        quat = Rotation.from_matrix(np.asarray(self.rotation)).as_quat()
        return {'intrinsics': self.intrinsics.to_dict(), 'quaternion_xyzw': [float(q) for q in quat],
                'translation': [float(v) for v in self.translation]}

    @classmethod
    def from_dict(cls, data: dict) -> "Camera":
        k = data['intrinsics']
        intrinsics = Intrinsics(float(k['fx']), float(k['fy']), float(k['cx']), float(k['cy']),
                                int(k['width']), int(k['height']))
        rotation = Rotation.from_quat(np.asarray(data['quaternion_xyzw'], dtype=np.float64)).as_matrix()
        return cls(intrinsics, rotation, np.asarray(data['translation'], dtype=np.float64))


@dataclass
class CameraFrame:
    frame_id: int
    camera: Camera
    # (H, W) intensities in [0, 1]
    image: np.ndarray


def look_at(eye: np.ndarray, target: np.ndarray, intrinsics: Intrinsics, up: np.ndarray = WORLD_UP) -> Camera:
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return Camera(intrinsics, np.stack([right, down, forward], axis=1), eye)


@dataclass
class TrajectoryConfig:
    n_frames: int = 24
    # "orbit" circles the scene, "casual" is a smoothed random walk
    mode: str = "casual"
    radius: float = 2.0
    eye_height: float = 1.2
    # scales walk and look-at noise in casual mode
    casualness: float = 1.0
    look_jitter: float = 0.08
    # fraction of a full circle covered by the walk
    arc: float = 0.75
    width: int = 64
    height: int = 64
    fov_deg: float = 60.0

    def validate(self) -> None:
        if self.n_frames < 2:
            raise ConfigError(f"A trajectory needs at least 2 frames, got {self.n_frames}")
        if self.mode not in ("orbit", "casual"):
            raise ConfigError(f"Unknown trajectory mode \"{self.mode}\"")


def generate_trajectory(center: np.ndarray, config: TrajectoryConfig, seed: int) -> List[Camera]:
    """Cameras around ``center`` at eye height, looking at the scene.

    Args:
        center (np.ndarray): Point the cameras look at
        config (TrajectoryConfig): Trajectory shape
        seed (int): Seed of the random walk
    Returns:
        list: One Camera per frame
    """
    config.validate()
    rng = make_rng(seed, 3)
    intrinsics = Intrinsics.from_fov(config.width, config.height, config.fov_deg)
    n = config.n_frames
    start = rng.uniform(0.0, 2.0 * np.pi)
    center = np.asarray(center, dtype=np.float64)

    if config.mode == "orbit":
        angles = start + 2.0 * np.pi * np.arange(n) / n
        radii = np.full(n, config.radius)
        heights = np.full(n, config.eye_height)
        targets = np.repeat(center[None], n, axis=0)
    else:
        noise = config.casualness
        steps = config.arc * 2.0 * np.pi / n * (1.0 + noise * rng.normal(0.0, 0.5, n))
        angles = start + np.cumsum(steps)
        radii = config.radius * (1.0 + noise * gaussian_filter1d(rng.normal(0.0, 0.15, n), 2.0))
        heights = config.eye_height + noise * gaussian_filter1d(rng.normal(0.0, 0.15, n), 2.0)
        targets = center + noise * gaussian_filter1d(rng.normal(0.0, config.look_jitter, (n, 3)), 1.5, axis=0)

    cameras = []
    for k in range(n):
        eye = center + np.array([radii[k] * np.cos(angles[k]), radii[k] * np.sin(angles[k]), 0.0])
        eye[2] = heights[k]
        cameras.append(look_at(eye, targets[k], intrinsics))
    log.debug("Generated %s trajectory with %d frames", config.mode, n)
    return cameras
