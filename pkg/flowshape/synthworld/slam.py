"""Semi-dense point simulation: high-gradient pixels back-projected through oracle depth."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage

from flowshape.common.utils import make_rng
from flowshape.exceptions import ConfigError
from flowshape.synthworld.camera import Camera
from flowshape.synthworld.render import RenderConfig, RenderedView, render_frame
from flowshape.synthworld.scene import SceneSpec

log = logging.getLogger(__name__)


@dataclass
class SlamConfig:
    # per-frame quantile of the Sobel magnitude a pixel must reach
    gradient_quantile: float = 0.8
    max_points_per_frame: int = 96
    # isotropic point noise, meters
    noise_sigma: float = 0.005
    # |projected depth - rendered depth| allowed for a point to count as visible
    depth_tolerance: float = 0.03
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.gradient_quantile < 1.0:
            raise ConfigError(f"gradient_quantile must be in [0, 1), got {self.gradient_quantile}")
        if self.noise_sigma < 0 or self.depth_tolerance <= 0:
            raise ConfigError("noise_sigma must be >= 0 and depth_tolerance > 0")


@dataclass
class PointCloudTrack:
    points: np.ndarray
    # frame k -> sorted indices of the points observed in frame k
    visibility: List[np.ndarray]
    # oracle label of each point, hidden from the model
    object_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_frames(self) -> int:
        return len(self.visibility)

    def validate(self) -> None:
        seen = np.zeros(len(self.points), dtype=bool)
        for indices in self.visibility:
            if len(indices) and (indices.min() < 0 or indices.max() >= len(self.points)):
                raise IndexError("Visibility index out of range")
            seen[indices] = True
        if not np.all(seen):
            raise ValueError(f"{int((~seen).sum())} points are not visible in any frame")

    def visible_in(self, frame: int, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """Points of ``indices`` (default all) observed in ``frame``."""
        visible = self.visibility[frame]
        return visible if indices is None else np.intersect1d(visible, indices)

    @classmethod
    def empty(cls, n_frames: int) -> "PointCloudTrack":
        return cls(np.zeros((0, 3)), [np.zeros(0, dtype=np.int64) for _ in range(n_frames)],
                   np.zeros(0, dtype=np.int64))


def compute_visibility(points: np.ndarray, views: Sequence[RenderedView], depth_tolerance: float) -> List[np.ndarray]:
    """Frames where each point projects in bounds and agrees with the rendered depth."""
    visibility = []
    for view in views:
        row, col, inside = view.frame.camera.pixel_of(points)
        _, z = view.frame.camera.project(points)
        ok = np.zeros(len(points), dtype=bool)
        idx = np.flatnonzero(inside)
        ok[idx] = np.abs(view.depth[row[idx], col[idx]] - z[idx]) < depth_tolerance
        visibility.append(np.flatnonzero(ok))
    return visibility


def _frame_candidates(view: RenderedView, quantile: float) -> np.ndarray:
    image = view.frame.image
    magnitude = np.hypot(ndimage.sobel(image, axis=0), ndimage.sobel(image, axis=1))
    surface = np.isfinite(view.depth)
    if not np.any(surface):
        return np.zeros(0, dtype=np.int64)
    threshold = np.quantile(magnitude[surface], quantile)
    return np.flatnonzero((surface & (magnitude >= threshold) & (magnitude > 0)).ravel())


def simulate_slam_points(scene: SceneSpec, trajectory: Sequence[Camera], config: SlamConfig = None,
                         views: Optional[Sequence[RenderedView]] = None,
                         render_config: RenderConfig = None) -> PointCloudTrack:
    """Simulate a semi-dense SLAM point cloud along a trajectory.

    Args:
        scene (SceneSpec): Scene being observed
        trajectory (list): Cameras, at least two
        config (SlamConfig): Selection and noise parameters
        views (list): Already rendered views of the trajectory, rendered here if omitted
        render_config (RenderConfig): Used when views are rendered here
    Returns:
        PointCloudTrack: Noisy points, per-frame visibility and oracle object ids
    """
    config = config or SlamConfig()
    config.validate()
    if len(trajectory) < 2:
        raise ValueError(f"SLAM simulation needs at least 2 frames, got {len(trajectory)}")
    if views is None:
        views = [render_frame(scene, cam, k, render_config) for k, cam in enumerate(trajectory)]

    rng = make_rng(scene.seed, 5, config.seed)
    points, labels = [], []
    for view in views:
        candidates = _frame_candidates(view, config.gradient_quantile)
        if len(candidates) == 0:
            continue
        take = min(config.max_points_per_frame, len(candidates))
        chosen = np.sort(rng.choice(candidates, size=take, replace=False))
        rows, cols = np.divmod(chosen, view.depth.shape[1])
        depth = view.depth[rows, cols]
        points.append(view.frame.camera.backproject(rows.astype(np.float64), cols.astype(np.float64), depth))
        labels.append(view.object_ids[rows, cols])

    if not points:
        log.warning("No pixel passed the gradient test in scene %d: returning an empty track", scene.seed)
        return PointCloudTrack.empty(len(views))

    points = np.concatenate(points)
    labels = np.concatenate(labels)
    if config.noise_sigma > 0:
        points = points + rng.normal(0.0, config.noise_sigma, points.shape)

    visibility = compute_visibility(points, views, config.depth_tolerance)
    seen = np.zeros(len(points), dtype=bool)
    for indices in visibility:
        seen[indices] = True
    if not np.all(seen):
        log.debug("Dropping %d points that failed the visibility test", int((~seen).sum()))
        remap = np.cumsum(seen) - 1
        points, labels = points[seen], labels[seen]
        visibility = [remap[indices[seen[indices]]] for indices in visibility]

    return PointCloudTrack(points, visibility, labels.astype(np.int64))
