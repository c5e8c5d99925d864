"""Plücker ray coordinates ``(dir, origin x dir)`` for camera pixels and image patches."""

from typing import Optional

import numpy as np
import torch

from flowshape.synthworld.camera import Camera


def plucker_coords(origins: torch.Tensor, directions: torch.Tensor) -> torch.Tensor:
    """(..., 6) Plücker coordinates of rays; directions are normalized first."""
    directions = torch.nn.functional.normalize(directions, dim=-1)
    moment = torch.cross(origins.expand_as(directions), directions, dim=-1)
    return torch.cat([directions, moment], dim=-1)


def plucker_from_pixels(camera: Camera, rows: np.ndarray, cols: np.ndarray,
                        origin: Optional[np.ndarray] = None) -> torch.Tensor:
    """Plücker coordinates of the rays through pixel coordinates.

    Args:
        camera (Camera): Camera whose rotation gives the ray directions
        rows, cols (np.ndarray): Pixel coordinates
        origin (np.ndarray): Ray origin, default the camera center
    """
    dirs = camera.ray_directions(np.asarray(rows, dtype=np.float64), np.asarray(cols, dtype=np.float64))
    origin = camera.center if origin is None else np.asarray(origin, dtype=np.float64)
    return plucker_coords(torch.as_tensor(origin).reshape(1, 3), torch.as_tensor(dirs).reshape(-1, 3))


def patch_centers(size: int, patch: int) -> np.ndarray:
    """Pixel coordinates of the centers of consecutive ``patch``-wide cells."""
    return np.arange(size // patch) * patch + 0.5 * (patch - 1)


def plucker_encode(camera: Camera, patch: int, origin: Optional[np.ndarray] = None) -> torch.Tensor:
    """Per-patch Plücker features, shape (rows * cols, 6) in row-major patch order."""
    k = camera.intrinsics
    rows, cols = np.meshgrid(patch_centers(k.height, patch), patch_centers(k.width, patch), indexing="ij")
    return plucker_from_pixels(camera, rows.ravel(), cols.ravel(), origin)
