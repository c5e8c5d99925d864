"""Normalization of object geometry into the [-1, 1]^3 cube and back to meters.

The transform is an isotropic scale plus translation, no rotation:
``ndc = (x - center) / scale`` and ``x = center + scale * ndc``.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from flowshape.exceptions import DegenerateInputError
from flowshape.geometry.mesh import TriMesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NdcTransform:
    center: Tuple[float, float, float]
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"NDC scale must be positive, got {self.scale}")

    @classmethod
    def identity(cls) -> "NdcTransform":
        return cls((0.0, 0.0, 0.0), 1.0)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Metric points to NDC."""
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.center)) / self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        """NDC points to metric."""
        return np.asarray(self.center) + self.scale * np.asarray(points, dtype=np.float64)

    def to_dict(self) -> dict:
        return {'center': list(self.center), 'scale': self.scale}

    @classmethod
    def from_dict(cls, data: dict) -> "NdcTransform":
        return cls(tuple(float(c) for c in data['center']), float(data['scale']))


def normalize_to_ndc(points: np.ndarray) -> Tuple[np.ndarray, NdcTransform]:
    """Fit points into [-1, 1]^3 with their longest bbox axis touching +/-1.

    Args:
        points (np.ndarray): (N, 3) metric points
    Returns:
        tuple: NDC points and the transform that produced them
    Raises:
        DegenerateInputError: All points coincide (or fewer than one point)
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise DegenerateInputError("Cannot normalize an empty point set")
    lo, hi = points.min(axis=0), points.max(axis=0)
    half = 0.5 * float((hi - lo).max())
    if half <= 0.0:
        raise DegenerateInputError("Cannot normalize coincident points")
    center = 0.5 * (lo + hi)
    transform = NdcTransform(tuple(float(c) for c in center), half)
    return transform.apply(points), transform


def normalize_mesh(mesh: TriMesh, transform: NdcTransform) -> TriMesh:
    return TriMesh(transform.apply(mesh.vertices), mesh.faces)


def rescale_mesh(mesh: TriMesh, transform: NdcTransform) -> TriMesh:
    """Map an NDC mesh back to metric coordinates, topology unchanged."""
    return TriMesh(transform.invert(mesh.vertices), mesh.faces)
