"""Regular SDF grids and isosurface extraction."""

import json
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from skimage import measure

from flowshape.geometry.mesh import TriMesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SdfGrid:
    """Signed distances sampled at the nodes of a regular grid.

    ``values`` is flat, x-fastest: node (i, j, k) lives at ``i + nx * (j + ny * k)``.
    """
    resolution: tuple
    bounds: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=np.float64).reshape(2, 3))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float32).reshape(-1))
        if self.values.size != int(np.prod(self.resolution)):
            raise ValueError(f"Grid expects {int(np.prod(self.resolution))} values, got {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Grid values must be finite")

    @staticmethod
    def node_positions(resolution: Sequence[int], bounds: np.ndarray) -> np.ndarray:
        """(N, 3) node coordinates in x-fastest order."""
        bounds = np.asarray(bounds, dtype=np.float64).reshape(2, 3)
        axes = [np.linspace(bounds[0, a], bounds[1, a], int(resolution[a])) for a in range(3)]
        zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=-1)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], resolution: Sequence[int],
                      bounds: np.ndarray, batch: int = 65536) -> "SdfGrid":
        nodes = cls.node_positions(resolution, bounds)
        values = np.concatenate([np.asarray(fn(nodes[i:i + batch])).reshape(-1)
                                 for i in range(0, len(nodes), batch)])
        return cls(resolution, bounds, values)

    @property
    def spacing(self) -> np.ndarray:
        return (self.bounds[1] - self.bounds[0]) / (np.asarray(self.resolution) - 1)

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))

    def volume(self) -> np.ndarray:
        """Values as a (nx, ny, nz) array."""
        nx, ny, nz = self.resolution
        return self.values.reshape(nz, ny, nx).transpose(2, 1, 0)

    def save(self, path: str) -> None:
        """Write ``<path>`` (little-endian f32, x-fastest) plus ``<path>.json``."""
        self.values.astype("<f4").tofile(path)
        with open(path + ".json", "w") as file:
            json.dump({'resolution': list(self.resolution), 'bounds': self.bounds.tolist(),
                       'dtype': 'float32-le', 'order': 'x-fastest'}, file, indent=2)

    @classmethod
    def load(cls, path: str) -> "SdfGrid":
        with open(path + ".json", "r") as file:
            meta = json.load(file)
        return cls(meta['resolution'], np.array(meta['bounds']), np.fromfile(path, dtype="<f4"))


def marching_cubes(grid: SdfGrid, iso: float = 0.0) -> TriMesh:
    """Extract the ``iso`` level set of a grid as a triangle mesh.

    Uses the classic 256-case Lorensen table with linear edge interpolation.
    Faces are wound so that normals point towards increasing values (outward for an SDF).

    Args:
        grid (SdfGrid): Grid with at least 2 nodes per axis
        iso (float): Level to extract
    Returns:
        TriMesh: Extracted surface, empty when the level is never crossed
    """
    if min(grid.resolution) < 2:
        raise ValueError(f"Grid needs at least 2 nodes per axis, got {grid.resolution}")
    volume = grid.volume()
    if volume.min() >= iso or volume.max() <= iso:
        log.warning("No sign change at level %s in grid of resolution %s: returning empty mesh",
                    iso, grid.resolution)
        return TriMesh.empty()
    verts, faces, _, _ = measure.marching_cubes(volume.astype(np.float64), level=iso, spacing=tuple(grid.spacing),
                                                gradient_direction="ascent", method="lorensen",
                                                allow_degenerate=False)
    return TriMesh(verts + grid.bounds[0], faces).drop_degenerate_faces()
