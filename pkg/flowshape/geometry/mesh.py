"""Indexed triangle meshes and their OBJ exchange format."""

import logging
from dataclasses import dataclass

import numpy as np
import trimesh

from flowshape.exceptions import EmptyMeshError

log = logging.getLogger(__name__)

# Faces whose area is below this are treated as degenerate
MIN_FACE_AREA = 1e-14


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle surface.

    Args:
        vertices (np.ndarray): (V, 3) float64 positions in meters (or NDC units)
        faces (np.ndarray): (F, 3) int64 vertex indices
    """
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def from_trimesh(cls, mesh: trimesh.Trimesh) -> "TriMesh":
        return cls(np.asarray(mesh.vertices), np.asarray(mesh.faces))

    def to_trimesh(self) -> trimesh.Trimesh:
        # process=False keeps vertex order, which determinism relies on
        return trimesh.Trimesh(vertices=self.vertices, faces=self.faces, process=False)

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def _cross(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    @property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    @property
    def face_normals(self) -> np.ndarray:
        cross = self._cross()
        norm = np.linalg.norm(cross, axis=1, keepdims=True)
        return cross / np.where(norm > 0, norm, 1.0)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    def bounds(self) -> np.ndarray:
        """(2, 3) array of bbox min and max."""
        if len(self.vertices) == 0:
            raise EmptyMeshError("Empty mesh has no bounds")
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def validate(self) -> None:
        """Check index range and face non-degeneracy.

        Raises:
            ValueError: An invariant of the mesh is violated
        """
        if len(self.faces) == 0:
            return
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise ValueError("Face index out of range")
        if np.any(self.face_areas <= MIN_FACE_AREA):
            raise ValueError("Mesh has degenerate faces")

    def drop_degenerate_faces(self) -> "TriMesh":
        keep = self.face_areas > MIN_FACE_AREA
        if not np.all(keep):
            log.debug("Dropping %d degenerate faces", int((~keep).sum()))
        return TriMesh(self.vertices, self.faces[keep])

    def transformed(self, scale: float, offset: np.ndarray) -> "TriMesh":
        return TriMesh(np.asarray(offset, dtype=np.float64) + scale * self.vertices, self.faces)


def concatenate(meshes: list) -> TriMesh:
    """Union of meshes as a single vertex/face soup (no boolean ops)."""
    vertices, faces, base = [], [], 0
    for mesh in meshes:
        vertices.append(mesh.vertices)
        faces.append(mesh.faces + base)
        base += len(mesh.vertices)
    if not vertices:
        return TriMesh.empty()
    return TriMesh(np.concatenate(vertices), np.concatenate(faces))


def save_obj(mesh: TriMesh, path: str) -> None:
    """Write an ASCII OBJ with v/f records only."""
    with open(path, "w") as file:
        for v in mesh.vertices:
            file.write("v {} {} {}\n".format(repr(float(v[0])), repr(float(v[1])), repr(float(v[2]))))
        for f in mesh.faces + 1:
            file.write("f {} {} {}\n".format(*f))


def load_obj(path: str) -> TriMesh:
    """Read the v/f records of an OBJ file, keeping vertex order.

    Face entries of the form ``i/t/n`` are reduced to the vertex index.
    """
    vertices, faces = [], []
    with open(path, "r") as file:
        for line in file:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                # fan-triangulate polygons
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not faces:
        return TriMesh(np.array(vertices).reshape(-1, 3), np.zeros((0, 3), dtype=np.int64))
    return TriMesh(np.array(vertices), np.array(faces))
