"""Seeded point sampling on mesh surfaces and sharp edges."""

import logging
from dataclasses import dataclass

import numpy as np
import trimesh

from flowshape.common.utils import make_rng
from flowshape.exceptions import EmptyMeshError
from flowshape.geometry.mesh import TriMesh

log = logging.getLogger(__name__)

DEFAULT_DIHEDRAL_THRESH = float(np.deg2rad(20.0))


@dataclass(frozen=True)
class SurfaceSamples:
    points: np.ndarray
    normals: np.ndarray
    # True when no edge passed the dihedral threshold and surface sampling was used
    fallback: bool = False


def _require_faces(mesh: TriMesh, n: int) -> None:
    if mesh.is_empty:
        raise EmptyMeshError("Cannot sample points on an empty mesh")
    if n < 1:
        raise ValueError(f"Sample count must be >= 1, got {n}")


def sample_surface_uniform(mesh: TriMesh, n: int, seed: int) -> SurfaceSamples:
    """Area-weighted uniform samples on the mesh surface.

    Args:
        mesh (TriMesh): Non-empty mesh
        n (int): Number of points
        seed (int): Sampling seed, output is a pure function of (mesh, n, seed)
    Returns:
        SurfaceSamples: Points with the normals of the faces they lie on
    """
    _require_faces(mesh, n)
    tm = mesh.to_trimesh()
    points, face_index = trimesh.sample.sample_surface(tm, n, seed=int(make_rng(seed).integers(0, 2**31 - 1)))
    return SurfaceSamples(np.asarray(points, dtype=np.float64), mesh.face_normals[face_index])


def sample_edge_salient(mesh: TriMesh, n: int, dihedral_thresh: float = DEFAULT_DIHEDRAL_THRESH,
                        seed: int = 0) -> SurfaceSamples:
    """Samples on edges whose adjacent faces bend more than ``dihedral_thresh``.

    Edges are chosen with probability proportional to their length; the normal
    of an edge point is the mean of its two face normals.
    Falls back to uniform surface samples (``fallback=True``) if no edge qualifies.
    """
    _require_faces(mesh, n)
    tm = mesh.to_trimesh()
    angles = np.asarray(tm.face_adjacency_angles)
    sharp = angles > dihedral_thresh
    if not np.any(sharp):
        log.debug("No edge above %.3f rad, falling back to surface sampling", dihedral_thresh)
        uniform = sample_surface_uniform(mesh, n, seed)
        return SurfaceSamples(uniform.points, uniform.normals, fallback=True)

    edges = np.asarray(tm.face_adjacency_edges)[sharp]
    pairs = np.asarray(tm.face_adjacency)[sharp]
    a, b = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    lengths = np.linalg.norm(b - a, axis=1)

    rng = make_rng(seed, 1)
    pick = rng.choice(len(edges), size=n, p=lengths / lengths.sum())
    u = rng.random((n, 1))
    points = a[pick] + u * (b[pick] - a[pick])

    face_normals = mesh.face_normals
    normals = face_normals[pairs[pick, 0]] + face_normals[pairs[pick, 1]]
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.where(norm > 1e-12, normals / np.maximum(norm, 1e-12), face_normals[pairs[pick, 0]])
    return SurfaceSamples(points, normals, fallback=False)
