"""Analytic primitive shapes and their signed distance functions.

Primitive parameters (all meters):

    box           (hx, hy, hz)           half extents
    sphere        (r,)                   radius
    cylinder      (r, h)                 radius and half height along local z
    superquadric  (a1, a2, a3, e1, e2)   radii and shape exponents
    union         ()                     min over ``children``

A pose maps local coordinates to the parent frame: ``x = R @ p + t``.
"""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import trimesh

from flowshape.exceptions import InvalidShapeSpecError
from flowshape.geometry.isosurface import SdfGrid, marching_cubes
from flowshape.geometry.mesh import TriMesh

log = logging.getLogger(__name__)

PRIMITIVE_KINDS = ("box", "sphere", "cylinder", "superquadric", "union")
PARAM_COUNTS = {"box": 3, "sphere": 1, "cylinder": 2, "superquadric": 5, "union": 0}

_IDENTITY = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def yaw_rotation(angle: float) -> Tuple[Tuple[float, ...], ...]:
    c, s = float(np.cos(angle)), float(np.sin(angle))
    return ((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0))


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    params: Tuple[float, ...] = ()
    rotation: Tuple[Tuple[float, ...], ...] = _IDENTITY
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    children: Tuple["ShapeSpec", ...] = field(default_factory=tuple)

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=np.float64)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    def validate(self) -> None:
        """Check kind, parameter positivity and pose orthonormality.

        Raises:
            InvalidShapeSpecError: Spec violates an invariant
        """
        if self.kind not in PRIMITIVE_KINDS:
            raise InvalidShapeSpecError(f"Unknown primitive kind \"{self.kind}\"")
        if len(self.params) != PARAM_COUNTS[self.kind]:
            raise InvalidShapeSpecError(
                f"{self.kind} expects {PARAM_COUNTS[self.kind]} parameters, got {len(self.params)}")
        if any(not p > 0 for p in self.params):
            raise InvalidShapeSpecError(f"{self.kind} parameters must be strictly positive: {self.params}")
        R = self.R
        if R.shape != (3, 3) or np.abs(R @ R.T - np.eye(3)).max() > 1e-6 or np.linalg.det(R) < 0:
            raise InvalidShapeSpecError("Pose rotation is not orthonormal")
        if self.kind == "union":
            if not self.children:
                raise InvalidShapeSpecError("Union needs at least one child")
            for child in self.children:
                child.validate()

    def with_pose(self, rotation, translation) -> "ShapeSpec":
        return ShapeSpec(self.kind, self.params, tuple(tuple(float(v) for v in row) for row in np.asarray(rotation)),
                         tuple(float(v) for v in translation), self.children)

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'params': list(self.params),
            'rotation': [list(row) for row in self.rotation],
            'translation': list(self.translation),
            'children': [c.to_dict() for c in self.children],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ShapeSpec":
        return cls(
            kind=data['kind'],
            params=tuple(float(p) for p in data['params']),
            rotation=tuple(tuple(float(v) for v in row) for row in data['rotation']),
            translation=tuple(float(v) for v in data['translation']),
            children=tuple(cls.from_dict(c) for c in data.get('children', [])),
        )

    def local_half_extents(self) -> np.ndarray:
        """Half extents of the axis-aligned box of the shape in its own frame."""
        p = self.params
        if self.kind == "box":
            return np.array(p, dtype=np.float64)
        if self.kind == "sphere":
            return np.full(3, p[0])
        if self.kind == "cylinder":
            return np.array([p[0], p[0], p[1]])
        if self.kind == "superquadric":
            return np.array(p[:3], dtype=np.float64)
        lo, hi = self._children_bounds()
        return np.maximum(np.abs(lo), np.abs(hi))

    def _children_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        bounds = np.stack([child.bounds() for child in self.children])
        return bounds[:, 0].min(axis=0), bounds[:, 1].max(axis=0)

    def bounds(self) -> np.ndarray:
        """(2, 3) axis-aligned bounds in the parent frame."""
        if self.kind == "union":
            lo, hi = self._children_bounds()
            corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        else:
            h = self.local_half_extents()
            corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]) * h
        world = corners @ self.R.T + self.t
        return np.stack([world.min(axis=0), world.max(axis=0)])


def _box_sdf(p: np.ndarray, half: np.ndarray) -> np.ndarray:
    q = np.abs(p) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def _cylinder_sdf(p: np.ndarray, radius: float, half_height: float) -> np.ndarray:
    d = np.stack([np.linalg.norm(p[:, :2], axis=-1) - radius, np.abs(p[:, 2]) - half_height], axis=-1)
    return np.minimum(d.max(axis=-1), 0.0) + np.linalg.norm(np.maximum(d, 0.0), axis=-1)


def _superquadric_sdf(p: np.ndarray, params: Tuple[float, ...]) -> np.ndarray:
    # Radial distance to the surface along the ray through the origin.
    a1, a2, a3, e1, e2 = params
    x, y, z = np.abs(p[:, 0]) / a1, np.abs(p[:, 1]) / a2, np.abs(p[:, 2]) / a3
    radius = np.linalg.norm(p, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (x ** (2.0 / e2) + y ** (2.0 / e2)) ** (e2 / e1) + z ** (2.0 / e1)
        d = radius * (1.0 - f ** (-e1 / 2.0))
    return np.where(radius > 1e-12, d, -min(a1, a2, a3))


def sdf_eval(spec: ShapeSpec, x: np.ndarray) -> np.ndarray:
    """Signed distance of points to a shape (negative inside).

    Args:
        spec (ShapeSpec): Shape, its pose maps local to query coordinates
        x (np.ndarray): (3,) or (N, 3) query points
    Returns:
        float or np.ndarray: Signed distances in meters
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x.reshape(-1, 3)
    local = (pts - spec.t) @ spec.R
    if spec.kind == "box":
        d = _box_sdf(local, np.asarray(spec.params))
    elif spec.kind == "sphere":
        d = np.linalg.norm(local, axis=-1) - spec.params[0]
    elif spec.kind == "cylinder":
        d = _cylinder_sdf(local, *spec.params)
    elif spec.kind == "superquadric":
        d = _superquadric_sdf(local, spec.params)
    else:
        d = np.min(np.stack([sdf_eval(child, local) for child in spec.children]), axis=0)
    return float(d[0]) if single else d


def mesh_shape(spec: ShapeSpec, resolution: int = 64) -> TriMesh:
    """Triangulate a shape in its parent frame.

    Box, sphere and cylinder use trimesh's exact primitives; superquadrics and
    unions are extracted from their SDF with marching cubes.
    """
    if spec.kind == "box":
        mesh = trimesh.creation.box(extents=2.0 * np.asarray(spec.params))
    elif spec.kind == "sphere":
        mesh = trimesh.creation.icosphere(subdivisions=3, radius=spec.params[0])
    elif spec.kind == "cylinder":
        mesh = trimesh.creation.cylinder(radius=spec.params[0], height=2.0 * spec.params[1], sections=48)
    else:
        lo, hi = spec.bounds()
        pad = 0.05 * float((hi - lo).max())
        grid = SdfGrid.from_function(lambda q: sdf_eval(spec, q), (resolution,) * 3,
                                     np.stack([lo - pad, hi + pad]))
        return marching_cubes(grid, 0.0)
    vertices = np.asarray(mesh.vertices) @ spec.R.T + spec.t
    return TriMesh(vertices, np.asarray(mesh.faces)).drop_degenerate_faces()


def union_of(children, rotation=None, translation=(0.0, 0.0, 0.0)) -> ShapeSpec:
    spec = ShapeSpec("union", (), _IDENTITY if rotation is None else rotation, tuple(translation), tuple(children))
    spec.validate()
    return spec


