"""Procedural scenes of primitive objects resting on a floor (z-up, floor at z=0)."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from flowshape.common.utils import make_rng
from flowshape.exceptions import ConfigError, PlacementError
from flowshape.geometry.sdf import PRIMITIVE_KINDS, ShapeSpec, sdf_eval, union_of, yaw_rotation

log = logging.getLogger(__name__)


@dataclass
class SceneConfig:
    min_objects: int = 1
    max_objects: int = 3
    # relative weights of the primitive families
    primitive_mix: Dict[str, float] = field(default_factory=lambda: {
        "box": 1.0, "sphere": 1.0, "cylinder": 1.0, "superquadric": 1.0, "union": 0.0})
    # half size range of a primitive, meters
    size_range: Tuple[float, float] = (0.08, 0.3)
    arena_half_size: float = 0.9
    clearance: float = 0.03
    max_retries: int = 200

    def validate(self) -> None:
        if not 1 <= self.min_objects <= self.max_objects:
            raise ConfigError(f"Invalid object count range [{self.min_objects}, {self.max_objects}]")
        unknown = set(self.primitive_mix) - set(PRIMITIVE_KINDS)
        if unknown:
            raise ConfigError(f"Unknown primitive kinds in mix: {sorted(unknown)}")
        if sum(self.primitive_mix.values()) <= 0:
            raise ConfigError("Primitive mix has no positive weight")
        if not 0 < self.size_range[0] <= self.size_range[1]:
            raise ConfigError(f"Invalid size range {self.size_range}")


@dataclass(frozen=True)
class SceneObject:
    object_id: int
    shape: ShapeSpec


@dataclass(frozen=True)
class SceneSpec:
    objects: Tuple[SceneObject, ...]
    seed: int
    floor_height: float = 0.0

    def object(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(f"No object with id {object_id} in scene {self.seed}")

    def sdf(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Scene distance and index of the closest object for each point."""
        dists = np.stack([sdf_eval(obj.shape, x) for obj in self.objects])
        nearest = np.argmin(dists, axis=0)
        return dists[nearest, np.arange(dists.shape[1])], nearest

    def center(self) -> np.ndarray:
        bounds = np.stack([obj.shape.bounds() for obj in self.objects])
        return 0.5 * (bounds[:, 0].min(axis=0) + bounds[:, 1].max(axis=0))

    def to_dict(self) -> dict:
        return {'seed': self.seed, 'floor_height': self.floor_height,
                'objects': [{'id': o.object_id, 'shape': o.shape.to_dict()} for o in self.objects]}

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        objects = tuple(SceneObject(int(o['id']), ShapeSpec.from_dict(o['shape'])) for o in data['objects'])
        return cls(objects, int(data['seed']), float(data.get('floor_height', 0.0)))


def random_primitive(kind: str, rng: np.random.Generator, size_range: Tuple[float, float]) -> ShapeSpec:
    """Random primitive of the given family at the origin, yawed unless it is a sphere."""
    lo, hi = size_range
    if kind == "box":
        spec = ShapeSpec("box", tuple(rng.uniform(lo, hi, 3)))
    elif kind == "sphere":
        spec = ShapeSpec("sphere", (rng.uniform(lo, hi),))
    elif kind == "cylinder":
        spec = ShapeSpec("cylinder", (rng.uniform(lo, hi), rng.uniform(lo, hi)))
    elif kind == "superquadric":
        spec = ShapeSpec("superquadric", tuple(rng.uniform(lo, hi, 3)) + tuple(rng.uniform(0.4, 1.0, 2)))
    else:
        # base block with a smaller primitive stacked on top
        base = random_primitive("box", rng, size_range)
        top_kind = ("sphere", "cylinder", "box")[int(rng.integers(0, 3))]
        top = random_primitive(top_kind, rng, (lo, max(lo, 0.6 * hi)))
        lift = base.params[2] + top.local_half_extents()[2]
        spec = union_of([base, top.with_pose(np.eye(3), (0.0, 0.0, lift))])
    if kind != "sphere":
        spec = spec.with_pose(yaw_rotation(rng.uniform(0.0, 2.0 * np.pi)), (0.0, 0.0, 0.0))
    return spec


def _overlaps(a: np.ndarray, b: np.ndarray, clearance: float) -> bool:
    return bool(np.all(a[0] - clearance < b[1]) and np.all(b[0] - clearance < a[1]))


def generate_scene(seed: int, config: SceneConfig = None) -> SceneSpec:
    """Place a random number of primitives on the floor without collisions.

    Objects are rejected while their axis-aligned bounds (grown by the clearance)
    intersect an already placed object, which rules out interpenetration.

    Raises:
        PlacementError: An object could not be placed within ``max_retries`` draws
    """
    config = config or SceneConfig()
    config.validate()
    rng = make_rng(seed)
    kinds = sorted(config.primitive_mix)
    weights = np.array([config.primitive_mix[k] for k in kinds], dtype=np.float64)
    n_objects = int(rng.integers(config.min_objects, config.max_objects + 1))

    objects, placed_bounds = [], []
    for object_id in range(n_objects):
        kind = kinds[int(rng.choice(len(kinds), p=weights / weights.sum()))]
        shape = random_primitive(kind, rng, tuple(config.size_range))
        for _ in range(config.max_retries):
            xy = rng.uniform(-config.arena_half_size, config.arena_half_size, 2)
            lift = -shape.bounds()[0, 2]
            candidate = shape.with_pose(shape.R, (xy[0], xy[1], lift))
            bounds = candidate.bounds()
            if not any(_overlaps(bounds, other, config.clearance) for other in placed_bounds):
                break
        else:
            raise PlacementError(f"Could not place object {object_id} of scene seed {seed} "
                                 f"after {config.max_retries} retries")
        candidate.validate()
        objects.append(SceneObject(object_id, candidate))
        placed_bounds.append(bounds)

    log.debug("Generated scene %d with %d objects", seed, len(objects))
    return SceneSpec(tuple(objects), int(seed))
