"""Detection, captioning and point-mask oracles standing in for learned perception models.

Caption vocabulary (fixed, ids in this order)::

    <pad> <unk> a small medium large tall flat box sphere cylinder rounded block stacked shape

Size word from the largest full extent of the object: ``small`` below 0.3 m,
``medium`` below 0.6 m, ``large`` otherwise. ``tall`` is inserted when the
height exceeds 1.8 times the largest horizontal extent, ``flat`` when it is
below 0.45 times.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from flowshape.common.utils import make_rng
from flowshape.exceptions import ConfigError
from flowshape.geometry.sdf import ShapeSpec
from flowshape.synthworld.camera import Camera
from flowshape.synthworld.scene import SceneSpec
from flowshape.synthworld.slam import PointCloudTrack

log = logging.getLogger(__name__)

VOCABULARY = ("<pad>", "<unk>", "a", "small", "medium", "large", "tall", "flat",
              "box", "sphere", "cylinder", "rounded", "block", "stacked", "shape")
TOKEN_IDS = {word: i for i, word in enumerate(VOCABULARY)}
PAD_ID, UNK_ID = TOKEN_IDS["<pad>"], TOKEN_IDS["<unk>"]

PRIMITIVE_WORDS = {"box": "box", "sphere": "sphere", "cylinder": "cylinder",
                   "superquadric": "rounded block", "union": "stacked shape"}
SIZE_STEPS = ((0.3, "small"), (0.6, "medium"))


@dataclass(frozen=True)
class OrientedBox:
    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.center) @ self.rotation

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all(np.abs(self.to_local(points)) <= self.half_extents, axis=1)

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance to the box, zero inside."""
        excess = np.maximum(np.abs(self.to_local(points)) - self.half_extents, 0.0)
        return np.linalg.norm(excess, axis=1)

    def to_dict(self) -> dict:
        return {'center': self.center.tolist(), 'half_extents': self.half_extents.tolist(),
                'rotation': self.rotation.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "OrientedBox":
        return cls(np.asarray(data['center'], dtype=np.float64), np.asarray(data['half_extents'], dtype=np.float64),
                   np.asarray(data['rotation'], dtype=np.float64))


@dataclass
class ObjectInstance:
    object_id: int
    box: OrientedBox
    point_indices: np.ndarray
    caption: str = ""
    # oracle bookkeeping: indices added as detector leakage
    contaminants: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_dict(self) -> dict:
        return {'id': self.object_id, 'box': self.box.to_dict(), 'point_indices': self.point_indices.tolist(),
                'caption': self.caption}

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectInstance":
        return cls(int(data['id']), OrientedBox.from_dict(data['box']),
                   np.asarray(data['point_indices'], dtype=np.int64), data.get('caption', ""))


@dataclass
class JitterConfig:
    # std of the box center offset, meters
    translation_sigma: float = 0.0
    # half extents are scaled by a factor drawn from [1 - s, 1 + s]
    scale_jitter: float = 0.0
    # fraction of the final point set made of neighbouring foreign points
    contamination: float = 0.0
    # slack added to ground-truth boxes, meters
    box_margin: float = 0.02

    def validate(self) -> None:
        if not 0.0 <= self.contamination < 1.0:
            raise ConfigError(f"contamination must be in [0, 1), got {self.contamination}")
        if not 0.0 <= self.scale_jitter < 1.0 or self.translation_sigma < 0 or self.box_margin < 0:
            raise ConfigError("Invalid jitter magnitudes")


def ground_truth_box(shape: ShapeSpec, margin: float = 0.0) -> OrientedBox:
    """Tight box of a shape in its own frame, posed in the world."""
    if shape.kind == "union":
        bounds = np.stack([child.bounds() for child in shape.children])
        lo, hi = bounds[:, 0].min(axis=0), bounds[:, 1].max(axis=0)
    else:
        hi = shape.local_half_extents()
        lo = -hi
    center = shape.R @ (0.5 * (lo + hi)) + shape.t
    return OrientedBox(center, 0.5 * (hi - lo) + margin, shape.R)


def detect_instances_oracle(scene: SceneSpec, track: PointCloudTrack, config: JitterConfig = None,
                            seed: int = 0) -> List[ObjectInstance]:
    """Jittered ground-truth detections with labeled points and optional leakage.

    Objects with no labeled point inside their jittered box are not detected.
    Contaminants are the foreign points closest to the jittered box.
    """
    config = config or JitterConfig()
    config.validate()
    if len(track) == 0:
        raise ValueError("Cannot detect instances in an empty track")
    instances = []
    for obj in scene.objects:
        rng = make_rng(seed, 11, obj.object_id)
        gt = ground_truth_box(obj.shape, config.box_margin)
        center = gt.center + rng.normal(0.0, config.translation_sigma, 3) if config.translation_sigma else gt.center
        half = gt.half_extents
        if config.scale_jitter:
            half = half * rng.uniform(1.0 - config.scale_jitter, 1.0 + config.scale_jitter, 3)
        box = OrientedBox(center, half, gt.rotation)

        labeled = track.object_ids == obj.object_id
        own = np.flatnonzero(labeled & box.contains(track.points))
        if len(own) == 0:
            log.warning("Object %d of scene %d has no points inside its box: not detected", obj.object_id, scene.seed)
            continue

        contaminants = np.zeros(0, dtype=np.int64)
        n_contaminants = int(round(config.contamination * len(own) / (1.0 - config.contamination)))
        foreign = np.flatnonzero(~labeled)
        if n_contaminants and len(foreign):
            order = np.argsort(box.distance(track.points[foreign]), kind="stable")
            contaminants = np.sort(foreign[order[:n_contaminants]])

        instance = ObjectInstance(obj.object_id, box, np.union1d(own, contaminants), contaminants=contaminants)
        instance.caption = caption_object(instance, scene)
        instances.append(instance)
    return instances


def caption_object(instance: ObjectInstance, scene: SceneSpec) -> str:
    """Templated caption ``a [tall|flat] <size> <primitive>`` from the object's dimensions."""
    shape = scene.object(instance.object_id).shape
    half = ground_truth_box(shape).half_extents
    extent = 2.0 * float(half.max())
    size = next((word for limit, word in SIZE_STEPS if extent < limit), "large")
    horizontal = max(half[0], half[1])
    words = ["a"]
    if half[2] > 1.8 * horizontal:
        words.append("tall")
    elif half[2] < 0.45 * horizontal:
        words.append("flat")
    words += [size, PRIMITIVE_WORDS[shape.kind]]
    return " ".join(words)


def tokenize_caption(caption: str) -> List[int]:
    return [TOKEN_IDS.get(word, UNK_ID) for word in caption.lower().split()]


def project_point_mask(points: np.ndarray, camera: Camera) -> np.ndarray:
    """Binary (H, W) mask with one pixel set per projecting point."""
    k = camera.intrinsics
    mask = np.zeros((k.height, k.width), dtype=np.uint8)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return mask
    row, col, inside = camera.pixel_of(points)
    mask[row[inside], col[inside]] = 1
    return mask
