"""Point-cloud augmentation operators.

Removal operators score every point and keep those at or below a threshold; when
fewer than ``min_keep`` points survive, the ``min_keep`` lowest scores are kept
instead, so the floor never breaks an operator's geometric contract.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from flowshape.augment.policy import AugPolicy
from flowshape.common.utils import make_rng

log = logging.getLogger(__name__)


@dataclass
class AugmentedPoints:
    points: np.ndarray
    # indices of the surviving input points
    indices: np.ndarray
    # operators applied, with their drawn parameters
    applied: List[dict] = field(default_factory=list)


def _keep_lowest(scores: np.ndarray, threshold: float, min_keep: int) -> np.ndarray:
    keep = scores <= threshold
    if keep.sum() >= min_keep:
        return np.flatnonzero(keep)
    return np.sort(np.argsort(scores, kind="stable")[:min_keep])


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / max(np.linalg.norm(v), 1e-12)


def augment_points(points: np.ndarray, seed: int, policy: AugPolicy,
                   visibility: Optional[Sequence[np.ndarray]] = None) -> AugmentedPoints:
    """Apply the policy's operator chain to a point cloud.

    Args:
        points (np.ndarray): (N, 3) points
        seed (int): Seed, the result is a pure function of (points, seed, policy, visibility)
        policy (AugPolicy): Point policy
        visibility (list): Optional per-frame index sets, needed by ``partial_trajectory``
    Returns:
        AugmentedPoints: Surviving points, their input indices and the applied operators
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    indices = np.arange(len(points))
    if len(points) < policy.min_keep:
        log.warning("Only %d points (< min_keep %d): point augmentation skipped", len(points), policy.min_keep)
        return AugmentedPoints(points.copy(), indices)

    rng = make_rng(seed, 19)
    current = points.copy()
    applied = []
    for spec in policy.operators:
        if rng.random() >= spec.probability:
            continue
        params = spec.draw(rng)
        record = {'op': spec.op, **params}
        keep = None

        if spec.op == "uniform_dropout":
            keep = _keep_lowest(rng.random(len(current)), 1.0 - params.get('rate', 0.0), policy.min_keep)
        elif spec.op == "clustered_dropout":
            n_anchors = max(1, int(round(params.get('anchors', 1))))
            anchors = current[rng.choice(len(current), size=min(n_anchors, len(current)), replace=False)]
            dist, _ = cKDTree(anchors).query(current, k=1)
            keep = _keep_lowest(-dist, -params.get('radius', 0.0), policy.min_keep)
            record['anchor_points'] = anchors.tolist()
        elif spec.op == "half_space_occlusion":
            normal = _random_unit(rng)
            # plane offset placed at a fraction of the cloud's extent along the normal
            proj = current @ normal
            mid, half = 0.5 * (proj.max() + proj.min()), 0.5 * (proj.max() - proj.min())
            offset = mid + params.get('keep_depth', 0.0) * half
            keep = _keep_lowest(proj - offset, 0.0, policy.min_keep)
            offset = max(offset, float(proj[keep].max()))
            record['plane_normal'], record['plane_offset'] = normal.tolist(), offset
        elif spec.op == "partial_trajectory":
            if visibility is None or len(visibility) == 0:
                log.debug("No visibility given, partial_trajectory skipped")
                continue
            n_frames = len(visibility)
            width = max(1, int(round(params.get('window', 1.0) * n_frames)))
            start = int(rng.integers(0, n_frames - width + 1))
            seen = np.zeros(len(points), dtype=bool)
            for frame in visibility[start:start + width]:
                seen[np.asarray(frame, dtype=np.int64)] = True
            keep = _keep_lowest((~seen[indices]).astype(np.float64), 0.5, policy.min_keep)
            record['frames'] = [start, start + width]
        elif spec.op == "gaussian_jitter":
            current = current + rng.normal(0.0, params.get('sigma', 0.0), current.shape)
        applied.append(record)

        if keep is not None:
            current, indices = current[keep], indices[keep]

    return AugmentedPoints(current, indices, applied)
