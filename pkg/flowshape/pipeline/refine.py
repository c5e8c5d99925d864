import logging

import numpy as np
from scipy.spatial import cKDTree

from flowshape.synthworld.oracles import ObjectInstance
from flowshape.synthworld.slam import PointCloudTrack

log = logging.getLogger(__name__)

MAX_ROUNDS = 3
# a point is an outlier only if its neighbour distance also exceeds this multiple of the median
MEDIAN_RATIO = 3.0


def _knn_distance(points: np.ndarray, k: int) -> np.ndarray:
    k = min(k, len(points) - 1)
    dist, _ = cKDTree(points).query(points, k=k + 1)
    return dist[:, 1:].mean(axis=1)


def refine_instance_points(instance: ObjectInstance, track: PointCloudTrack, k: int = 8, std_ratio: float = 2.0,
                           min_keep: int = 32) -> np.ndarray:
    """Clean a detection's point set.

    Keeps the points inside the detection box, then repeatedly drops points
    whose mean distance to their ``k`` nearest neighbours exceeds
    ``mean + std_ratio * std`` of that statistic. The result never shrinks below
    ``min_keep`` points (or the input size when smaller); the points closest to
    their neighbours are kept first.

    Returns:
        np.ndarray: Sorted track indices of the kept points
    """
    indices = np.asarray(instance.point_indices, dtype=np.int64)
    if len(indices) <= min_keep:
        return np.sort(indices)

    inside = indices[instance.box.contains(track.points[indices])]
    if len(inside) < min_keep:
        log.debug("Object %d: only %d of %d points inside its box", instance.object_id, len(inside), len(indices))
        inside = indices
    kept = inside
    for _ in range(MAX_ROUNDS):
        if len(kept) <= max(min_keep, k + 1):
            break
        dist = _knn_distance(track.points[kept], k)
        threshold = max(dist.mean() + std_ratio * dist.std(), MEDIAN_RATIO * np.median(dist))
        outlier = dist > threshold
        if not outlier.any():
            break
        if len(kept) - int(outlier.sum()) < min_keep:
            kept = kept[np.sort(np.argsort(dist, kind="stable")[:min_keep])]
            break
        kept = kept[~outlier]
    if len(kept) < len(indices):
        log.debug("Object %d: refined %d -> %d points", instance.object_id, len(indices), len(kept))
    return np.sort(kept)
