"""Point-set distances: Chamfer, normal consistency and F-score.

Nearest neighbours come from ``scipy.spatial.cKDTree``; results equal the
brute-force definitions up to floating point.
"""

from typing import Tuple

import numpy as np
from scipy.spatial import cKDTree

from flowshape.exceptions import DegenerateInputError


def _as_points(points: np.ndarray, name: str) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise DegenerateInputError(f"Point set {name} is empty")
    return points


def nearest(source: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Distance and index of the nearest ``target`` point for every ``source`` point."""
    dist, idx = cKDTree(target).query(source, k=1)
    return dist, idx


def chamfer_l2(a: np.ndarray, b: np.ndarray) -> float:
    """Mean of the two directional mean Euclidean nearest-neighbour distances."""
    a, b = _as_points(a, "A"), _as_points(b, "B")
    dist_ab, _ = nearest(a, b)
    dist_ba, _ = nearest(b, a)
    return 0.5 * (float(dist_ab.mean()) + float(dist_ba.mean()))


def normal_consistency(a: np.ndarray, normals_a: np.ndarray, b: np.ndarray, normals_b: np.ndarray) -> float:
    """Mean absolute cosine between each normal and its nearest neighbour's, both directions."""
    a, b = _as_points(a, "A"), _as_points(b, "B")
    normals_a = np.asarray(normals_a, dtype=np.float64).reshape(-1, 3)
    normals_b = np.asarray(normals_b, dtype=np.float64).reshape(-1, 3)
    _, idx_ab = nearest(a, b)
    _, idx_ba = nearest(b, a)
    consist_a = np.abs(np.sum(normals_a * normals_b[idx_ab], axis=1)).mean()
    consist_b = np.abs(np.sum(normals_b * normals_a[idx_ba], axis=1)).mean()
    return 0.5 * (float(consist_a) + float(consist_b))


def precision_recall(a: np.ndarray, b: np.ndarray, tau: float) -> Tuple[float, float]:
    """Fraction of A within tau of B, and of B within tau of A."""
    if not tau > 0:
        raise ValueError(f"F-score threshold must be positive, got {tau}")
    a, b = _as_points(a, "A"), _as_points(b, "B")
    dist_ab, _ = nearest(a, b)
    dist_ba, _ = nearest(b, a)
    return float(np.mean(dist_ab < tau)), float(np.mean(dist_ba < tau))


def f_score(a: np.ndarray, b: np.ndarray, tau: float) -> float:
    precision, recall = precision_recall(a, b, tau)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
