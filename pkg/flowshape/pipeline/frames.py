import logging
from typing import List

import numpy as np

from flowshape.exceptions import VisibilityError
from flowshape.synthworld.slam import PointCloudTrack

log = logging.getLogger(__name__)


def visible_counts(track: PointCloudTrack, point_indices: np.ndarray) -> np.ndarray:
    """Number of the given points observed in each frame."""
    point_indices = np.asarray(point_indices, dtype=np.int64)
    return np.array([len(np.intersect1d(frame, point_indices)) for frame in track.visibility],
                    dtype=np.int64)


def select_frames(track: PointCloudTrack, point_indices: np.ndarray, n: int) -> List[int]:
    """Pick ``n`` representative frames for an object.

    Frames are taken greedily by visible-point count, each at least
    ``floor(K / (2n))`` trajectory indices away from the frames already taken
    (K frames in the track). Ties go to the lowest frame id. When fewer than
    ``n`` frames see the object all of them are returned; when the spacing rule
    runs out of frames, the best remaining ones fill up the selection.

    Returns:
        list: Sorted frame ids
    Raises:
        VisibilityError: No frame sees any of the points
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    counts = visible_counts(track, point_indices)
    candidates = np.flatnonzero(counts > 0)
    if len(candidates) == 0:
        raise VisibilityError(f"None of the {len(point_indices)} object points is visible in any frame")
    if len(candidates) <= n:
        return [int(k) for k in candidates]

    spacing = track.n_frames // (2 * n)
    # stable sort on descending count keeps the lowest id first among ties
    ranked = [int(k) for k in candidates[np.argsort(-counts[candidates], kind="stable")]]
    chosen = []
    for frame in ranked:
        if len(chosen) == n:
            break
        if all(abs(frame - other) >= spacing for other in chosen):
            chosen.append(frame)
    if len(chosen) < n:
        log.debug("Spacing %d leaves %d of %d frames, filling up by visibility", spacing, len(chosen), n)
        for frame in ranked:
            if len(chosen) == n:
                break
            if frame not in chosen:
                chosen.append(frame)
    return sorted(chosen)
