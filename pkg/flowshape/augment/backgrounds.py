"""Procedural grayscale backgrounds: smooth noise, gradients and grids."""

from typing import List, Tuple

import numpy as np
from scipy import ndimage

from flowshape.common.utils import make_rng

BACKGROUND_KINDS = ("noise", "gradient", "grid")


def _noise(rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    field = ndimage.gaussian_filter(rng.random(shape), sigma=rng.uniform(1.0, 6.0), mode="wrap")
    span = field.max() - field.min()
    return (field - field.min()) / span if span > 0 else np.full(shape, 0.5)


def _gradient(rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    rows, cols = np.meshgrid(np.linspace(0.0, 1.0, shape[0]), np.linspace(0.0, 1.0, shape[1]), indexing="ij")
    angle = rng.uniform(0.0, 2.0 * np.pi)
    ramp = np.cos(angle) * cols + np.sin(angle) * rows
    lo, hi = np.sort(rng.uniform(0.0, 1.0, 2))
    span = ramp.max() - ramp.min()
    return lo + (hi - lo) * (ramp - ramp.min()) / (span if span > 0 else 1.0)


def _grid(rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    period = int(rng.integers(4, 17))
    rows, cols = np.indices(shape)
    lines = (rows % period < 1) | (cols % period < 1)
    base, ink = rng.uniform(0.2, 0.8, 2)
    return np.where(lines, ink, base)


def make_background(kind: str, shape: Tuple[int, int], seed: int) -> np.ndarray:
    rng = make_rng(seed, 23, BACKGROUND_KINDS.index(kind))
    image = {"noise": _noise, "gradient": _gradient, "grid": _grid}[kind](rng, shape)
    return np.clip(image, 0.0, 1.0)


def make_backgrounds(n: int, shape: Tuple[int, int], seed: int) -> List[np.ndarray]:
    """``n`` backgrounds cycling through the procedural kinds."""
    return [make_background(BACKGROUND_KINDS[i % len(BACKGROUND_KINDS)], shape, int(make_rng(seed, i).integers(2**31)))
            for i in range(n)]
