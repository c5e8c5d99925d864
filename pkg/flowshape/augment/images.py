"""Image augmentation operators for grayscale frames."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch
import torch.nn.functional as F
from skimage import draw

from flowshape.augment.policy import AugPolicy
from flowshape.common.utils import make_rng
from flowshape.exceptions import MissingAssetError

log = logging.getLogger(__name__)

FOG_VALUE = 0.7


@dataclass
class ImageAssets:
    # render coverage, 1 where an object was hit
    alpha: Optional[np.ndarray] = None
    # z-depth in meters, inf on background
    depth: Optional[np.ndarray] = None
    backgrounds: List[np.ndarray] = field(default_factory=list)


@dataclass
class AugmentedImage:
    image: np.ndarray
    # pixels painted by the occluder operator
    occluder_mask: np.ndarray
    applied: List[dict] = field(default_factory=list)


def degrade_resolution(image: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear downscale by ``factor`` followed by bilinear upscale to the input size."""
    h, w = image.shape
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float64))[None, None]
    small = F.interpolate(x, size=(max(1, h // factor), max(1, w // factor)), mode="bilinear", align_corners=False)
    return F.interpolate(small, size=(h, w), mode="bilinear", align_corners=False)[0, 0].numpy()


def _occluder_raster(rng: np.random.Generator, shape, count: int, size: float) -> np.ndarray:
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    for _ in range(count):
        ry, rx = max(1.0, 0.5 * size * h * rng.uniform(0.5, 1.0)), max(1.0, 0.5 * size * w * rng.uniform(0.5, 1.0))
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        if rng.random() < 0.5:
            rr, cc = draw.ellipse(cy, cx, ry, rx, shape=shape)
        else:
            rr, cc = draw.rectangle((int(cy - ry), int(cx - rx)), end=(int(cy + ry), int(cx + rx)), shape=shape)
        mask[rr, cc] = True
    return mask


def augment_image(image: np.ndarray, seed: int, policy: AugPolicy, assets: ImageAssets = None) -> AugmentedImage:
    """Apply the policy's operator chain to a frame.

    Raises:
        MissingAssetError: Background compositing was drawn but no background or alpha is available
    """
    assets = assets or ImageAssets()
    out = np.array(image, dtype=np.float64, copy=True)
    occluded = np.zeros(out.shape, dtype=bool)
    rng = make_rng(seed, 29)
    applied = []
    for spec in policy.operators:
        if rng.random() >= spec.probability:
            continue
        params = spec.draw(rng)
        record = {'op': spec.op, **params}

        if spec.op == "background":
            if not assets.backgrounds:
                raise MissingAssetError("Background compositing needs at least one background image")
            if assets.alpha is None:
                raise MissingAssetError("Background compositing needs the render alpha")
            choice = int(rng.integers(len(assets.backgrounds)))
            background = assets.backgrounds[choice]
            if background.shape != out.shape:
                raise MissingAssetError(f"Background {choice} has shape {background.shape}, expected {out.shape}")
            alpha = np.asarray(assets.alpha, dtype=np.float64)
            out = alpha * out + (1.0 - alpha) * background
            record['background'] = choice
        elif spec.op == "occluder":
            count = int(round(params.get('count', 1)))
            mask = _occluder_raster(rng, out.shape, count, params.get('size', 0.2))
            value = float(rng.uniform(0.0, 1.0))
            out[mask] = value
            occluded |= mask
            record['value'] = value
        elif spec.op == "fog":
            if assets.depth is None:
                log.debug("No depth given, fog skipped")
                continue
            weight = 1.0 - np.exp(-params.get('density', 0.0) * np.asarray(assets.depth, dtype=np.float64))
            out = (1.0 - weight) * out + weight * FOG_VALUE
        elif spec.op == "resolution":
            factor = int(round(params.get('factor', 2)))
            out = degrade_resolution(out, factor)
            record['factor'] = factor
        elif spec.op == "photometric":
            out = params.get('gain', 1.0) * np.power(np.clip(out, 0.0, 1.0), params.get('gamma', 1.0)) \
                + params.get('offset', 0.0)
        applied.append(record)

    return AugmentedImage(np.clip(out, 0.0, 1.0), occluded, applied)
