"""Condition sets and their token encoders (points, posed images with point masks, captions)."""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor
from torch.nn.utils.rnn import pad_sequence

from flowshape.exceptions import ConditionError
from flowshape.flow.config import FlowConfig
from flowshape.flow.plucker import plucker_encode
from flowshape.geometry.ndc import NdcTransform, normalize_to_ndc
from flowshape.nn.sparse_conv import SparseResNetEncoder, SparseVoxelGrid, sparse_conv3d_encode
from flowshape.synthworld.camera import Camera
from flowshape.synthworld.oracles import PAD_ID, VOCABULARY

log = logging.getLogger(__name__)

NDC_TOLERANCE = 1e-6


@dataclass
class ConditionSet:
    # (N, 3) object points in NDC
    points: np.ndarray
    ndc: NdcTransform
    frames: List[np.ndarray] = field(default_factory=list)
    cameras: List[Camera] = field(default_factory=list)
    masks: List[np.ndarray] = field(default_factory=list)
    caption_tokens: List[int] = field(default_factory=list)

    def validate(self) -> None:
        if not (len(self.frames) == len(self.cameras) == len(self.masks)):
            raise ConditionError(f"{len(self.frames)} frames, {len(self.cameras)} cameras and "
                                 f"{len(self.masks)} masks are not aligned")
        for frame, mask in zip(self.frames, self.masks):
            if frame.shape != mask.shape:
                raise ConditionError(f"Mask shape {mask.shape} differs from frame shape {frame.shape}")
        if len(self.points) and np.abs(self.points).max() > 1.0 + NDC_TOLERANCE:
            raise ConditionError("Condition points are outside the NDC cube")

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0 and len(self.frames) == 0 and len(self.caption_tokens) == 0

    def without(self, points: bool = False, images: bool = False, text: bool = False) -> "ConditionSet":
        """Copy with the named modalities removed."""
        return ConditionSet(
            np.zeros((0, 3)) if points else self.points, self.ndc,
            [] if images else list(self.frames), [] if images else list(self.cameras),
            [] if images else list(self.masks), [] if text else list(self.caption_tokens))

    def to_dict(self) -> dict:
        return {'n_points': int(len(self.points)), 'n_frames': len(self.frames), 'ndc': self.ndc.to_dict(),
                'caption_tokens': list(self.caption_tokens)}


def make_condition_set(points_metric: np.ndarray, frames: Sequence[np.ndarray], cameras: Sequence[Camera],
                       masks: Sequence[np.ndarray], caption_tokens: Sequence[int]) -> ConditionSet:
    """Normalize metric object points to NDC and bundle the remaining modalities."""
    points_ndc, transform = normalize_to_ndc(points_metric)
    conditions = ConditionSet(points_ndc, transform, list(frames), list(cameras), list(masks), list(caption_tokens))
    conditions.validate()
    return conditions


@dataclass
class ConditionStreams:
    """Padded token streams; masks are False on padding."""
    point_tokens: Tensor
    point_mask: Tensor
    image_tokens: Tensor
    image_mask: Tensor
    text_tokens: Tensor
    text_mask: Tensor
    pooled_text: Tensor

    @property
    def batch(self) -> int:
        return int(self.pooled_text.shape[0])

    def scene_tokens(self):
        """Point and image tokens concatenated, with their mask."""
        return (torch.cat([self.point_tokens, self.image_tokens], dim=1),
                torch.cat([self.point_mask, self.image_mask], dim=1))


def _pad(tokens: List[Tensor], width: int, dtype) -> tuple:
    lengths = [len(t) for t in tokens]
    if max(lengths, default=0) == 0:
        empty = torch.zeros((len(tokens), 0, width), dtype=dtype)
        return empty, torch.zeros((len(tokens), 0), dtype=torch.bool)
    padded = pad_sequence([t.reshape(-1, width) for t in tokens], batch_first=True)
    mask = torch.arange(padded.shape[1])[None] < torch.tensor(lengths)[:, None]
    return padded, mask


class ConditionEncoder(nn.Module):
    """Turns condition sets into token streams of the model width.

    The image patch embedder is randomly initialised from a fixed seed and frozen.
    """

    def __init__(self, config: FlowConfig):
        super().__init__()
        self.config = config
        self.voxel_size = 2.0 / config.voxel_resolution
        self.point_encoder = SparseResNetEncoder(4, config.point_widths)
        self.point_proj = nn.Linear(self.point_encoder.out_channels + 3, config.width)

        generator = torch.Generator().manual_seed(config.frozen_seed)
        self.patch_embed = nn.Conv2d(1, config.patch_dim, config.patch_size, stride=config.patch_size)
        with torch.no_grad():
            fan_in = config.patch_size ** 2
            self.patch_embed.weight.copy_(torch.randn(self.patch_embed.weight.shape, generator=generator)
                                          / np.sqrt(fan_in))
            self.patch_embed.bias.zero_()
        self.patch_embed.requires_grad_(False)

        self.mask_net = nn.Sequential(
            nn.Conv2d(1, 8, 3, padding=1), nn.SiLU(),
            nn.Conv2d(8, config.mask_channels, 3, padding=1, stride=2), nn.SiLU())
        self.image_proj = nn.Linear(config.patch_dim + 6 + config.mask_channels, config.width)

        self.text_embed = nn.Embedding(len(VOCABULARY), config.width, padding_idx=PAD_ID)

    def _point_tokens(self, conditions: ConditionSet, dtype) -> Tensor:
        grid = SparseVoxelGrid.from_points(conditions.points, self.voxel_size, dtype)
        return self.point_proj(sparse_conv3d_encode(grid, self.point_encoder))

    def _image_tokens(self, conditions: ConditionSet, dtype, use_masks: bool) -> Tensor:
        if not conditions.frames:
            return torch.zeros((0, self.config.width), dtype=dtype)
        frames = torch.as_tensor(np.stack(conditions.frames), dtype=dtype)[:, None]
        patches = self.patch_embed(2.0 * frames - 1.0)
        grid_hw = patches.shape[-2:]
        patches = patches.flatten(2).transpose(1, 2)

        masks = torch.as_tensor(np.stack(conditions.masks), dtype=dtype)[:, None]
        mask_features = F.adaptive_avg_pool2d(self.mask_net(masks), grid_hw).flatten(2).transpose(1, 2)
        if not use_masks:
            mask_features = torch.zeros_like(mask_features)

        origin = np.asarray(conditions.ndc.apply(np.stack([cam.center for cam in conditions.cameras])))
        rays = torch.stack([plucker_encode(cam, self.config.patch_size, origin[i]).to(dtype)
                            for i, cam in enumerate(conditions.cameras)])
        tokens = self.image_proj(torch.cat([patches, rays, mask_features], dim=-1))
        return tokens.reshape(-1, self.config.width)

    def forward(self, batch: Sequence[ConditionSet], unconditional: Union[bool, Sequence[bool]] = False,
                use_masks: bool = True) -> ConditionStreams:
        """Encode a batch of condition sets.

        ``unconditional`` is either one flag for the batch or one flag per condition set.

        Raises:
            ConditionError: A condition set has no modality and ``unconditional`` was not requested
        """
        dtype = self.text_embed.weight.dtype
        if isinstance(unconditional, bool):
            unconditional = [unconditional] * len(batch)
        points, images, texts, pooled = [], [], [], []
        for conditions, drop in zip(batch, unconditional):
            if drop:
                conditions = conditions.without(points=True, images=True, text=True)
            elif conditions.is_empty:
                raise ConditionError("All condition modalities are empty; request unconditional mode explicitly")
            conditions.validate()
            points.append(self._point_tokens(conditions, dtype) if len(conditions.points)
                          else torch.zeros((0, self.config.width), dtype=dtype))
            images.append(self._image_tokens(conditions, dtype, use_masks))
            ids = torch.as_tensor(list(conditions.caption_tokens), dtype=torch.long)
            text = self.text_embed(ids)
            texts.append(text)
            pooled.append(text.mean(dim=0) if len(ids) else torch.zeros(self.config.width, dtype=dtype))

        point_tokens, point_mask = _pad(points, self.config.width, dtype)
        image_tokens, image_mask = _pad(images, self.config.width, dtype)
        text_tokens, text_mask = _pad(texts, self.config.width, dtype)
        return ConditionStreams(point_tokens, point_mask, image_tokens, image_mask, text_tokens, text_mask,
                                torch.stack(pooled))


def encode_conditions(encoder: ConditionEncoder, conditions: ConditionSet, unconditional: bool = False) -> \
        ConditionStreams:
    """Token streams of a single condition set (batch of one)."""
    return encoder([conditions], unconditional=unconditional)
