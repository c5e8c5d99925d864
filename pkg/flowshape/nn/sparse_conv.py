"""Sparse voxel grids and a residual sparse-convolution encoder.

Convolutions only visit occupied voxels: neighbours are found by hashing integer
coordinates to sorted int64 keys and looking them up with ``torch.searchsorted``.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from flowshape.exceptions import ShapeMismatchError

log = logging.getLogger(__name__)

_KEY_RANGE = 1 << 20
_KEY_SHIFT = 1 << 19


def coord_keys(coords: torch.Tensor) -> torch.Tensor:
    c = coords.to(torch.int64) + _KEY_SHIFT
    return (c[:, 0] * _KEY_RANGE + c[:, 1]) * _KEY_RANGE + c[:, 2]


def _lookup(sorted_keys: torch.Tensor, order: torch.Tensor, query: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Row index of each queried coordinate and whether it is occupied."""
    if len(sorted_keys) == 0:
        return torch.zeros_like(query), torch.zeros_like(query, dtype=torch.bool)
    pos = torch.searchsorted(sorted_keys, query).clamp(max=len(sorted_keys) - 1)
    found = sorted_keys[pos] == query
    return order[pos], found


@dataclass
class SparseVoxelGrid:
    # (N, 3) unique integer coordinates
    coords: torch.Tensor
    # (N, C) features
    features: torch.Tensor
    # voxel edge length in NDC units
    voxel_size: float

    def __post_init__(self):
        if self.coords.shape[0] != self.features.shape[0]:
            raise ShapeMismatchError(f"{self.coords.shape[0]} coordinates but {self.features.shape[0]} feature rows")

    def __len__(self) -> int:
        return int(self.coords.shape[0])

    @property
    def centers(self) -> torch.Tensor:
        """Voxel centers in NDC."""
        return (self.coords.to(self.features.dtype) + 0.5) * self.voxel_size - 1.0

    def canonical(self) -> "SparseVoxelGrid":
        """Same grid with rows sorted by coordinate key."""
        order = torch.argsort(coord_keys(self.coords))
        return SparseVoxelGrid(self.coords[order], self.features[order], self.voxel_size)

    def translated(self, offset: Sequence[int]) -> "SparseVoxelGrid":
        shift = torch.as_tensor(offset, dtype=self.coords.dtype)
        return SparseVoxelGrid(self.coords + shift, self.features, self.voxel_size)

    @classmethod
    def empty(cls, channels: int, voxel_size: float, dtype=torch.float32) -> "SparseVoxelGrid":
        return cls(torch.zeros((0, 3), dtype=torch.int64), torch.zeros((0, channels), dtype=dtype), voxel_size)

    @classmethod
    def from_points(cls, points: np.ndarray, voxel_size: float, dtype=torch.float32) -> "SparseVoxelGrid":
        """Voxelize NDC points; features are the mean in-voxel offset (3) and log point count (1)."""
        points = torch.as_tensor(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if len(points) == 0:
            return cls.empty(4, voxel_size, dtype)
        scaled = (points + 1.0) / voxel_size
        cell = torch.floor(scaled).to(torch.int64)
        coords, inverse = torch.unique(cell, dim=0, return_inverse=True)
        offsets = scaled - cell - 0.5
        sums = torch.zeros((len(coords), 3), dtype=torch.float64).index_add_(0, inverse, offsets)
        counts = torch.zeros(len(coords), dtype=torch.float64).index_add_(0, inverse, torch.ones(len(points),
                                                                                                dtype=torch.float64))
        features = torch.cat([sums / counts[:, None], torch.log(counts)[:, None]], dim=1)
        return cls(coords, features.to(dtype), voxel_size)


class SparseConv3d(nn.Module):
    """Sparse 3D convolution.

    ``stride=1``: 3x3x3 submanifold convolution, output sites equal input sites.
    ``stride=2``: 2x2x2 kernel, output sites are the occupied coarse cells ``floor(c / 2)``.
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        if stride not in (1, 2):
            raise ValueError(f"Unsupported stride {stride}")
        self.stride = stride
        span = (-1, 0, 1) if stride == 1 else (0, 1)
        self.register_buffer("offsets", torch.tensor(list(itertools.product(span, repeat=3)), dtype=torch.int64),
                             persistent=False)
        self.weight = nn.Parameter(torch.empty(len(self.offsets), in_channels, out_channels))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        nn.init.normal_(self.weight, std=1.0 / np.sqrt(in_channels * len(self.offsets)))

    def forward(self, grid: SparseVoxelGrid) -> SparseVoxelGrid:
        if grid.features.shape[1] != self.weight.shape[1]:
            raise ShapeMismatchError(f"Grid has {grid.features.shape[1]} channels, conv expects {self.weight.shape[1]}")
        if len(grid) == 0:
            return SparseVoxelGrid(grid.coords, grid.features.new_zeros((0, self.weight.shape[2])),
                                   grid.voxel_size * self.stride)
        keys = coord_keys(grid.coords)
        sorted_keys, order = torch.sort(keys)
        if self.stride == 1:
            out_coords = grid.coords
        else:
            out_coords = torch.unique(torch.div(grid.coords, 2, rounding_mode="floor"), dim=0)

        out = grid.features.new_zeros((len(out_coords), self.weight.shape[2]))
        for k, offset in enumerate(self.offsets):
            index, found = _lookup(sorted_keys, order, coord_keys(out_coords * self.stride + offset))
            if not bool(found.any()):
                continue
            gathered = grid.features[index] * found[:, None].to(grid.features.dtype)
            out = out + gathered @ self.weight[k]
        return SparseVoxelGrid(out_coords, out + self.bias, grid.voxel_size * self.stride)


def _apply(grid: SparseVoxelGrid, features: torch.Tensor) -> SparseVoxelGrid:
    return SparseVoxelGrid(grid.coords, features, grid.voxel_size)


class SparseResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = SparseConv3d(channels, channels)
        self.conv2 = SparseConv3d(channels, channels)

    def forward(self, grid: SparseVoxelGrid) -> SparseVoxelGrid:
        h = self.conv2(_apply(grid, F.silu(self.conv1(grid).features)))
        return _apply(grid, grid.features + h.features)


class SparseResNetEncoder(nn.Module):
    """Stem, then one (stride-2 conv, residual block) pair per stage width."""

    def __init__(self, in_channels: int, widths: Sequence[int]):
        super().__init__()
        self.in_channels = in_channels
        self.widths = tuple(widths)
        self.stem = nn.Linear(in_channels, widths[0])
        stages = []
        previous = widths[0]
        for width in widths:
            stages.append(nn.ModuleList([SparseConv3d(previous, width, stride=2), SparseResBlock(width)]))
            previous = width
        self.stages = nn.ModuleList(stages)

    @property
    def total_stride(self) -> int:
        return 2 ** len(self.stages)

    @property
    def out_channels(self) -> int:
        return self.widths[-1]

    @torch.no_grad()
    def identity_init_(self) -> None:
        """Turn the encoder into a passthrough (all widths must equal the input width)."""
        if any(w != self.in_channels for w in self.widths):
            raise ShapeMismatchError("identity_init_ needs every stage width equal to the input width")
        eye = torch.eye(self.in_channels)
        self.stem.weight.copy_(eye)
        self.stem.bias.zero_()
        for down, block in self.stages:
            down.weight.copy_(eye.expand_as(down.weight))
            down.bias.zero_()
            for conv in (block.conv1, block.conv2):
                conv.weight.zero_()
                conv.bias.zero_()

    def forward(self, grid: SparseVoxelGrid) -> SparseVoxelGrid:
        grid = _apply(grid, self.stem(grid.features))
        for down, block in self.stages:
            grid = block(down(grid))
        return grid


def sparse_conv3d_encode(grid: SparseVoxelGrid, encoder: SparseResNetEncoder) -> torch.Tensor:
    """Encode an occupancy grid to tokens ``[features, voxel center]`` of width ``out_channels + 3``.

    Tokens are ordered by coarse coordinate, so the result does not depend on the
    storage order of the input voxels. An empty grid gives an empty sequence.
    """
    if len(grid) == 0:
        return grid.features.new_zeros((0, encoder.out_channels + 3))
    coarse = encoder(grid.canonical()).canonical()
    return torch.cat([coarse.features, coarse.centers.to(coarse.features.dtype)], dim=1)
