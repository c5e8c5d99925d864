"""Adaptive layer-norm modulation driven by a conditioning vector."""

import math
from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from flowshape.exceptions import ShapeMismatchError

NORM_EPS = 1e-6


def normalize(x: torch.Tensor) -> torch.Tensor:
    """Per-row zero mean, unit variance (layer norm without affine)."""
    return F.layer_norm(x, x.shape[-1:], eps=NORM_EPS)


def adaln_modulate(x: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor, gate: torch.Tensor) -> torch.Tensor:
    """``gate * ((1 + scale) * normalize(x) + shift)``.

    Args:
        x (torch.Tensor): (B, N, D) tokens
        scale, shift, gate (torch.Tensor): (B, D) per-channel modulation
    """
    if not (scale.shape == shift.shape == gate.shape) or scale.shape[-1] != x.shape[-1]:
        raise ShapeMismatchError(f"Modulation shapes {tuple(scale.shape)}, {tuple(shift.shape)}, "
                                 f"{tuple(gate.shape)} do not match tokens {tuple(x.shape)}")
    return gate.unsqueeze(-2) * ((1.0 + scale.unsqueeze(-2)) * normalize(x) + shift.unsqueeze(-2))


class AdaLN(nn.Module):
    """Projects a conditioning vector to (scale, shift, gate) and modulates tokens.

    The projection is zero-initialised and the gate is ``1 + raw``, so a fresh
    module returns ``normalize(x)``.
    """

    def __init__(self, width: int, cond_width: int):
        super().__init__()
        self.width = width
        self.projection = nn.Sequential(nn.SiLU(), nn.Linear(cond_width, 3 * width))
        nn.init.zeros_(self.projection[-1].weight)
        nn.init.zeros_(self.projection[-1].bias)

    def parameters_for(self, cond: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        scale, shift, raw_gate = self.projection(cond).chunk(3, dim=-1)
        return scale, shift, 1.0 + raw_gate

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        return adaln_modulate(x, *self.parameters_for(cond))


def timestep_embedding(t: torch.Tensor, width: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of scalar times in [0, 1], shape (B, width)."""
    half = width // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=t.dtype, device=t.device) / half)
    args = 1000.0 * t.reshape(-1, 1) * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if width % 2:
        emb = F.pad(emb, (0, 1))
    return emb
