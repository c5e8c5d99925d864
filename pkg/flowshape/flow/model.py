"""Rectified-flow velocity transformer over latent tokens.

Dual-stream blocks keep separate weights for the latent and condition streams
and attend jointly over both. The first ``text_depth`` dual blocks take the
caption tokens as their condition stream and carry the updated text stream from
one block to the next; the remaining ones take the point and image tokens.
Single-stream blocks then process the concatenation of the latent stream with
the last condition stream. Latent tokens carry no positional embedding.
"""

import torch
import torch.nn as nn
from torch import Tensor

from flowshape.exceptions import ShapeMismatchError
from flowshape.flow.conditions import ConditionEncoder, ConditionStreams
from flowshape.flow.config import FlowConfig
from flowshape.nn.attention import MultiHeadAttention, attention
from flowshape.nn.modulation import AdaLN, timestep_embedding


def _mlp(width: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width))


class DualStreamBlock(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm_z, self.norm_c = AdaLN(width, width), AdaLN(width, width)
        self.qkv_z, self.qkv_c = nn.Linear(width, 3 * width), nn.Linear(width, 3 * width)
        self.out_z, self.out_c = nn.Linear(width, width), nn.Linear(width, width)
        self.mlp_norm_z, self.mlp_norm_c = AdaLN(width, width), AdaLN(width, width)
        self.mlp_z, self.mlp_c = _mlp(width), _mlp(width)

    def forward(self, z: Tensor, c: Tensor, c_mask: Tensor, cond: Tensor):
        qz, kz, vz = self.qkv_z(self.norm_z(z, cond)).chunk(3, dim=-1)
        qc, kc, vc = self.qkv_c(self.norm_c(c, cond)).chunk(3, dim=-1)
        mask = torch.cat([torch.ones(z.shape[:2], dtype=torch.bool, device=z.device), c_mask], dim=1)
        out = attention(torch.cat([qz, qc], 1), torch.cat([kz, kc], 1), torch.cat([vz, vc], 1), self.heads, mask)
        n = z.shape[1]
        z = z + self.out_z(out[:, :n])
        c = c + self.out_c(out[:, n:])
        z = z + self.mlp_z(self.mlp_norm_z(z, cond))
        c = c + self.mlp_c(self.mlp_norm_c(c, cond))
        return z, c


class SingleStreamBlock(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.norm1, self.norm2 = AdaLN(width, width), AdaLN(width, width)
        self.attn = MultiHeadAttention(width, heads)
        self.mlp = _mlp(width)

    def forward(self, x: Tensor, mask: Tensor, cond: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x, cond), key_mask=mask)
        return x + self.mlp(self.norm2(x, cond))


class FlowModel(nn.Module):
    """Condition encoders plus the velocity network ``f(z_t, t, C)``."""

    def __init__(self, config: FlowConfig):
        super().__init__()
        config.validate()
        self.config = config
        width = config.width
        self.conditions = ConditionEncoder(config)
        self.latent_in = nn.Linear(config.latent_dim, width)
        self.time_mlp = nn.Sequential(nn.Linear(width, width), nn.SiLU(), nn.Linear(width, width))
        self.text_pool = nn.Linear(width, width)
        self.dual = nn.ModuleList([DualStreamBlock(width, config.heads) for _ in range(config.dual_blocks)])
        self.single = nn.ModuleList([SingleStreamBlock(width, config.heads) for _ in range(config.single_blocks)])
        self.final_norm = AdaLN(width, width)
        self.latent_out = nn.Linear(width, config.latent_dim)

    def velocity(self, z_t: Tensor, t: Tensor, streams: ConditionStreams) -> Tensor:
        """Velocity for latents (B, L, d) at times ``t`` (B,) or scalar.

        Raises:
            ShapeMismatchError: Latent width or batch size does not match
        """
        if z_t.dim() != 3 or z_t.shape[-1] != self.config.latent_dim:
            raise ShapeMismatchError(f"Expected latents (B, L, {self.config.latent_dim}), got {tuple(z_t.shape)}")
        if z_t.shape[0] != streams.batch:
            raise ShapeMismatchError(f"{z_t.shape[0]} latents but {streams.batch} condition sets")
        t = torch.as_tensor(t, dtype=z_t.dtype).reshape(-1).expand(z_t.shape[0])
        cond = self.time_mlp(timestep_embedding(t, self.config.width)) + self.text_pool(streams.pooled_text)

        z = self.latent_in(z_t)
        c, c_mask = streams.scene_tokens()
        text = streams.text_tokens
        for i, block in enumerate(self.dual):
            if i < self.config.resolved_text_depth:
                z, text = block(z, text, streams.text_mask, cond)
            else:
                z, c = block(z, c, c_mask, cond)

        n = z.shape[1]
        x = torch.cat([z, c], dim=1)
        mask = torch.cat([torch.ones(z.shape[:2], dtype=torch.bool, device=z.device), c_mask], dim=1)
        for block in self.single:
            x = block(x, mask, cond)
        return self.latent_out(self.final_norm(x[:, :n], cond))

    def forward(self, z_t: Tensor, t: Tensor, streams: ConditionStreams) -> Tensor:
        return self.velocity(z_t, t, streams)
