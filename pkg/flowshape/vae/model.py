"""Latent-set shape autoencoder: dual point streams to ``L x d`` latent tokens, decoded to SDF values."""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import torch
import torch.nn as nn
from torch import Tensor

from flowshape.common.utils import torch_generator
from flowshape.exceptions import ConfigError, DegenerateInputError, ShapeMismatchError
from flowshape.nn.attention import MultiHeadAttention

log = logging.getLogger(__name__)

LOGVAR_RANGE = (-10.0, 10.0)


@dataclass
class VaeConfig:
    latent_lengths: Tuple[int, ...] = (16, 32, 64)
    latent_dim: int = 16
    width: int = 64
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 3
    beta: float = 1e-3
    # sinusoidal frequencies 2^0 ... 2^(n-1) of the positional features
    frequencies: int = 6
    n_surface: int = 512
    n_edge: int = 256
    n_queries: int = 1024
    near_surface_fraction: float = 0.3
    near_surface_sigma: float = 0.02
    # NDC shapes are shrunk by a factor drawn from this range during training
    scale_jitter: Tuple[float, float] = (0.7, 1.0)

    def validate(self) -> None:
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.encoder_layers < 1 or self.decoder_layers < 1:
            raise ConfigError("The VAE needs at least one encoder and one decoder layer")
        if self.width % self.heads:
            raise ConfigError(f"width {self.width} is not divisible by {self.heads} heads")
        if any(length % 2 or length < 2 for length in self.latent_lengths):
            raise ConfigError(f"Latent lengths must be even, got {self.latent_lengths}")
        if tuple(sorted(self.latent_lengths)) != tuple(self.latent_lengths):
            raise ConfigError("Latent length ladder must ascend")

    @property
    def max_length(self) -> int:
        return max(self.latent_lengths)


@dataclass
class LatentPosterior:
    # (B, L, d)
    mean: Tensor
    # (B, L, d), clamped to LOGVAR_RANGE
    logvar: Tensor

    def kl(self) -> Tensor:
        """Closed-form KL to N(0, I), summed over tokens and channels, per sample."""
        return 0.5 * torch.sum(self.mean ** 2 + torch.exp(self.logvar) - self.logvar - 1.0, dim=(-2, -1))

    @classmethod
    def standard(cls, batch: int, length: int, dim: int, dtype=torch.float32) -> "LatentPosterior":
        zeros = torch.zeros((batch, length, dim), dtype=dtype)
        return cls(zeros, zeros.clone())


@dataclass
class LatentSet:
    # (B, L, d)
    tokens: Tensor
    ladder: Tuple[int, ...] = field(default=(16, 32, 64))

    @property
    def length(self) -> int:
        return int(self.tokens.shape[-2])

    def validate(self) -> None:
        if self.length not in self.ladder:
            raise ShapeMismatchError(f"Latent length {self.length} is not in the ladder {self.ladder}")
        if not bool(torch.isfinite(self.tokens).all()):
            raise ValueError("Latent tokens are not finite")


def fourier_features(x: Tensor, frequencies: int) -> Tensor:
    """``[x, sin(2^k pi x), cos(2^k pi x)]`` for k < frequencies, width 3 + 6 * frequencies."""
    scales = (2.0 ** torch.arange(frequencies, dtype=x.dtype, device=x.device)) * torch.pi
    args = (x[..., None] * scales).flatten(-2)
    return torch.cat([x, torch.sin(args), torch.cos(args)], dim=-1)


class TransformerBlock(nn.Module):
    """Pre-norm attention + MLP block; cross attention when a context is passed."""

    def __init__(self, width: int, heads: int, context_width: int = None):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.norm_context = nn.LayerNorm(context_width) if context_width else None
        self.attn = MultiHeadAttention(width, heads, context_width)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width))

    def forward(self, x: Tensor, context: Tensor = None) -> Tensor:
        if context is None:
            x = x + self.attn(self.norm1(x))
        else:
            x = x + self.attn(self.norm1(x), self.norm_context(context))
        return x + self.mlp(self.norm2(x))


class VecSetVae(nn.Module):
    def __init__(self, config: VaeConfig):
        super().__init__()
        config.validate()
        self.config = config
        pos_width = 3 + 6 * config.frequencies
        self.point_embed = nn.ModuleDict({
            'surface': nn.Linear(pos_width + 3, config.width),
            'edge': nn.Linear(pos_width + 3, config.width),
        })
        self.queries = nn.ParameterDict({
            'surface': nn.Parameter(0.02 * torch.randn(config.max_length, config.width)),
            'edge': nn.Parameter(0.02 * torch.randn(config.max_length, config.width)),
        })
        self.stream_attn = nn.ModuleDict({
            'surface': TransformerBlock(config.width, config.heads, config.width),
            'edge': TransformerBlock(config.width, config.heads, config.width),
        })
        self.encoder = nn.ModuleList([TransformerBlock(config.width, config.heads)
                                      for _ in range(config.encoder_layers)])
        self.to_mean = nn.Linear(config.width, config.latent_dim)
        self.to_logvar = nn.Linear(config.width, config.latent_dim)

        self.from_latent = nn.Linear(config.latent_dim, config.width)
        self.decoder = nn.ModuleList([TransformerBlock(config.width, config.heads)
                                      for _ in range(config.decoder_layers)])
        self.query_embed = nn.Linear(pos_width, config.width)
        self.query_attn = TransformerBlock(config.width, config.heads, config.width)
        self.to_sdf = nn.Sequential(nn.LayerNorm(config.width), nn.Linear(config.width, 1))

    def _stream(self, name: str, points: Tensor, length: int) -> Tensor:
        stride = self.config.max_length // (length // 2)
        queries = self.queries[name][::stride][:length // 2]
        features = self.point_embed[name](torch.cat([fourier_features(points[..., :3], self.config.frequencies),
                                                     points[..., 3:6]], dim=-1))
        queries = queries.to(features.dtype).expand(points.shape[0], -1, -1)
        return self.stream_attn[name](queries, features)

    def encode(self, surface: Tensor, edge: Tensor, length: int = None) -> LatentPosterior:
        """Posterior over ``length`` latent tokens.

        Args:
            surface (Tensor): (B, N, 6) or (N, 6) surface points and normals in NDC
            edge (Tensor): (B, M, 6) or (M, 6) sharp-edge points and normals in NDC
            length (int): Latent length from the ladder, default the largest
        Raises:
            DegenerateInputError: A point stream is empty
        """
        length = length or self.config.max_length
        if length not in self.config.latent_lengths:
            raise ShapeMismatchError(f"Latent length {length} is not in the ladder {self.config.latent_lengths}")
        if surface.shape[-2] == 0 or edge.shape[-2] == 0:
            raise DegenerateInputError("Both point streams must be non-empty")
        if surface.dim() == 2:
            surface, edge = surface[None], edge[None]
        tokens = torch.cat([self._stream('surface', surface, length), self._stream('edge', edge, length)], dim=1)
        for block in self.encoder:
            tokens = block(tokens)
        logvar = torch.clamp(self.to_logvar(tokens), *LOGVAR_RANGE)
        return LatentPosterior(self.to_mean(tokens), logvar)

    def decode_sdf(self, z: Tensor, queries: Tensor) -> Tensor:
        """Signed distances (B, Q) at NDC ``queries`` (B, Q, 3) for latents ``z`` (B, L, d)."""
        if z.dim() == 2:
            z = z[None]
        if queries.dim() == 2:
            queries = queries[None]
        tokens = self.from_latent(z)
        for block in self.decoder:
            tokens = block(tokens)
        q = self.query_embed(fourier_features(queries, self.config.frequencies))
        return self.to_sdf(self.query_attn(q, tokens)).squeeze(-1)


def sample_latent(posterior: LatentPosterior, seed: int) -> LatentSet:
    """Reparameterised draw ``mean + exp(logvar / 2) * eps``."""
    eps = torch.randn(posterior.mean.shape, generator=torch_generator(seed, 31), dtype=posterior.mean.dtype)
    return LatentSet(posterior.mean + torch.exp(0.5 * posterior.logvar) * eps)
