from dataclasses import dataclass
from typing import Callable, Optional

import torch
from torch import Tensor

from flowshape.common.utils import torch_generator


@dataclass
class FlowSample:
    z_t: Tensor
    # (B,) interpolation times
    t: Tensor
    z0: Tensor
    z1: Tensor

    @property
    def target(self) -> Tensor:
        return self.z0 - self.z1


@dataclass
class FlowLoss:
    loss: Tensor
    sample: FlowSample


def sample_times(batch: int, generator: torch.Generator, dtype, mode: str = "uniform") -> Tensor:
    if mode == "logit_normal":
        return torch.sigmoid(torch.randn(batch, generator=generator, dtype=dtype))
    return torch.rand(batch, generator=generator, dtype=dtype)


def fm_loss(velocity_fn: Callable[[FlowSample], Tensor], z0: Tensor, seed: int, t: Optional[Tensor] = None,
            t_sampling: str = "uniform") -> FlowLoss:
    """Flow-matching loss: mean squared error between predicted and straight-line velocity.

    Args:
        velocity_fn (callable): Maps a FlowSample to a predicted velocity shaped like ``z_t``
        z0 (Tensor): (B, L, d) data latents
        seed (int): Seed of t and z_1
        t (Tensor): Optional forced times (B,)
        t_sampling (str): "uniform" or "logit_normal"
    """
    generator = torch_generator(seed, 43)
    if t is None:
        t = sample_times(z0.shape[0], generator, z0.dtype, t_sampling)
    else:
        t = torch.as_tensor(t, dtype=z0.dtype).reshape(-1).expand(z0.shape[0])
    z1 = torch.randn(z0.shape, generator=generator, dtype=z0.dtype)
    tb = t.reshape(-1, 1, 1)
    z_t = (1.0 - tb) * z0 + tb * z1
    sample = FlowSample(z_t, t, z0, z1)
    prediction = velocity_fn(sample)
    return FlowLoss(torch.mean((prediction - sample.target) ** 2), sample)


def model_velocity(model, streams):
    """Adapter from a FlowModel and its condition streams to a ``velocity_fn``."""
    return lambda s: model(s.z_t, s.t, streams)
