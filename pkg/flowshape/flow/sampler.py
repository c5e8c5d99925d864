"""ODE integration of a velocity field from noise (t = 1) to data (t = 0).

With ``z_t = (1 - t) z_0 + t z_1`` and target velocity ``z_0 - z_1``, a step is
``z_{t - dt} = z_t + dt * f(z_t, t)``.
"""

import logging
from typing import Callable

import torch
from torch import Tensor

from flowshape.common.utils import torch_generator
from flowshape.exceptions import NonFiniteStateError

log = logging.getLogger(__name__)

VelocityFn = Callable[[Tensor, Tensor], Tensor]


def integrate(velocity_fn: VelocityFn, z1: Tensor, steps: int, method: str = "midpoint") -> Tensor:
    """Integrate from ``z1`` at t = 1 to t = 0 with ``steps`` uniform steps.

    Raises:
        NonFiniteStateError: The state became NaN or Inf, the message names the step
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if method not in ("midpoint", "euler"):
        raise ValueError(f"Unknown integration method \"{method}\"")
    dt = 1.0 / steps
    z = z1
    for step in range(steps):
        t = 1.0 - step * dt
        t_now = torch.full((z.shape[0],), t, dtype=z.dtype)
        v = velocity_fn(z, t_now)
        if method == "midpoint":
            z_half = z + 0.5 * dt * v
            v = velocity_fn(z_half, torch.full_like(t_now, t - 0.5 * dt))
        z = z + dt * v
        if not bool(torch.isfinite(z).all()):
            raise NonFiniteStateError(f"Sampler state is not finite after step {step} (t={t - dt:.4f})")
    return z


def initial_noise(shape, seed: int, dtype=torch.float32) -> Tensor:
    return torch.randn(shape, generator=torch_generator(seed, 41), dtype=dtype)


def sample(velocity_fn: VelocityFn, shape, steps: int, seed: int, method: str = "midpoint",
           dtype=torch.float32) -> Tensor:
    """Draw ``z_1 ~ N(0, I)`` from the seed and integrate it to a latent set."""
    return integrate(velocity_fn, initial_noise(shape, seed, dtype), steps, method)
