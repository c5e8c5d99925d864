import math
from dataclasses import dataclass
from typing import Optional, Tuple

from flowshape.exceptions import ConfigError

SAMPLERS = ("midpoint", "euler")
T_SAMPLING = ("uniform", "logit_normal")


@dataclass
class FlowConfig:
    dual_blocks: int = 2
    single_blocks: int = 2
    heads: int = 4
    width: int = 64
    # dual blocks that attend to text tokens, default ceil(dual_blocks / 4)
    text_depth: Optional[int] = None
    latent_dim: int = 16
    steps: int = 32
    sampler: str = "midpoint"
    t_sampling: str = "uniform"
    # image patches
    patch_size: int = 8
    patch_dim: int = 48
    mask_channels: int = 16
    # point voxelization and sparse encoder stages
    voxel_resolution: int = 32
    point_widths: Tuple[int, ...] = (32, 64)
    train_views: int = 2
    inference_views: int = 8
    # probability of dropping all conditions of a training sample
    condition_dropout: float = 0.1
    # seed of the frozen patch embedder
    frozen_seed: int = 1234

    def validate(self) -> None:
        if self.width % self.heads:
            raise ConfigError(f"width {self.width} is not divisible by {self.heads} heads")
        if self.dual_blocks < 1 or self.single_blocks < 0:
            raise ConfigError("The flow model needs at least one dual block")
        if self.resolved_text_depth > self.dual_blocks:
            raise ConfigError(f"text_depth {self.text_depth} exceeds {self.dual_blocks} dual blocks")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"Unknown sampler \"{self.sampler}\", expected one of {SAMPLERS}")
        if self.t_sampling not in T_SAMPLING:
            raise ConfigError(f"Unknown t_sampling \"{self.t_sampling}\", expected one of {T_SAMPLING}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.condition_dropout < 1.0:
            raise ConfigError(f"condition_dropout must be in [0, 1), got {self.condition_dropout}")

    @property
    def resolved_text_depth(self) -> int:
        return math.ceil(self.dual_blocks / 4) if self.text_depth is None else self.text_depth
