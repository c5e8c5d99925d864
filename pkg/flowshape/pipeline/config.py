"""Run configuration: one dataclass per module gathered in ``RunConfig``.

The file format is JSON, a tree mirroring the dataclasses::

    {"seed": 0, "vae": {"beta": 0.001}, "flow_train": {"latent_schedule": [[0, 16], [1000, 32]]}}

Keys left out keep their defaults, unknown keys raise ``ConfigError``. Single
values are overridden from the command line with ``section.key=value``.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Any, Sequence, Tuple

from flowshape.augment.policy import AugmentConfig
from flowshape.common.utils import parse_value, read_json, write_json
from flowshape.exceptions import ConfigError
from flowshape.flow.config import FlowConfig
from flowshape.metrics.report import DEFAULT_SAMPLES, DEFAULT_TAU
from flowshape.synthworld.camera import TrajectoryConfig
from flowshape.synthworld.oracles import JitterConfig
from flowshape.synthworld.render import RenderConfig
from flowshape.synthworld.scene import SceneConfig
from flowshape.synthworld.slam import SlamConfig
from flowshape.vae.model import VaeConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    # curriculum stage, 1 = isolated objects, 2 = scene crops
    stage: int = 1
    batch_size: int = 16
    steps: int = 2000
    lr: float = 2e-4
    # (first step, latent length) pairs
    latent_schedule: Tuple[Tuple[int, int], ...] = ((0, 64),)
    augment_points: bool = True
    augment_images: bool = True
    log_every: int = 10
    checkpoint_every: int = 500
    seed: int = 0

    def validate(self, ladder: Sequence[int] = None) -> None:
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.lr <= 0:
            raise ConfigError(f"Learning rate must be > 0, got {self.lr}")
        if self.batch_size < 1 or self.steps < 1:
            raise ConfigError("batch_size and steps must be >= 1")
        if not self.latent_schedule or self.latent_schedule[0][0] != 0:
            raise ConfigError("The latent schedule must start at step 0")
        starts = [int(s) for s, _ in self.latent_schedule]
        lengths = [int(n) for _, n in self.latent_schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError(f"Schedule steps must strictly ascend, got {starts}")
        if any(b < a for a, b in zip(lengths, lengths[1:])):
            raise ConfigError(f"Schedule latent lengths must ascend, got {lengths}")
        if ladder is not None and not set(lengths) <= set(ladder):
            raise ConfigError(f"Schedule lengths {lengths} are not all in the ladder {tuple(ladder)}")


def latent_length_at(schedule: Sequence[Tuple[int, int]], step: int) -> int:
    """Latent length in force at ``step``."""
    length = int(schedule[0][1])
    for start, value in schedule:
        if step >= start:
            length = int(value)
    return length


@dataclass
class DatasetConfig:
    stage1_scenes: int = 64
    stage2_scenes: int = 16
    stage2_objects: int = 3
    # resolution of ground-truth meshes and of the meshes encoded into target latents
    mesh_resolution: int = 64
    # primitives drawn for VAE training
    vae_shapes: int = 256


@dataclass
class InferenceConfig:
    # defaults to the flow config's steps and the VAE's longest latent
    steps: int = None
    latent_length: int = None
    resolution: int = 64
    min_points: int = 32
    knn: int = 8
    outlier_std: float = 2.0
    use_points: bool = True
    use_images: bool = True
    use_masks: bool = True
    use_text: bool = True
    unconditional: bool = False


@dataclass
class MetricsConfig:
    n_samples: int = DEFAULT_SAMPLES
    tau: float = DEFAULT_TAU
    one_sided: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    slam: SlamConfig = field(default_factory=SlamConfig)
    jitter: JitterConfig = field(default_factory=JitterConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    vae: VaeConfig = field(default_factory=VaeConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    vae_train: TrainConfig = field(default_factory=lambda: TrainConfig(steps=5000, lr=5e-4))
    flow_train: TrainConfig = field(default_factory=lambda: TrainConfig(
        steps=15000, latent_schedule=((0, 16), (3000, 32), (8000, 64))))
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def validate(self) -> None:
        for section in (self.scene, self.trajectory, self.slam, self.jitter, self.vae, self.flow):
            section.validate()
        self.vae_train.validate()
        self.flow_train.validate(self.vae.latent_lengths)
        if self.vae.latent_dim != self.flow.latent_dim:
            raise ConfigError(f"VAE latent_dim {self.vae.latent_dim} differs from flow latent_dim "
                              f"{self.flow.latent_dim}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        config = config_from_dict(cls, data, "config")
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            data = read_json(path)
        except (OSError, ValueError) as err:
            raise ConfigError(f"Cannot read config file {path}: {err}") from err
        log.debug("Read config file %s", path)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def save_resolved(self, path: str) -> None:
        write_json(path, self.to_dict())

    def override(self, assignment: str) -> None:
        """Apply one ``section.key=value`` assignment in place."""
        key, sep, text = assignment.partition("=")
        if not sep:
            raise ConfigError(f"Override \"{assignment}\" is not of the form key=value")
        *parents, name = key.strip().split(".")
        target = self
        for part in parents:
            if not is_dataclass(target) or not hasattr(target, part):
                raise ConfigError(f"Unknown config section \"{part}\" in \"{key}\"")
            target = getattr(target, part)
        if not is_dataclass(target) or name not in {f.name for f in fields(target)}:
            raise ConfigError(f"Unknown config key \"{key}\"")
        setattr(target, name, _coerce(getattr(target, name), parse_value(text), key))


def _coerce(current: Any, value: Any, path: str) -> Any:
    if is_dataclass(current):
        return config_from_dict(type(current), value, path)
    if isinstance(current, tuple) and isinstance(value, (list, tuple)):
        template = current[0] if current else None
        return tuple(_coerce(template, v, path) for v in value)
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path} expects true or false, got {value!r}")
        return value
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def config_from_dict(cls, data: Any, path: str = "config"):
    """Build dataclass ``cls`` from a (partial) mapping, nested sections included."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown config key(s) under {path}: {', '.join(unknown)}")
    defaults = cls()
    return cls(**{key: _coerce(getattr(defaults, key), value, f"{path}.{key}") for key, value in data.items()})
