"""Augmentation policies: ordered operator chains with probabilities and parameter ranges.

Default ranges are our own choice:

    operator               parameter     stage 1 (heavy)   stage 2 (light)
    uniform_dropout        rate          0.0 - 0.7         0.0 - 0.3
    clustered_dropout      radius (NDC)  0.05 - 0.4        0.05 - 0.2
                           anchors       1 - 4             1 - 2
    half_space_occlusion   keep_depth    -0.3 - 0.6        0.2 - 0.8
    partial_trajectory     window        0.3 - 1.0         0.6 - 1.0
    gaussian_jitter        sigma (NDC)   0.0 - 0.02        0.0 - 0.008
    background             -             -                 -
    occluder               count         1 - 3             0 - 1
                           size          0.1 - 0.4         0.1 - 0.25
    fog                    density       0.0 - 0.6         0.0 - 0.2
    resolution             factor        2 - 4             2 - 2
    photometric            gamma         0.6 - 1.6         0.85 - 1.2
                           gain          0.6 - 1.4         0.9 - 1.1
                           offset        -0.15 - 0.15      -0.05 - 0.05
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from flowshape.common.utils import make_rng
from flowshape.exceptions import ConfigError

log = logging.getLogger(__name__)

POINT_OPERATORS = ("uniform_dropout", "clustered_dropout", "half_space_occlusion", "partial_trajectory",
                   "gaussian_jitter")
IMAGE_OPERATORS = ("background", "occluder", "fog", "resolution", "photometric")

# hard limits every policy range must respect
PARAM_BOUNDS = {
    "uniform_dropout": {"rate": (0.0, 0.95)},
    "clustered_dropout": {"radius": (0.0, 2.0), "anchors": (1, 16)},
    "half_space_occlusion": {"keep_depth": (-1.0, 1.0)},
    "partial_trajectory": {"window": (0.05, 1.0)},
    "gaussian_jitter": {"sigma": (0.0, 0.1)},
    "background": {},
    "occluder": {"count": (0, 8), "size": (0.02, 0.8)},
    "fog": {"density": (0.0, 5.0)},
    "resolution": {"factor": (2, 4)},
    "photometric": {"gamma": (0.2, 5.0), "gain": (0.2, 3.0), "offset": (-0.5, 0.5)},
}

STAGE_RANGES = {
    1: {
        "uniform_dropout": {"rate": (0.0, 0.7)},
        "clustered_dropout": {"radius": (0.05, 0.4), "anchors": (1, 4)},
        "half_space_occlusion": {"keep_depth": (-0.3, 0.6)},
        "partial_trajectory": {"window": (0.3, 1.0)},
        "gaussian_jitter": {"sigma": (0.0, 0.02)},
        "background": {},
        "occluder": {"count": (1, 3), "size": (0.1, 0.4)},
        "fog": {"density": (0.0, 0.6)},
        "resolution": {"factor": (2, 4)},
        "photometric": {"gamma": (0.6, 1.6), "gain": (0.6, 1.4), "offset": (-0.15, 0.15)},
    },
    2: {
        "uniform_dropout": {"rate": (0.0, 0.3)},
        "clustered_dropout": {"radius": (0.05, 0.2), "anchors": (1, 2)},
        "half_space_occlusion": {"keep_depth": (0.2, 0.8)},
        "partial_trajectory": {"window": (0.6, 1.0)},
        "gaussian_jitter": {"sigma": (0.0, 0.008)},
        "background": {},
        "occluder": {"count": (0, 1), "size": (0.1, 0.25)},
        "fog": {"density": (0.0, 0.2)},
        "resolution": {"factor": (2, 2)},
        "photometric": {"gamma": (0.85, 1.2), "gain": (0.9, 1.1), "offset": (-0.05, 0.05)},
    },
}

# probability that an operator is applied, per stage
STAGE_PROBABILITY = {1: (0.3, 0.8), 2: (0.05, 0.3)}


@dataclass(frozen=True)
class OperatorSpec:
    op: str
    probability: float
    ranges: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def validate(self) -> None:
        if self.op not in PARAM_BOUNDS:
            raise ConfigError(f"Unknown augmentation operator \"{self.op}\"")
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"Probability of {self.op} must be in [0, 1], got {self.probability}")
        for name, (lo, hi) in self.ranges.items():
            if name not in PARAM_BOUNDS[self.op]:
                raise ConfigError(f"Operator {self.op} has no parameter \"{name}\"")
            bound_lo, bound_hi = PARAM_BOUNDS[self.op][name]
            if lo > hi or lo < bound_lo or hi > bound_hi:
                raise ConfigError(f"Range {name}=({lo}, {hi}) of {self.op} outside [{bound_lo}, {bound_hi}]")

    def draw(self, rng: np.random.Generator) -> Dict[str, float]:
        """Sample one value per parameter from its range."""
        return {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in sorted(self.ranges.items())}


@dataclass(frozen=True)
class AugPolicy:
    modality: str
    operators: Tuple[OperatorSpec, ...] = ()
    min_keep: int = 32

    def validate(self) -> None:
        allowed = POINT_OPERATORS if self.modality == "point" else IMAGE_OPERATORS
        if self.modality not in ("point", "image"):
            raise ConfigError(f"Unknown policy modality \"{self.modality}\"")
        for spec in self.operators:
            spec.validate()
            if spec.op not in allowed:
                raise ConfigError(f"Operator {spec.op} does not apply to {self.modality} inputs")
        if self.min_keep < 1:
            raise ConfigError(f"min_keep must be >= 1, got {self.min_keep}")

    @classmethod
    def identity(cls, modality: str) -> "AugPolicy":
        return cls(modality, ())

    @classmethod
    def single(cls, op: str, min_keep: int = 32, probability: float = 1.0, **ranges) -> "AugPolicy":
        """Policy applying one operator, ranges given as ``name=(lo, hi)``."""
        modality = "point" if op in POINT_OPERATORS else "image"
        policy = cls(modality, (OperatorSpec(op, probability, {k: tuple(v) for k, v in ranges.items()}),), min_keep)
        policy.validate()
        return policy

    def chain_key(self) -> tuple:
        return tuple((spec.op, round(spec.probability, 6)) for spec in self.operators)

    def to_dict(self) -> dict:
        return {'modality': self.modality, 'min_keep': self.min_keep,
                'operators': [{'op': s.op, 'probability': s.probability,
                               'ranges': {k: list(v) for k, v in s.ranges.items()}} for s in self.operators]}

    @classmethod
    def from_dict(cls, data: dict) -> "AugPolicy":
        operators = tuple(OperatorSpec(o['op'], float(o['probability']),
                                       {k: (float(v[0]), float(v[1])) for k, v in o['ranges'].items()})
                          for o in data['operators'])
        policy = cls(data['modality'], operators, int(data.get('min_keep', 32)))
        policy.validate()
        return policy


@dataclass
class AugmentConfig:
    min_keep: int = 32
    n_backgrounds: int = 16
    point_augment: bool = True
    image_augment: bool = True


def _sample_policy(rng: np.random.Generator, modality: str, stage: int, min_keep: int) -> AugPolicy:
    names = POINT_OPERATORS if modality == "point" else IMAGE_OPERATORS
    p_lo, p_hi = STAGE_PROBABILITY[stage]
    operators = []
    for index in rng.permutation(len(names)):
        op = names[int(index)]
        if rng.random() > 0.75:
            continue
        ranges = {}
        for name, (lo, hi) in sorted(STAGE_RANGES[stage][op].items()):
            a, b = np.sort(rng.uniform(lo, hi, 2))
            # keep the sampled sub-range anchored at the stage upper bound half of the time
            ranges[name] = (float(a), float(hi if rng.random() < 0.5 else b))
        operators.append(OperatorSpec(op, float(rng.uniform(p_lo, p_hi)), ranges))
    return AugPolicy(modality, tuple(operators), min_keep)


def compose_policies(seed: int, stage: int, min_keep: int = 32) -> Tuple[AugPolicy, AugPolicy]:
    """Draw a (point, image) policy pair: heavy ranges for stage 1, light ones for stage 2."""
    if stage not in STAGE_RANGES:
        raise ConfigError(f"Curriculum stage must be 1 or 2, got {stage}")
    rng = make_rng(seed, 17, stage)
    point_policy = _sample_policy(rng, "point", stage, min_keep)
    image_policy = _sample_policy(rng, "image", stage, min_keep)
    point_policy.validate()
    image_policy.validate()
    return point_policy, image_policy
