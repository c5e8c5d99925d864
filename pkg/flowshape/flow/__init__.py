"""Rectified-flow latent generator: condition encoders, velocity model, sampler and mesh generation"""

from .config import FlowConfig
from .plucker import plucker_coords, plucker_encode, plucker_from_pixels
from .conditions import ConditionEncoder, ConditionSet, ConditionStreams, encode_conditions, make_condition_set
from .model import FlowModel
from .loss import FlowLoss, FlowSample, fm_loss, model_velocity
from .sampler import integrate, sample
from .generate import GeneratedObject, generate_object, sample_latent_set, write_sidecar
