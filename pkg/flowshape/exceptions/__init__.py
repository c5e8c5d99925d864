"""This file contains the custom exceptions defined for the flowshape toolkit."""


class FlowshapeError(Exception):
    """Base class of all flowshape errors"""


class EmptyMeshError(FlowshapeError):
    """Operation needs a mesh with at least one face"""


class DegenerateInputError(FlowshapeError):
    """Input geometry has no extent (e.g. all points coincident)"""


class InvalidShapeSpecError(FlowshapeError):
    """Shape parameters or pose violate their invariants"""


class PlacementError(FlowshapeError):
    """Scene generation could not place all objects"""


class VisibilityError(FlowshapeError):
    """Object is not visible in any frame"""


class ShapeMismatchError(FlowshapeError):
    """Tensor shapes do not agree"""


class NonFiniteGradientError(FlowshapeError):
    """A gradient contains NaN or Inf"""


class NonFiniteStateError(FlowshapeError):
    """Sampler state became NaN or Inf"""


class NonFiniteLossError(FlowshapeError):
    """Training loss became NaN or Inf"""


class MissingAssetError(FlowshapeError):
    """A required augmentation asset is missing"""


class ConditionError(FlowshapeError):
    """Condition set is invalid or empty"""


class CheckpointError(FlowshapeError):
    """Checkpoint is missing, corrupt or incompatible"""


class ConfigError(FlowshapeError):
    """Configuration value or key is invalid"""
