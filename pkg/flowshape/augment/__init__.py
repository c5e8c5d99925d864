"""Compositional augmentation of point and image conditions"""

from .policy import (IMAGE_OPERATORS, POINT_OPERATORS, STAGE_RANGES, AugmentConfig, AugPolicy, OperatorSpec,
                     compose_policies)
from .points import AugmentedPoints, augment_points
from .images import AugmentedImage, ImageAssets, augment_image, degrade_resolution
from .backgrounds import make_background, make_backgrounds
