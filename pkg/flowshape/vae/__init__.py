"""Latent-set shape VAE with an SDF decoder"""

from .model import LOGVAR_RANGE, LatentPosterior, LatentSet, VaeConfig, VecSetVae, fourier_features, sample_latent
from .loss import ShapeSample, VaeLoss, encoder_inputs, make_shape_sample, sample_sdf_queries, vae_loss
from .reconstruct import decode_to_mesh, reconstruct
