"""VAE objective and SDF supervision samples."""

from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from flowshape.common.utils import make_rng
from flowshape.geometry.ndc import NdcTransform, normalize_mesh
from flowshape.geometry.sampling import sample_edge_salient, sample_surface_uniform
from flowshape.geometry.mesh import TriMesh
from flowshape.geometry.sdf import ShapeSpec, sdf_eval
from flowshape.vae.model import LatentPosterior, VaeConfig


@dataclass
class VaeLoss:
    total: Tensor
    mse: Tensor
    kl: Tensor


def vae_loss_from_prediction(pred_sdf: Tensor, gt_sdf: Tensor, posterior: LatentPosterior, beta: float) -> VaeLoss:
    """Mean squared SDF error plus ``beta`` times the batch-mean KL."""
    mse = torch.mean((pred_sdf - gt_sdf) ** 2)
    kl = posterior.kl().mean()
    return VaeLoss(mse + beta * kl, mse, kl)


def vae_loss(model, posterior: LatentPosterior, z: Tensor, queries: Tensor, gt_sdf: Tensor, beta: float) -> VaeLoss:
    return vae_loss_from_prediction(model.decode_sdf(z, queries), gt_sdf, posterior, beta)


@dataclass
class ShapeSample:
    """Encoder inputs and SDF supervision for one shape, all in NDC."""
    surface: np.ndarray
    edge: np.ndarray
    queries: np.ndarray
    sdf: np.ndarray


def encoder_inputs(mesh: TriMesh, n_surface: int, n_edge: int, seed: int):
    """(N, 6) surface and (M, 6) edge point+normal arrays."""
    surface = sample_surface_uniform(mesh, n_surface, seed)
    edge = sample_edge_salient(mesh, n_edge, seed=seed)
    return (np.concatenate([surface.points, surface.normals], axis=1),
            np.concatenate([edge.points, edge.normals], axis=1))


def sample_sdf_queries(shape: ShapeSpec, transform: NdcTransform, mesh_ndc: TriMesh, config: VaeConfig,
                       seed: int):
    """Uniform-in-cube and near-surface queries with exact SDF values in NDC units."""
    rng = make_rng(seed, 37)
    n_near = int(round(config.near_surface_fraction * config.n_queries))
    uniform = rng.uniform(-1.0, 1.0, (config.n_queries - n_near, 3))
    near = sample_surface_uniform(mesh_ndc, max(n_near, 1), seed + 1).points[:n_near]
    near = near + rng.normal(0.0, config.near_surface_sigma, near.shape)
    queries = np.clip(np.concatenate([uniform, near]), -1.0, 1.0)
    sdf = sdf_eval(shape, transform.invert(queries)) / transform.scale
    return queries, sdf


def make_shape_sample(shape: ShapeSpec, mesh: TriMesh, transform: NdcTransform, config: VaeConfig,
                      seed: int) -> ShapeSample:
    """Training sample for a metric shape under the metric-to-NDC ``transform``."""
    mesh_ndc = normalize_mesh(mesh, transform)
    surface, edge = encoder_inputs(mesh_ndc, config.n_surface, config.n_edge, seed)
    queries, sdf = sample_sdf_queries(shape, transform, mesh_ndc, config, seed)
    return ShapeSample(surface, edge, queries, sdf)
