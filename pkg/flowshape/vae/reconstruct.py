import logging

import numpy as np
import torch

from flowshape.geometry.isosurface import SdfGrid, marching_cubes
from flowshape.geometry.mesh import TriMesh
from flowshape.geometry.ndc import normalize_mesh, normalize_to_ndc, rescale_mesh
from flowshape.vae.loss import encoder_inputs
from flowshape.vae.model import VecSetVae

log = logging.getLogger(__name__)

NDC_BOUNDS = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])


@torch.no_grad()
def decode_to_mesh(model: VecSetVae, z: torch.Tensor, resolution: int = 64, batch: int = 32768) -> TriMesh:
    """Evaluate the decoder on a regular grid over the NDC cube and extract the zero level set."""
    dtype = next(model.parameters()).dtype
    z = z.to(dtype)

    def evaluate(points: np.ndarray) -> np.ndarray:
        queries = torch.as_tensor(points, dtype=dtype)
        return model.decode_sdf(z, queries)[0].double().numpy()

    grid = SdfGrid.from_function(evaluate, (resolution,) * 3, NDC_BOUNDS, batch=batch)
    return marching_cubes(grid, 0.0)


@torch.no_grad()
def reconstruct(model: VecSetVae, mesh: TriMesh, resolution: int = 64, length: int = None, seed: int = 0) -> TriMesh:
    """VAE round trip of a metric mesh: NDC samples, posterior mean, decoded grid, back to meters.

    Returns an empty mesh (with a warning) when the decoded field has no zero crossing.
    """
    model.eval()
    _, transform = normalize_to_ndc(mesh.vertices)
    surface, edge = encoder_inputs(normalize_mesh(mesh, transform), model.config.n_surface, model.config.n_edge, seed)
    dtype = next(model.parameters()).dtype
    posterior = model.encode(torch.as_tensor(surface, dtype=dtype), torch.as_tensor(edge, dtype=dtype), length)
    recon = decode_to_mesh(model, posterior.mean, resolution)
    if recon.is_empty:
        log.warning("Reconstruction produced an empty isosurface")
        return recon
    return rescale_mesh(recon, transform)
