"""Conditional shape generation: sample latents, decode an SDF grid, mesh it and restore metric scale."""

import logging
from dataclasses import dataclass, field

import torch

from flowshape.common.utils import write_json
from flowshape.flow.conditions import ConditionSet
from flowshape.flow.model import FlowModel
from flowshape.flow.sampler import sample
from flowshape.geometry.mesh import TriMesh
from flowshape.geometry.ndc import rescale_mesh
from flowshape.vae.model import LatentSet, VecSetVae
from flowshape.vae.reconstruct import decode_to_mesh

log = logging.getLogger(__name__)


@dataclass
class GeneratedObject:
    mesh: TriMesh
    ndc_mesh: TriMesh
    latent: LatentSet
    status: str = "ok"
    provenance: dict = field(default_factory=dict)


@torch.no_grad()
def sample_latent_set(flow: FlowModel, conditions: ConditionSet, length: int, steps: int, seed: int,
                      method: str = None, unconditional: bool = False, use_masks: bool = True) -> LatentSet:
    flow.eval()
    streams = flow.conditions([conditions], unconditional=unconditional, use_masks=use_masks)
    dtype = next(flow.parameters()).dtype
    z = sample(lambda z_t, t: flow(z_t, t, streams), (1, length, flow.config.latent_dim), steps, seed,
               method or flow.config.sampler, dtype)
    return LatentSet(z)


def generate_object(vae: VecSetVae, flow: FlowModel, conditions: ConditionSet, resolution: int = 64,
                    steps: int = None, seed: int = 0, length: int = None, unconditional: bool = False,
                    use_masks: bool = True) -> GeneratedObject:
    """Generate a metric mesh for one condition set.

    An empty isosurface is returned as an empty mesh with status ``empty_isosurface``.
    """
    steps = steps or flow.config.steps
    length = length or vae.config.max_length
    latent = sample_latent_set(flow, conditions, length, steps, seed, unconditional=unconditional,
                               use_masks=use_masks)
    ndc_mesh = decode_to_mesh(vae, latent.tokens, resolution)
    provenance = {'steps': steps, 'seed': seed, 'sampler': flow.config.sampler, 'latent_length': length,
                  'resolution': resolution, 'ndc': conditions.ndc.to_dict(), 'unconditional': unconditional}
    if ndc_mesh.is_empty:
        log.warning("Generated field has no zero crossing (seed %d): empty mesh", seed)
        return GeneratedObject(ndc_mesh, ndc_mesh, latent, "empty_isosurface", provenance)
    return GeneratedObject(rescale_mesh(ndc_mesh, conditions.ndc), ndc_mesh, latent, "ok", provenance)


def write_sidecar(path: str, generated: GeneratedObject, **extra) -> None:
    write_json(path, {'status': generated.status, **generated.provenance, **extra})
