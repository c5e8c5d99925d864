"""Model checkpoints that carry their own architecture config."""

import logging
from dataclasses import asdict
from typing import Tuple

from flowshape.exceptions import CheckpointError
from flowshape.flow.config import FlowConfig
from flowshape.flow.model import FlowModel
from flowshape.nn.checkpoint import load_checkpoint, save_module
from flowshape.pipeline.config import config_from_dict
from flowshape.vae.model import VaeConfig, VecSetVae

log = logging.getLogger(__name__)


def save_model(prefix: str, model, step: int = 0, **metadata) -> str:
    """Save a VecSetVae or FlowModel with its config; returns the weight digest."""
    kind = "vae" if isinstance(model, VecSetVae) else "flow"
    return save_module(prefix, model, {'kind': kind, 'config': asdict(model.config), 'step': int(step), **metadata})


def _load(prefix: str, kind: str, config_cls, model_cls):
    tensors, manifest = load_checkpoint(prefix)
    metadata = manifest.get('metadata', {})
    if metadata.get('kind') != kind:
        raise CheckpointError(f"Checkpoint {prefix} holds a \"{metadata.get('kind')}\" model, expected \"{kind}\"")
    model = model_cls(config_from_dict(config_cls, metadata['config'], kind))
    try:
        model.load_state_dict(tensors, strict=True)
    except RuntimeError as err:
        raise CheckpointError(f"Checkpoint {prefix} does not match its config: {err}") from err
    model.eval()
    log.debug("Loaded %s checkpoint %s (step %d)", kind, prefix, metadata.get('step', 0))
    return model, manifest


def load_vae(prefix: str) -> Tuple[VecSetVae, dict]:
    """VAE and checkpoint manifest.

    Raises:
        CheckpointError: Missing, corrupt or not a VAE checkpoint
    """
    return _load(prefix, "vae", VaeConfig, VecSetVae)


def load_flow(prefix: str) -> Tuple[FlowModel, dict]:
    return _load(prefix, "flow", FlowConfig, FlowModel)
