"""Checkpoint files: a JSON manifest of named tensors next to one little-endian float32 blob.

``<prefix>.json``::

    {"format": "flowshape-checkpoint", "version": 1, "sha256": <blob digest>,
     "tensors": [{"name", "shape", "offset", "count"}, ...], "metadata": {...}}

``<prefix>.bin`` holds the tensors back to back in manifest order.
"""

import hashlib
import logging
import os
from typing import Dict, Tuple

import numpy as np
import torch

from flowshape.common.utils import read_json, write_json
from flowshape.exceptions import CheckpointError

log = logging.getLogger(__name__)

FORMAT_NAME = "flowshape-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(prefix: str, tensors: Dict[str, torch.Tensor], metadata: dict = None) -> str:
    """Write ``prefix.json`` and ``prefix.bin``; returns the blob's SHA-256."""
    entries, chunks, offset = [], [], 0
    for name in sorted(tensors):
        array = tensors[name].detach().cpu().numpy().astype("<f4").reshape(-1)
        entries.append({'name': name, 'shape': list(tensors[name].shape), 'offset': offset, 'count': int(array.size)})
        chunks.append(array.tobytes())
        offset += array.size
    blob = b"".join(chunks)
    digest = hashlib.sha256(blob).hexdigest()
    os.makedirs(os.path.dirname(os.path.abspath(prefix)), exist_ok=True)
    with open(prefix + ".bin", "wb") as file:
        file.write(blob)
    write_json(prefix + ".json", {'format': FORMAT_NAME, 'version': FORMAT_VERSION, 'sha256': digest,
                                  'tensors': entries, 'metadata': metadata or {}})
    log.debug("Saved checkpoint %s (%d tensors, %s)", prefix, len(entries), digest[:12])
    return digest


def load_checkpoint(prefix: str) -> Tuple[Dict[str, torch.Tensor], dict]:
    """Read a checkpoint written by ``save_checkpoint``.

    Returns:
        tuple: Named float32 tensors and the manifest (``metadata``, ``sha256`` ...)
    Raises:
        CheckpointError: Files missing, wrong format or version, or digest mismatch
    """
    try:
        manifest = read_json(prefix + ".json")
        with open(prefix + ".bin", "rb") as file:
            blob = file.read()
    except (OSError, ValueError) as err:
        raise CheckpointError(f"Cannot read checkpoint {prefix}: {err}") from err
    if manifest.get('format') != FORMAT_NAME or manifest.get('version') != FORMAT_VERSION:
        raise CheckpointError(f"Checkpoint {prefix} has format {manifest.get('format')} "
                              f"version {manifest.get('version')}, expected {FORMAT_NAME} v{FORMAT_VERSION}")
    if hashlib.sha256(blob).hexdigest() != manifest['sha256']:
        raise CheckpointError(f"Checkpoint {prefix} is corrupt: digest mismatch")
    data = np.frombuffer(blob, dtype="<f4")
    tensors = {}
    for entry in manifest['tensors']:
        chunk = data[entry['offset']:entry['offset'] + entry['count']]
        tensors[entry['name']] = torch.from_numpy(chunk.astype(np.float32).reshape(entry['shape']))
    return tensors, manifest


def save_module(prefix: str, module: torch.nn.Module, metadata: dict = None) -> str:
    return save_checkpoint(prefix, dict(module.state_dict()), metadata)


def load_module(prefix: str, module: torch.nn.Module) -> dict:
    """Load weights into ``module``; returns the manifest."""
    tensors, manifest = load_checkpoint(prefix)
    try:
        module.load_state_dict(tensors, strict=True)
    except RuntimeError as err:
        raise CheckpointError(f"Checkpoint {prefix} does not match the model: {err}") from err
    return manifest
