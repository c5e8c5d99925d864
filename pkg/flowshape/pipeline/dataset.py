"""Training datasets for the two curriculum stages.

Layout of a dataset directory::

    manifest.json                   counts, seeds, VAE provenance, record ids
    scenes/scene_XXXXXX/            synthworld recording + render maps
    records/<record>.json           one object: scene, gt mesh, NDC frame, raw points, caption
    records/<record>.latent.{json,bin}  target latent means, one tensor per ladder length

Stage 1 scenes hold a single object, stage 2 scenes several objects whose
per-object crops keep their natural occlusion.
"""

import logging
import os
import sys
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import torch
from tqdm import tqdm

from flowshape.common.utils import make_rng, read_json, write_json
from flowshape.exceptions import DegenerateInputError, MissingAssetError
from flowshape.geometry.mesh import load_obj
from flowshape.geometry.ndc import NdcTransform, normalize_mesh, normalize_to_ndc
from flowshape.nn.checkpoint import load_checkpoint, save_checkpoint
from flowshape.pipeline.config import RunConfig
from flowshape.pipeline.models import load_vae
from flowshape.synthworld.recording import Recording, save_recording, simulate_capture
from flowshape.synthworld.render import RenderedView
from flowshape.synthworld.scene import SceneConfig, generate_scene
from flowshape.vae.loss import encoder_inputs
from flowshape.vae.model import VecSetVae

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


@dataclass
class DatasetRecord:
    record_id: str
    # paths relative to the dataset root
    scene_dir: str
    mesh_path: str
    latent_prefix: str
    object_id: int
    ndc: NdcTransform
    # raw detection points, before refinement and augmentation
    point_indices: np.ndarray
    caption: str = ""
    detected: bool = True

    def to_dict(self) -> dict:
        return {'record_id': self.record_id, 'scene_dir': self.scene_dir, 'mesh_path': self.mesh_path,
                'latent_prefix': self.latent_prefix, 'object_id': self.object_id, 'ndc': self.ndc.to_dict(),
                'point_indices': self.point_indices.tolist(), 'caption': self.caption, 'detected': self.detected}

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetRecord":
        return cls(data['record_id'], data['scene_dir'], data['mesh_path'], data['latent_prefix'],
                   int(data['object_id']), NdcTransform.from_dict(data['ndc']),
                   np.asarray(data['point_indices'], dtype=np.int64), data.get('caption', ""),
                   bool(data.get('detected', True)))

    def validate(self, root: str) -> None:
        for path in (self.scene_dir, self.mesh_path, self.latent_prefix + ".json", self.latent_prefix + ".bin"):
            if not os.path.exists(os.path.join(root, path)):
                raise MissingAssetError(f"Record {self.record_id} references missing {path}")

    def load_latents(self, root: str) -> Dict[int, np.ndarray]:
        """Target latent means keyed by latent length."""
        tensors, _ = load_checkpoint(os.path.join(root, self.latent_prefix))
        return {int(name[1:]): tensor.numpy() for name, tensor in tensors.items()}


def save_render_maps(views: List[RenderedView], root: str) -> None:
    """Depth (<f4) and object-id (<i4) maps of every frame, stacked in frame order."""
    np.stack([v.depth for v in views]).astype("<f4").tofile(os.path.join(root, "depth.bin"))
    np.stack([v.object_ids for v in views]).astype("<i4").tofile(os.path.join(root, "object_ids.bin"))


def load_render_maps(root: str, n_frames: int, height: int, width: int):
    try:
        depth = np.fromfile(os.path.join(root, "depth.bin"), dtype="<f4").astype(np.float64)
        ids = np.fromfile(os.path.join(root, "object_ids.bin"), dtype="<i4").astype(np.int64)
    except FileNotFoundError as err:
        raise MissingAssetError(f"Recording {root} has no render maps") from err
    return depth.reshape(n_frames, height, width), ids.reshape(n_frames, height, width)


def scene_seed(seed: int, stage: int, index: int) -> int:
    return int(make_rng(seed, 53, stage, index).integers(0, 2**31 - 1))


@torch.no_grad()
def encode_target(vae: VecSetVae, mesh_ndc, seed: int) -> Dict[str, torch.Tensor]:
    """Posterior means of a normalized mesh for every ladder length."""
    surface, edge = encoder_inputs(mesh_ndc, vae.config.n_surface, vae.config.n_edge, seed)
    dtype = next(vae.parameters()).dtype
    surface, edge = torch.as_tensor(surface, dtype=dtype), torch.as_tensor(edge, dtype=dtype)
    return {f"L{length}": vae.encode(surface, edge, length).mean[0]
            for length in vae.config.latent_lengths}


def _object_frame(recording: Recording, object_id: int, mesh):
    """NDC frame of an object: from its detection points, else from its mesh."""
    for instance in recording.instances:
        if instance.object_id == object_id and len(instance.point_indices):
            try:
                _, transform = normalize_to_ndc(recording.track.points[instance.point_indices])
                return transform, instance, True
            except DegenerateInputError:
                logger.debug("Object %d has degenerate detection points", object_id)
    _, transform = normalize_to_ndc(mesh.vertices)
    return transform, None, False


def build_dataset(config: RunConfig, stage: int, out_dir: str, vae_prefix: str, seed: int = 0) -> dict:
    """Simulate scenes, encode target latents and write a dataset directory.

    Returns:
        dict: The manifest
    Raises:
        CheckpointError: The VAE checkpoint cannot be loaded
    """
    vae, vae_manifest = load_vae(vae_prefix)
    if stage == 1:
        n_scenes, n_objects = config.dataset.stage1_scenes, 1
    else:
        n_scenes, n_objects = config.dataset.stage2_scenes, config.dataset.stage2_objects
    scene_config = SceneConfig(**{**config.scene.__dict__, 'min_objects': n_objects, 'max_objects': n_objects})

    os.makedirs(os.path.join(out_dir, "records"), exist_ok=True)
    records, seeds = [], []
    for index in tqdm(range(n_scenes), desc=f"stage {stage} scenes", disable=None):
        seed_i = scene_seed(seed, stage, index)
        seeds.append(seed_i)
        scene = generate_scene(seed_i, scene_config)
        recording = simulate_capture(scene, config.trajectory, config.slam, config.jitter, config.render, seed_i)
        scene_dir = os.path.join("scenes", f"scene_{index:06d}")
        save_recording(recording, os.path.join(out_dir, scene_dir), config.dataset.mesh_resolution)
        save_render_maps(recording.views, os.path.join(out_dir, scene_dir))

        for obj in scene.objects:
            record_id = f"s{stage}_{index:06d}_{obj.object_id}"
            mesh_path = os.path.join(scene_dir, "gt", f"{obj.object_id}.obj")
            mesh = load_obj(os.path.join(out_dir, mesh_path))
            transform, instance, detected = _object_frame(recording, obj.object_id, mesh)
            if not detected:
                logger.warning("Object %d of scene %d has no detection, record keeps images and caption only",
                               obj.object_id, seed_i)
            latent_prefix = os.path.join("records", record_id + ".latent")
            latents = encode_target(vae, normalize_mesh(mesh, transform), seed_i + obj.object_id)
            save_checkpoint(os.path.join(out_dir, latent_prefix), latents,
                            {'record_id': record_id, 'vae_sha256': vae_manifest['sha256']})
            caption = instance.caption if instance is not None else ""
            indices = instance.point_indices if instance is not None else np.zeros(0, dtype=np.int64)
            record = DatasetRecord(record_id, scene_dir, mesh_path, latent_prefix, obj.object_id, transform,
                                   np.asarray(indices, dtype=np.int64), caption, detected)
            write_json(os.path.join(out_dir, "records", record_id + ".json"), record.to_dict())
            records.append(record_id)

    manifest = {'stage': stage, 'seed': seed, 'n_scenes': n_scenes, 'n_records': len(records),
                'scene_seeds': seeds, 'records': records, 'vae_checkpoint': os.path.abspath(vae_prefix),
                'vae_sha256': vae_manifest['sha256'], 'latent_lengths': list(vae.config.latent_lengths)}
    write_json(os.path.join(out_dir, MANIFEST), manifest)
    return manifest


EVAL_SPLIT = 9


def generate_recordings(config: RunConfig, out_dir: str, n_scenes: int, seed: int = 0,
                        n_objects: int = None) -> List[str]:
    """Held-out scene recordings for ``infer`` and ``eval``; returns their directories."""
    scene_config = config.scene
    if n_objects is not None:
        scene_config = SceneConfig(**{**config.scene.__dict__, 'min_objects': n_objects, 'max_objects': n_objects})
    paths = []
    for index in tqdm(range(n_scenes), desc="recordings", disable=None):
        seed_i = scene_seed(seed, EVAL_SPLIT, index)
        scene = generate_scene(seed_i, scene_config)
        recording = simulate_capture(scene, config.trajectory, config.slam, config.jitter, config.render, seed_i)
        path = os.path.join(out_dir, f"scene_{index:06d}")
        save_recording(recording, path, config.dataset.mesh_resolution)
        paths.append(path)
    write_json(os.path.join(out_dir, MANIFEST), {'split': 'eval', 'seed': seed, 'n_scenes': n_scenes,
                                                 'scenes': [os.path.basename(p) for p in paths]})
    return paths


def load_dataset(root: str) -> List[DatasetRecord]:
    """Records of a dataset directory, validated against the files on disk.

    Raises:
        MissingAssetError: No manifest, or a record references a missing file
    """
    path = os.path.join(root, MANIFEST)
    if not os.path.isfile(path):
        raise MissingAssetError(f"No dataset manifest in {root}")
    manifest = read_json(path)
    records = [DatasetRecord.from_dict(read_json(os.path.join(root, "records", rid + ".json")))
               for rid in manifest['records']]
    for record in records:
        record.validate(root)
    return records


class DatasetBuilder:
    """Runner of the ``gen-data`` command."""

    def __init__(self, args, config: RunConfig):
        self.save_dir = args.out
        self.stage = args.stage
        self.vae = args.vae
        self.seed = args.seed
        self.n_scenes = args.scenes
        self.n_objects = args.objects
        self.config = config

        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG if args.verbose else logging.INFO)
        os.makedirs(self.save_dir, exist_ok=True)

    def run(self):
        if self.stage is None:
            n_scenes = self.n_scenes or self.config.dataset.stage1_scenes
            logger.info(f"Writing {n_scenes} held-out recordings to {self.save_dir}")
            paths = generate_recordings(self.config, self.save_dir, n_scenes, self.seed, self.n_objects)
            logger.info("Exiting...")
            return {'n_scenes': len(paths)}
        if self.vae is None:
            raise MissingAssetError("Building a training dataset needs --vae <checkpoint prefix>")
        if self.n_scenes:
            setattr(self.config.dataset, f"stage{self.stage}_scenes", self.n_scenes)
        if self.n_objects and self.stage == 2:
            self.config.dataset.stage2_objects = self.n_objects
        logger.info(f"Building stage {self.stage} dataset in {self.save_dir}")
        manifest = build_dataset(self.config, self.stage, self.save_dir, self.vae, self.seed)
        logger.info(f"Wrote {manifest['n_records']} records from {manifest['n_scenes']} scenes")
        logger.info("Exiting...")
        return manifest
