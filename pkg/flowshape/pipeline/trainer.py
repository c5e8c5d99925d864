"""VAE and flow training loops with CSV loss logs, periodic checkpoints and exact resume.

Checkpoints live in ``<out>/checkpoints``: ``<name>-<step>`` snapshots,
``<name>-last`` and the optimizer state ``<name>-last.optim``. A batch depends
only on (seed, step), so resuming from ``<name>-last`` replays the same loss
trajectory.
"""

import csv
import logging
import os
import sys
from typing import Dict, List, Tuple

import numpy as np
import torch
from tqdm import tqdm

from flowshape.augment.backgrounds import make_backgrounds
from flowshape.augment.images import ImageAssets, augment_image
from flowshape.augment.points import augment_points
from flowshape.augment.policy import AugPolicy, compose_policies
from flowshape.common.utils import make_rng, process_rss_mb, read_json
from flowshape.exceptions import NonFiniteLossError
from flowshape.flow.conditions import ConditionSet
from flowshape.flow.loss import fm_loss, model_velocity
from flowshape.flow.model import FlowModel
from flowshape.geometry.ndc import NdcTransform, normalize_to_ndc
from flowshape.geometry.sdf import mesh_shape
from flowshape.nn.checkpoint import load_checkpoint, save_checkpoint
from flowshape.nn.optim import CheckedAdam
from flowshape.pipeline.config import RunConfig, TrainConfig, latent_length_at
from flowshape.pipeline.dataset import MANIFEST, DatasetRecord, load_dataset, load_render_maps
from flowshape.pipeline.frames import visible_counts
from flowshape.pipeline.models import load_flow, save_model
from flowshape.synthworld.oracles import project_point_mask, tokenize_caption
from flowshape.synthworld.recording import load_recording
from flowshape.synthworld.scene import random_primitive
from flowshape.vae.loss import make_shape_sample, vae_loss
from flowshape.vae.model import VecSetVae, sample_latent

logger = logging.getLogger(__name__)


class LossLog:
    """Append-only CSV of training rows; reopening at ``start`` drops rows from ``start`` on."""

    def __init__(self, path: str, fields: List[str], start: int = 0):
        self.path, self.fields = path, fields
        rows = []
        if start > 0 and os.path.isfile(path):
            with open(path, newline="") as file:
                rows = [row for row in csv.DictReader(file) if int(row['step']) < start]
        with open(path, "w", newline="") as file:
            writer = csv.DictWriter(file, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)

    def append(self, row: dict) -> None:
        with open(self.path, "a", newline="") as file:
            csv.DictWriter(file, fieldnames=self.fields).writerow(row)


def read_loss_log(path: str) -> List[dict]:
    with open(path, newline="") as file:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(file)]


class _Trainer:
    """Shared step loop; subclasses provide the model, the optimizer and ``batch_loss``."""

    name = "model"
    fields = ["step", "latent_length", "loss", "rss_mb"]

    def __init__(self, args, train_config: TrainConfig):
        self.save_dir = args.out
        self.resume = getattr(args, "resume", False)
        self.seed = args.seed
        self.train_config = train_config

        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG if args.verbose else logging.INFO)
        os.makedirs(os.path.join(self.save_dir, "checkpoints"), exist_ok=True)
        self.model = None
        self.optimizer = None

    def prefix(self, tag) -> str:
        tag = f"{tag:06d}" if isinstance(tag, int) else tag
        return os.path.join(self.save_dir, "checkpoints", f"{self.name}-{tag}")

    def metadata(self) -> dict:
        return {}

    def save(self, step: int) -> str:
        save_model(self.prefix(step), self.model, step, **self.metadata())
        save_model(self.prefix("last"), self.model, step, **self.metadata())
        save_checkpoint(self.prefix("last") + ".optim", self.optimizer.state_tensors(),
                        {'step': step, 'adam_step': self.optimizer.state.step})
        logger.debug("Checkpoint at step %d", step)
        return self.prefix("last")

    def restore(self) -> int:
        tensors, manifest = load_checkpoint(self.prefix("last"))
        self.model.load_state_dict(tensors, strict=True)
        state, optim_manifest = load_checkpoint(self.prefix("last") + ".optim")
        self.optimizer.load_state_tensors(optim_manifest['metadata']['adam_step'], state)
        step = int(manifest['metadata']['step'])
        logger.info(f"Resuming from step {step}")
        return step

    def batch_loss(self, step: int) -> Tuple[torch.Tensor, Dict[str, float]]:
        raise NotImplementedError

    def run(self) -> str:
        """Train to ``steps`` and return the final checkpoint prefix.

        Raises:
            NonFiniteLossError: The loss became NaN or Inf, earlier checkpoints are kept
        """
        cfg = self.train_config
        start = self.restore() if self.resume else 0
        log_path = os.path.join(self.save_dir, f"{self.name}_loss.csv")
        loss_log = LossLog(log_path, self.fields, start)
        logger.info(f"Training {self.name} for {cfg.steps} steps, loss log {log_path}")
        saved_at = start
        self.model.train()
        for step in tqdm(range(start, cfg.steps), initial=start, total=cfg.steps, desc=self.name, disable=None):
            self.optimizer.zero_grad()
            loss, extras = self.batch_loss(step)
            if not bool(torch.isfinite(loss)):
                logger.error(f"Non-finite loss at step {step}, last checkpoint kept at step {saved_at}")
                raise NonFiniteLossError(f"{self.name} loss is {float(loss)} at step {step}")
            loss.backward()
            self.optimizer.step()
            if step % cfg.log_every == 0 or step == cfg.steps - 1:
                loss_log.append({'step': step, 'loss': float(loss), 'rss_mb': round(process_rss_mb(), 1),
                                 **extras})
            if (step + 1) % cfg.checkpoint_every == 0:
                self.save(step + 1)
                saved_at = step + 1
        if saved_at != cfg.steps:
            self.save(cfg.steps)
        logger.info("Exiting...")
        return self.prefix("last")


class VaeTrainer(_Trainer):
    """Trains the shape VAE on random primitives under NDC scale jitter."""

    name = "vae"
    fields = ["step", "latent_length", "loss", "mse", "kl", "rss_mb"]

    def __init__(self, args, config: RunConfig):
        super().__init__(args, config.vae_train)
        self.config = config
        self.vae_config = config.vae
        torch.manual_seed(self.seed)
        self.model = VecSetVae(config.vae)
        self.optimizer = CheckedAdam(self.model.named_parameters(), self.train_config.lr)
        self.shapes = self._shape_pool()

    def _shape_pool(self):
        mix = self.config.scene.primitive_mix
        kinds = sorted(k for k, w in mix.items() if w > 0)
        weights = np.array([mix[k] for k in kinds], dtype=np.float64)
        pool = []
        logger.info(f"Meshing {self.config.dataset.vae_shapes} training primitives")
        for i in range(self.config.dataset.vae_shapes):
            rng = make_rng(self.seed, 71, i)
            kind = kinds[int(rng.choice(len(kinds), p=weights / weights.sum()))]
            shape = random_primitive(kind, rng, tuple(self.config.scene.size_range))
            mesh = mesh_shape(shape, self.config.dataset.mesh_resolution)
            _, transform = normalize_to_ndc(mesh.vertices)
            pool.append((shape, mesh, transform))
        return pool

    def batch_loss(self, step: int):
        rng = make_rng(self.seed, 73, step)
        length = int(rng.choice(self.vae_config.latent_lengths))
        step_seed = int(rng.integers(0, 2**31 - 1))
        samples = []
        for j, index in enumerate(rng.choice(len(self.shapes), self.train_config.batch_size)):
            shape, mesh, base = self.shapes[int(index)]
            shrink = rng.uniform(*self.vae_config.scale_jitter)
            transform = NdcTransform(base.center, base.scale / shrink)
            samples.append(make_shape_sample(shape, mesh, transform, self.vae_config, step_seed + j))

        def stack(name):
            return torch.as_tensor(np.stack([getattr(s, name) for s in samples]), dtype=torch.float32)

        posterior = self.model.encode(stack("surface"), stack("edge"), length)
        z = sample_latent(posterior, step_seed).tokens
        loss = vae_loss(self.model, posterior, z, stack("queries"), stack("sdf"), self.vae_config.beta)
        return loss.total, {'latent_length': length, 'mse': float(loss.mse), 'kl': float(loss.kl)}


class FlowTrainer(_Trainer):
    """Trains the flow model on a stage 1 or stage 2 dataset.

    Stage 2 starts from ``args.init`` (a stage 1 checkpoint) unless
    ``args.single_stage`` asks for training the crops from scratch.
    """

    name = "flow"
    fields = ["step", "stage", "latent_length", "loss", "rss_mb"]

    def __init__(self, args, config: RunConfig):
        train_config = TrainConfig(**{**config.flow_train.__dict__, 'stage': args.stage})
        if getattr(args, "no_point_aug", False):
            train_config.augment_points = False
        if getattr(args, "no_image_aug", False):
            train_config.augment_images = False
        super().__init__(args, train_config)
        self.config = config
        self.data_dir = args.data
        self.records = load_dataset(self.data_dir)
        self.dataset_manifest = read_json(os.path.join(self.data_dir, MANIFEST))
        train_config.validate(self.dataset_manifest['latent_lengths'])

        torch.manual_seed(self.seed)
        self.model = FlowModel(config.flow)
        init = getattr(args, "init", None)
        if init and not getattr(args, "single_stage", False):
            stage1, _ = load_flow(init)
            self.model.load_state_dict(stage1.state_dict(), strict=True)
            logger.info(f"Initialised from {init}")
        elif args.stage == 2:
            logger.warning("Stage 2 training starts from random weights")
        self.optimizer = CheckedAdam(self.model.named_parameters(), train_config.lr)
        self._scenes, self._latents = {}, {}
        self.backgrounds = None

    def metadata(self) -> dict:
        return {'stage': self.train_config.stage, 'vae_sha256': self.dataset_manifest.get('vae_sha256', "")}

    def _scene(self, scene_dir: str):
        if scene_dir not in self._scenes:
            root = os.path.join(self.data_dir, scene_dir)
            recording = load_recording(root)
            h, w = recording.frames[0].image.shape
            depth, ids = load_render_maps(root, len(recording.frames), h, w)
            self._scenes[scene_dir] = (recording, depth, ids)
            if self.backgrounds is None:
                self.backgrounds = make_backgrounds(self.config.augment.n_backgrounds, (h, w), self.seed)
        return self._scenes[scene_dir]

    def _latent(self, record: DatasetRecord, length: int) -> np.ndarray:
        if record.record_id not in self._latents:
            self._latents[record.record_id] = record.load_latents(self.data_dir)
        return self._latents[record.record_id][length]

    def training_conditions(self, record: DatasetRecord, seed: int, point_policy: AugPolicy,
                            image_policy: AugPolicy, rng: np.random.Generator) -> ConditionSet:
        """Augmented condition set of a record, expressed in the record's fixed NDC frame."""
        recording, depth, ids = self._scene(record.scene_dir)
        track = recording.track
        indices = record.point_indices
        if record.detected and len(indices):
            local_visibility = [np.flatnonzero(np.isin(indices, frame)) for frame in track.visibility]
            augmented = augment_points(track.points[indices], seed, point_policy, local_visibility)
            kept = indices[augmented.indices]
            points = np.clip(record.ndc.apply(augmented.points), -1.0, 1.0)
            counts = visible_counts(track, kept)
        else:
            kept, points = np.zeros(0, dtype=np.int64), np.zeros((0, 3))
            counts = (ids == record.object_id).reshape(len(ids), -1).sum(axis=1)

        visible = np.flatnonzero(counts > 0)
        n_views = min(self.config.flow.train_views, len(visible))
        chosen = np.sort(rng.choice(visible, n_views, replace=False)) if n_views else []
        frames, cameras, masks = [], [], []
        for k in chosen:
            frame = recording.frames[int(k)]
            seen = np.intersect1d(kept, track.visibility[int(k)])
            masks.append(project_point_mask(track.points[seen], frame.camera))
            assets = ImageAssets((ids[k] >= 0).astype(np.float64), depth[k], self.backgrounds)
            frames.append(augment_image(frame.image, seed * 4099 + int(k), image_policy, assets).image)
            cameras.append(frame.camera)
        return ConditionSet(points, record.ndc, frames, cameras, masks, tokenize_caption(record.caption))

    def batch_loss(self, step: int):
        cfg = self.train_config
        rng = make_rng(self.seed, 61, step)
        length = latent_length_at(cfg.latent_schedule, step)
        picks = rng.choice(len(self.records), cfg.batch_size, replace=len(self.records) < cfg.batch_size)
        step_seed = int(rng.integers(0, 2**31 - 1))
        point_policy, image_policy = compose_policies(step_seed, cfg.stage, self.config.augment.min_keep)
        if not cfg.augment_points:
            point_policy = AugPolicy.identity("point")
        if not cfg.augment_images:
            image_policy = AugPolicy.identity("image")

        batch, drops, z0 = [], [], []
        for j, index in enumerate(picks):
            record = self.records[int(index)]
            conditions = self.training_conditions(record, step_seed + j, point_policy, image_policy, rng)
            batch.append(conditions)
            drops.append(bool(rng.random() < self.config.flow.condition_dropout) or conditions.is_empty)
            z0.append(self._latent(record, length))
        streams = self.model.conditions(batch, unconditional=drops)
        z0 = torch.as_tensor(np.stack(z0), dtype=torch.float32)
        result = fm_loss(model_velocity(self.model, streams), z0, step_seed, t_sampling=self.config.flow.t_sampling)
        return result.loss, {'stage': cfg.stage, 'latent_length': length}
