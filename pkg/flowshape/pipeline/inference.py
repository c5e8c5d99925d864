"""Object-centric reconstruction of a recorded sequence.

For every detected instance: refine its points, pick representative frames,
project point masks, tokenize the caption, normalize, sample a latent set,
decode, and map the mesh back to the recording's metric frame. The scene mesh
is the plain union of the object meshes.

Output layout::

    objects/<id>.obj     metric object mesh
    objects/<id>.json    sidecar: status, sampling provenance, model digests
    scene.obj            union of all generated objects
    inference.json       per-instance summary, skipped instances with reasons
"""

import logging
import os
import sys
from dataclasses import asdict
from typing import List

import numpy as np

from flowshape.common.utils import make_rng, write_json
from flowshape.exceptions import VisibilityError
from flowshape.flow.conditions import make_condition_set
from flowshape.flow.generate import generate_object, write_sidecar
from flowshape.flow.model import FlowModel
from flowshape.geometry.mesh import concatenate, save_obj
from flowshape.pipeline.config import InferenceConfig, RunConfig
from flowshape.pipeline.frames import select_frames
from flowshape.pipeline.models import load_flow, load_vae
from flowshape.pipeline.refine import refine_instance_points
from flowshape.synthworld.oracles import project_point_mask, tokenize_caption
from flowshape.synthworld.recording import RECORDING_FILES, load_recording
from flowshape.vae.model import VecSetVae

logger = logging.getLogger(__name__)


def object_seed(seed: int, object_id: int) -> int:
    return int(make_rng(seed, 83, object_id).integers(0, 2**31 - 1))


def is_recording(path: str) -> bool:
    return all(os.path.isfile(os.path.join(path, name)) for name in RECORDING_FILES)


def list_recordings(path: str) -> List[str]:
    """``path`` itself if it is a recording, else its recording sub-directories."""
    if is_recording(path):
        return [path]
    return [os.path.join(path, name) for name in sorted(os.listdir(path)) if is_recording(os.path.join(path, name))]


def infer_sequence(recording_dir: str, vae: VecSetVae, flow: FlowModel, options: InferenceConfig, out_dir: str,
                   seed: int = 0, provenance: dict = None) -> dict:
    """Generate one metric mesh per detected instance of a recording.

    Instances with fewer than ``options.min_points`` points, or whose points are
    seen in no frame while images are requested, are skipped with a logged reason.

    Returns:
        dict: Summary of generated and skipped instances
    """
    recording = load_recording(recording_dir)
    track = recording.track
    objects_dir = os.path.join(out_dir, "objects")
    os.makedirs(objects_dir, exist_ok=True)
    provenance = provenance or {}

    meshes, generated, skipped = [], [], []
    for instance in sorted(recording.instances, key=lambda inst: inst.object_id):
        oid = instance.object_id
        if len(instance.point_indices) < options.min_points:
            reason = f"{len(instance.point_indices)} points < min_points {options.min_points}"
            logger.warning(f"Skipping object {oid} of {recording_dir}: {reason}")
            skipped.append({'id': oid, 'reason': reason})
            continue
        refined = refine_instance_points(instance, track, options.knn, options.outlier_std, options.min_points)

        frame_ids: List[int] = []
        if options.use_images:
            try:
                frame_ids = select_frames(track, refined, flow.config.inference_views)
            except VisibilityError as err:
                logger.warning(f"Skipping object {oid} of {recording_dir}: {err}")
                skipped.append({'id': oid, 'reason': str(err)})
                continue
        frames = [recording.frames[k] for k in frame_ids]
        masks = [project_point_mask(track.points[np.intersect1d(refined, track.visibility[k])], f.camera)
                 for k, f in zip(frame_ids, frames)]
        conditions = make_condition_set(track.points[refined], [f.image for f in frames],
                                        [f.camera for f in frames], masks, tokenize_caption(instance.caption))
        conditions = conditions.without(points=not options.use_points, text=not options.use_text)

        seed_i = object_seed(seed, oid)
        result = generate_object(vae, flow, conditions, options.resolution, options.steps, seed_i,
                                 options.latent_length, options.unconditional, options.use_masks)
        save_obj(result.mesh, os.path.join(objects_dir, f"{oid}.obj"))
        write_sidecar(os.path.join(objects_dir, f"{oid}.json"), result, object_id=oid, caption=instance.caption,
                      box=instance.box.to_dict(), n_points=int(len(instance.point_indices)),
                      n_refined=int(len(refined)), frame_ids=[int(k) for k in frame_ids],
                      options=asdict(options), recording=os.path.abspath(recording_dir), **provenance)
        logger.info(f"Object {oid}: {result.status}, {len(result.mesh.faces)} faces from {len(refined)} points "
                    f"and {len(frame_ids)} frames")
        generated.append({'id': oid, 'status': result.status})
        if not result.mesh.is_empty:
            meshes.append(result.mesh)

    save_obj(concatenate(meshes), os.path.join(out_dir, "scene.obj"))
    summary = {'recording': os.path.abspath(recording_dir), 'seed': seed, 'generated': generated,
               'skipped': skipped}
    write_json(os.path.join(out_dir, "inference.json"), summary)
    return summary


class SequenceInference:
    """Runner of the ``infer`` command.

    ``args.recording`` is a recording directory or a directory of recordings;
    the latter produces one output sub-directory per recording.
    """

    def __init__(self, args, config: RunConfig):
        self.recording = args.recording
        self.save_dir = args.out
        self.seed = args.seed
        self.options = config.inference
        self.vae_prefix, self.flow_prefix = args.vae, args.flow

        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG if args.verbose else logging.INFO)
        os.makedirs(self.save_dir, exist_ok=True)

    def run(self) -> List[dict]:
        logger.info("Loading checkpoints")
        vae, vae_manifest = load_vae(self.vae_prefix)
        flow, flow_manifest = load_flow(self.flow_prefix)
        provenance = {'vae_sha256': vae_manifest['sha256'], 'flow_sha256': flow_manifest['sha256']}

        summaries = []
        paths = list_recordings(self.recording)
        for path in paths:
            out_dir = self.save_dir if len(paths) == 1 and path == self.recording \
                else os.path.join(self.save_dir, os.path.basename(path))
            logger.info(f"Reconstructing {path}")
            summaries.append(infer_sequence(path, vae, flow, self.options, out_dir, self.seed, provenance))
        logger.info("Exiting...")
        return summaries
