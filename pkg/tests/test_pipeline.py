import argparse
import os

import numpy as np
import pytest
import torch

from flowshape.cli import get_parser, main, resolve_config
from flowshape.exceptions import CheckpointError, ConfigError, VisibilityError
from flowshape.flow.model import FlowModel
from flowshape.geometry import ShapeSpec, mesh_shape, save_obj
from flowshape.metrics.report import read_metrics_csv
from flowshape.pipeline import (FlowTrainer, RunConfig, VaeTrainer, build_dataset, evaluate, generate_recordings,
                                infer_sequence, latent_length_at, load_dataset, load_flow, load_vae,
                                read_loss_log, refine_instance_points, save_model, select_frames)
from flowshape.synthworld.oracles import ObjectInstance, OrientedBox
from flowshape.synthworld.recording import load_recording
from flowshape.synthworld.slam import PointCloudTrack
from flowshape.visualization.training_curves import LossLogData, smooth


def _args(out, **kwargs):
    return argparse.Namespace(out=str(out), seed=0, verbose=False, resume=False, **kwargs)


def _track(counts, n_points=10):
    """Track whose frame k sees the first ``counts[k]`` points."""
    visibility = [np.arange(c, dtype=np.int64) for c in counts]
    return PointCloudTrack(np.zeros((n_points, 3)), visibility, np.zeros(n_points, dtype=np.int64))


def _fibonacci_sphere(n, radius):
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + 5 ** 0.5) * i
    return radius * np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def _instance(points, half_extent):
    track = PointCloudTrack(points, [np.arange(len(points))], np.zeros(len(points), dtype=np.int64))
    box = OrientedBox(np.zeros(3), np.full(3, half_extent))
    return ObjectInstance(0, box, np.arange(len(points))), track


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="colour"):
        RunConfig.from_dict({'scene': {'colour': 1}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'vea': {}})
    config = RunConfig.from_dict({'vae': {'beta': 0.01}, 'flow_train': {'latent_schedule': [[0, 16], [10, 32]]}})
    assert config.vae.beta == 0.01
    assert config.flow_train.latent_schedule == ((0, 16), (10, 32))
    assert config.vae.latent_lengths == (16, 32, 64)


def test_config_overrides():
    config = RunConfig()
    config.override("vae.beta=0.5")
    config.override("inference.use_text=false")
    config.override("flow.heads=4")
    assert config.vae.beta == 0.5 and config.inference.use_text is False and config.flow.heads == 4
    with pytest.raises(ConfigError):
        config.override("vae.nothing=1")
    with pytest.raises(ConfigError):
        config.override("inference.use_text=3")
    with pytest.raises(ConfigError):
        config.override("vae.beta")


def test_config_consistency_checks():
    config = RunConfig()
    config.flow.latent_dim = config.vae.latent_dim + 1
    with pytest.raises(ConfigError):
        config.validate()
    config = RunConfig()
    config.flow_train.latent_schedule = ((0, 16), (100, 48))
    with pytest.raises(ConfigError):
        config.validate()


def test_config_file_round_trip(tmp_path):
    config = RunConfig()
    config.seed = 7
    path = str(tmp_path / "config.json")
    config.save_resolved(path)
    assert RunConfig.from_file(path) == config
    with pytest.raises(ConfigError):
        RunConfig.from_file(str(tmp_path / "missing.json"))


def test_latent_schedule_flip():
    schedule = ((0, 16), (1000, 32), (5000, 64))
    assert latent_length_at(schedule, 0) == 16
    assert latent_length_at(schedule, 999) == 16
    assert latent_length_at(schedule, 1000) == 32
    assert latent_length_at(schedule, 10 ** 6) == 64


def test_select_frames_spacing():
    counts = [1 + (k * 37) % 10 for k in range(100)]
    chosen = select_frames(_track(counts), np.arange(10), 4)
    assert len(chosen) == 4
    assert min(np.diff(chosen)) >= 100 // 8
    assert counts.index(max(counts)) in chosen


def test_select_frames_ties_and_fill_up():
    assert select_frames(_track([5] * 10), np.arange(10), 2) == [0, 2]
    assert select_frames(_track([4, 3, 2, 1] + [0] * 8), np.arange(10), 3) == [0, 1, 2]
    assert select_frames(_track([0, 2, 0, 3]), np.arange(10), 4) == [1, 3]
    with pytest.raises(VisibilityError):
        select_frames(_track([0, 0, 0]), np.arange(10), 2)


def test_refine_keeps_clean_points():
    instance, track = _instance(_fibonacci_sphere(200, 0.3), 0.5)
    assert np.array_equal(refine_instance_points(instance, track), np.arange(200))


def test_refine_drops_far_points():
    sphere = _fibonacci_sphere(200, 0.3)
    outliers = np.array([[1.5, 1.5, 1.5], [-1.5, 1.5, 1.5], [1.5, -1.5, -1.5]])
    outside = np.array([[3.0, 0.0, 0.0]])
    instance, track = _instance(np.concatenate([sphere, outliers, outside]), 2.0)
    kept = refine_instance_points(instance, track)
    assert np.array_equal(kept, np.arange(200))
    assert np.array_equal(refine_instance_points(instance, track), kept)


def test_refine_leaves_small_sets_alone():
    instance, track = _instance(np.random.default_rng(0).random((10, 3)) * 5.0, 0.1)
    assert np.array_equal(refine_instance_points(instance, track, min_keep=32), np.arange(10))


def test_dataset_layout(tiny_dataset):
    records = load_dataset(tiny_dataset)
    assert len(records) == 2
    for record in records:
        latents = record.load_latents(tiny_dataset)
        assert sorted(latents) == [16, 32, 64]
        assert latents[32].shape == (32, 16)
        if record.detected:
            assert len(record.point_indices) > 0


def test_dataset_rebuild_is_bitwise_identical(tmp_path, tiny_config, tiny_vae, tiny_dataset):
    out = str(tmp_path / "again")
    manifest = build_dataset(tiny_config, 1, out, tiny_vae, seed=0)
    for record_id in manifest['records']:
        for ext in (".latent.bin", ".json"):
            with open(os.path.join(out, "records", record_id + ext), "rb") as a, \
                    open(os.path.join(tiny_dataset, "records", record_id + ext), "rb") as b:
                assert a.read() == b.read()


def test_dataset_needs_a_vae(tmp_path, tiny_config):
    with pytest.raises(CheckpointError):
        build_dataset(tiny_config, 1, str(tmp_path / "data"), str(tmp_path / "no-vae"))


def test_model_checkpoint_round_trip(tmp_path, tiny_config, tiny_vae):
    vae, manifest = load_vae(tiny_vae)
    assert vae.config == tiny_config.vae and manifest['metadata']['kind'] == "vae"
    with pytest.raises(CheckpointError):
        load_flow(tiny_vae)
    torch.manual_seed(0)
    prefix = str(tmp_path / "flow")
    save_model(prefix, FlowModel(tiny_config.flow), step=3)
    flow, manifest = load_flow(prefix)
    assert flow.config == tiny_config.flow and manifest['metadata']['step'] == 3


def test_vae_training_resumes_exactly(tmp_path, tiny_config):
    full = VaeTrainer(_args(tmp_path / "full"), tiny_config)
    full.run()
    expected = read_loss_log(str(tmp_path / "full" / "vae_loss.csv"))

    tiny_config.vae_train.steps = 2
    VaeTrainer(_args(tmp_path / "split"), tiny_config).run()
    tiny_config.vae_train.steps = 4
    args = _args(tmp_path / "split")
    args.resume = True
    VaeTrainer(args, tiny_config).run()
    resumed = read_loss_log(str(tmp_path / "split" / "vae_loss.csv"))

    assert [row['step'] for row in resumed] == [0, 1, 2, 3]
    assert [row['loss'] for row in resumed] == pytest.approx([row['loss'] for row in expected], rel=1e-6)
    assert os.path.isfile(str(tmp_path / "full" / "checkpoints" / "vae-000002.json"))


def test_sequence_inference_is_deterministic(tmp_path, tiny_config, tiny_vae):
    torch.manual_seed(0)
    flow_prefix = str(tmp_path / "flow")
    save_model(flow_prefix, FlowModel(tiny_config.flow))
    vae, _ = load_vae(tiny_vae)
    flow, _ = load_flow(flow_prefix)
    recording = generate_recordings(tiny_config, str(tmp_path / "recordings"), 1, seed=0, n_objects=3)[0]
    instances = load_recording(recording).instances

    first = infer_sequence(recording, vae, flow, tiny_config.inference, str(tmp_path / "a"), seed=0)
    second = infer_sequence(recording, vae, flow, tiny_config.inference, str(tmp_path / "b"), seed=0)
    assert len(first['generated']) + len(first['skipped']) == len(instances)
    assert first['generated'] == second['generated']
    for entry in first['generated']:
        name = os.path.join("objects", f"{entry['id']}.obj")
        with open(tmp_path / "a" / name) as a, open(tmp_path / "b" / name) as b:
            assert a.read() == b.read()
        assert os.path.isfile(tmp_path / "a" / "objects" / f"{entry['id']}.json")
    assert os.path.isfile(tmp_path / "a" / "scene.obj")


@pytest.fixture
def gt_and_pred(tmp_path):
    gt, pred = tmp_path / "gt", tmp_path / "pred"
    gt.mkdir()
    pred.mkdir()
    sphere = mesh_shape(ShapeSpec("sphere", (0.3,)), 24)
    box = mesh_shape(ShapeSpec("box", (0.2, 0.3, 0.1)), 24)
    save_obj(sphere, str(gt / "0.obj"))
    save_obj(box, str(gt / "1.obj"))
    save_obj(sphere, str(pred / "0.obj"))
    return str(pred), str(gt)


def test_evaluation_flags_missing_predictions(tmp_path, gt_and_pred, tiny_config):
    pred, gt = gt_and_pred
    table = evaluate(pred, gt, tiny_config.metrics)
    assert [row['id'] for row in table.rows] == ["0", "1"]
    assert table.rows[0]['cd'] < 1e-9 and table.rows[0]['flag'] == ""
    assert table.rows[1]['flag'] == "missing_prediction" and np.isinf(table.rows[1]['cd'])
    path = str(tmp_path / "metrics.csv")
    table.write_csv(path)
    assert len(read_metrics_csv(path)) == 3


def test_cli_resolves_toggles():
    args = get_parser().parse_args(["infer", "--recording", "r", "--vae", "v", "--flow", "f", "--no-images",
                                    "--steps", "7", "--set", "inference.resolution=32"])
    config = resolve_config(args)
    assert config.inference.use_images is False and config.inference.use_points is True
    assert config.inference.steps == 7 and config.inference.resolution == 32


def test_cli_eval_writes_outputs(tmp_path, gt_and_pred):
    pred, gt = gt_and_pred
    out = str(tmp_path / "out")
    assert main(["eval", "--pred", pred, "--gt", gt, "--out", out, "--set", "metrics.n_samples=200"]) == 0
    assert os.path.isfile(os.path.join(out, "metrics.csv"))
    assert RunConfig.from_file(os.path.join(out, "config.json")).metrics.n_samples == 200
    assert main(["eval", "--pred", pred, "--gt", gt, "--out", out, "--set", "metrics.bogus=1"]) == 1


def _tree_bytes(root):
    files = {}
    for dirpath, _, names in os.walk(root):
        for name in names:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as file:
                files[os.path.relpath(path, root)] = file.read()
    return files


def test_cli_eval_is_bitwise_deterministic(tmp_path, gt_and_pred):
    pred, gt = gt_and_pred
    save_obj(mesh_shape(ShapeSpec("box", (0.22, 0.3, 0.1)), 24), os.path.join(pred, "1.obj"))
    outputs = [str(tmp_path / name) for name in ("first", "second")]
    for out in outputs:
        assert main(["eval", "--pred", pred, "--gt", gt, "--out", out, "--seed", "3",
                     "--set", "metrics.n_samples=300"]) == 0
    csvs = [_tree_bytes(out)["metrics.csv"] for out in outputs]
    assert csvs[0] == csvs[1]
    assert len(read_metrics_csv(os.path.join(outputs[0], "metrics.csv"))) == 3


def test_recordings_are_bitwise_deterministic(tmp_path, tiny_config):
    first = generate_recordings(tiny_config, str(tmp_path / "a"), 1, seed=4, n_objects=2)
    second = generate_recordings(tiny_config, str(tmp_path / "b"), 1, seed=4, n_objects=2)
    assert [os.path.basename(p) for p in first] == [os.path.basename(p) for p in second]
    a, b = _tree_bytes(str(tmp_path / "a")), _tree_bytes(str(tmp_path / "b"))
    assert "scene_000000/points.bin" in a
    assert a == b


def test_loss_log_plot(tmp_path):
    path = str(tmp_path / "vae_loss.csv")
    with open(path, "w") as file:
        file.write("step,latent_length,loss,mse,kl,rss_mb\n")
        for step in range(5):
            file.write(f"{step},16,{1.0 / (step + 1)},{0.5 / (step + 1)},0.1,100.0\n")
    data = LossLogData(path, window=2)
    assert np.allclose(data.smoothed_loss()[1], 0.75)
    assert main(["plot-log", "--log", path, "--out", str(tmp_path)]) == 0
    assert os.path.isfile(tmp_path / "vae_loss.png")


def test_smoothing_window():
    assert np.allclose(smooth([1.0, 2.0, 3.0, 4.0], 2), [1.0, 1.5, 2.5, 3.5])
    assert len(smooth([], 5)) == 0


@pytest.mark.slow
def test_flow_training_follows_latent_schedule(tmp_path, tiny_config, tiny_vae, tiny_dataset):
    args = _args(tmp_path, stage=1, data=tiny_dataset, init=None, single_stage=False, no_point_aug=False,
                 no_image_aug=False)
    prefix = FlowTrainer(args, tiny_config).run()
    rows = read_loss_log(str(tmp_path / "flow_loss.csv"))
    assert [row['latent_length'] for row in rows] == [16, 16, 32, 32]
    assert all(np.isfinite(row['loss']) for row in rows)
    flow, manifest = load_flow(prefix)
    assert manifest['metadata']['stage'] == 1

    recordings = generate_recordings(tiny_config, str(tmp_path / "eval"), 1, seed=1, n_objects=2)
    vae, _ = load_vae(tiny_vae)
    summary = infer_sequence(recordings[0], vae, flow, tiny_config.inference, str(tmp_path / "pred"))
    table = evaluate(str(tmp_path / "pred"), recordings[0], tiny_config.metrics)
    assert len(table.rows) == 2
    assert len(summary['generated']) + len(summary['skipped']) == len(load_recording(recordings[0]).instances)
