import numpy as np
import pytest

from flowshape.exceptions import ConfigError, MissingAssetError
from flowshape.geometry import sdf_eval
from flowshape.synthworld import (Camera, Intrinsics, JitterConfig, SceneConfig, SlamConfig, TrajectoryConfig,
                                  detect_instances_oracle, generate_scene, generate_trajectory, load_recording,
                                  look_at, project_point_mask, render_frame, save_recording, simulate_capture,
                                  simulate_slam_points, tokenize_caption)
from flowshape.synthworld.recording import load_gt_mesh
from flowshape.synthworld.render import NO_OBJECT

SMALL_VIEW = TrajectoryConfig(n_frames=8, width=32, height=32)


@pytest.fixture(scope="module")
def scene():
    return generate_scene(4, SceneConfig(min_objects=3, max_objects=3))


@pytest.fixture(scope="module")
def capture(scene):
    return simulate_capture(scene, SMALL_VIEW, SlamConfig(noise_sigma=0.0), seed=1)


def test_scene_is_deterministic_and_grounded(scene):
    assert generate_scene(4, SceneConfig(min_objects=3, max_objects=3)) == scene
    assert len(scene.objects) == 3
    for obj in scene.objects:
        obj.shape.validate()
        assert obj.shape.bounds()[0, 2] == pytest.approx(0.0, abs=1e-9)


def test_scene_objects_do_not_overlap(scene):
    bounds = [obj.shape.bounds() for obj in scene.objects]
    for i in range(len(bounds)):
        for j in range(i + 1, len(bounds)):
            a, b = bounds[i], bounds[j]
            assert not (np.all(a[0] < b[1]) and np.all(b[0] < a[1]))


def test_scene_config_validation():
    with pytest.raises(ConfigError):
        generate_scene(0, SceneConfig(min_objects=3, max_objects=2))
    with pytest.raises(ConfigError):
        generate_scene(0, SceneConfig(primitive_mix={"torus": 1.0}))


def test_camera_projection_round_trip():
    camera = look_at([2.0, 1.0, 1.5], [0.0, 0.0, 0.3], Intrinsics.from_fov(40, 30))
    camera.validate()
    world = np.array([[0.1, -0.2, 0.4], [0.0, 0.0, 0.3]])
    uv, z = camera.project(world)
    back = camera.backproject(uv[:, 1], uv[:, 0], z)
    assert np.allclose(back, world)
    # the look-at target lands on the principal point
    assert np.allclose(uv[1], [camera.intrinsics.cx, camera.intrinsics.cy])
    assert np.allclose(Camera.from_dict(camera.to_dict()).rotation, camera.rotation)


def test_trajectory_looks_at_scene():
    cameras = generate_trajectory(np.array([0.0, 0.0, 0.3]), TrajectoryConfig(n_frames=10, mode="orbit"), seed=0)
    assert len(cameras) == 10
    for cam in cameras:
        _, z = cam.project(np.array([[0.0, 0.0, 0.3]]))
        assert z[0] > 0
    with pytest.raises(ConfigError):
        generate_trajectory(np.zeros(3), TrajectoryConfig(n_frames=1), seed=0)


def test_render_is_pure_and_consistent(scene):
    camera = generate_trajectory(scene.center(), SMALL_VIEW, seed=0)[0]
    view = render_frame(scene, camera)
    again = render_frame(scene, camera)
    assert np.array_equal(view.frame.image, again.frame.image)
    hit = view.object_ids != NO_OBJECT
    assert hit.any()
    assert np.all(np.isfinite(view.depth[hit])) and np.all(np.isinf(view.depth[~hit]))
    assert view.frame.image.min() >= 0.0 and view.frame.image.max() <= 1.0
    assert np.array_equal(view.alpha, hit)


def test_slam_points_lie_on_their_objects(scene, capture):
    track = capture.track
    assert len(track) > 0 and track.n_frames == SMALL_VIEW.n_frames
    track.validate()
    for obj in scene.objects:
        own = track.points[track.object_ids == obj.object_id]
        if len(own):
            assert np.abs(sdf_eval(obj.shape, own)).max() < 0.02


def test_slam_is_seeded(scene):
    cameras = generate_trajectory(scene.center(), SMALL_VIEW, seed=1)
    a = simulate_slam_points(scene, cameras, SlamConfig())
    b = simulate_slam_points(scene, cameras, SlamConfig())
    assert np.array_equal(a.points, b.points)
    with pytest.raises(ValueError):
        simulate_slam_points(scene, cameras[:1])


def test_oracle_detections(scene, capture):
    track = capture.track
    for inst in capture.instances:
        labels = track.object_ids[inst.point_indices]
        assert np.all(labels == inst.object_id)
        assert inst.box.contains(track.points[inst.point_indices]).all()
        assert inst.caption.startswith("a ")
        assert 1 not in tokenize_caption(inst.caption)


def test_contamination_adds_foreign_points(scene, capture):
    jitter = JitterConfig(contamination=0.2)
    instances = detect_instances_oracle(scene, capture.track, jitter, seed=0)
    for inst in instances:
        foreign = capture.track.object_ids[inst.point_indices] != inst.object_id
        assert np.array_equal(np.flatnonzero(foreign), np.searchsorted(inst.point_indices, inst.contaminants))
        assert foreign.mean() <= 0.2 + 1.0 / len(inst.point_indices)


def test_contamination_fraction_over_seeds(scene, capture):
    jitter = JitterConfig(translation_sigma=0.02, scale_jitter=0.1, contamination=0.1)
    fractions = []
    for seed in range(100):
        instances = detect_instances_oracle(scene, capture.track, jitter, seed=seed)
        for inst in instances:
            assert np.all(capture.track.object_ids[inst.contaminants] != inst.object_id)
        if instances:
            fractions.append(sum(len(inst.contaminants) for inst in instances) /
                             sum(len(inst.point_indices) for inst in instances))
    assert len(fractions) == 100
    assert abs(np.mean(fractions) - 0.1) <= 0.02


def test_point_mask_marks_projected_points():
    camera = look_at([2.0, 0.0, 1.0], [0.0, 0.0, 0.5], Intrinsics.from_fov(32, 32))
    mask = project_point_mask(np.array([[0.0, 0.0, 0.5], [4.0, 0.0, 1.5]]), camera)
    assert mask.shape == (32, 32)
    assert mask.sum() == 1 and mask[16, 16] == 1


def test_recording_round_trip(tmp_path, capture):
    root = str(tmp_path / "rec")
    save_recording(capture, root, gt_resolution=24)
    loaded = load_recording(root)
    assert len(loaded.frames) == len(capture.frames)
    assert np.allclose(loaded.track.points, capture.track.points, atol=1e-6)
    assert all(np.array_equal(a, b) for a, b in zip(loaded.track.visibility, capture.track.visibility))
    assert np.abs(loaded.frames[0].image - capture.frames[0].image).max() <= 0.5 / 255 + 1e-12
    assert np.allclose(loaded.frames[3].camera.translation, capture.frames[3].camera.translation)
    assert [i.object_id for i in loaded.instances] == [i.object_id for i in capture.instances]
    assert loaded.scene == capture.scene
    assert not load_gt_mesh(root, capture.scene.objects[0].object_id).is_empty


def test_recording_missing_files(tmp_path):
    with pytest.raises(MissingAssetError):
        load_recording(str(tmp_path))
