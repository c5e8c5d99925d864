import numpy as np
import pytest
from scipy.spatial import cKDTree

from flowshape.augment import (IMAGE_OPERATORS, POINT_OPERATORS, STAGE_RANGES, AugPolicy, ImageAssets, OperatorSpec,
                               augment_image, augment_points, compose_policies, degrade_resolution, make_backgrounds)
from flowshape.exceptions import ConfigError, MissingAssetError


@pytest.fixture
def cloud():
    return np.random.default_rng(0).uniform(-1.0, 1.0, (400, 3))


def test_identity_policy_keeps_points(cloud):
    out = augment_points(cloud, 0, AugPolicy.identity("point"))
    assert np.array_equal(out.points, cloud)
    assert np.array_equal(out.indices, np.arange(len(cloud)))
    assert out.applied == []


def test_uniform_dropout_rate(cloud):
    out = augment_points(cloud, 3, AugPolicy.single("uniform_dropout", min_keep=10, rate=(0.5, 0.5)))
    assert 120 < len(out.points) < 280
    assert np.array_equal(out.points, cloud[out.indices])
    assert out.applied[0]['rate'] == 0.5


def test_uniform_dropout_count_is_binomial():
    points = np.random.default_rng(1).uniform(-1.0, 1.0, (10000, 3))
    out = augment_points(points, 7, AugPolicy.single("uniform_dropout", min_keep=10, rate=(0.5, 0.5)))
    # kept count ~ Binomial(10^4, 0.5), sigma = 50
    assert abs(len(out.points) - 5000) <= 3 * 50


def test_dropout_respects_min_keep(cloud):
    out = augment_points(cloud, 3, AugPolicy.single("uniform_dropout", min_keep=64, rate=(0.95, 0.95)))
    assert len(out.points) >= 64


def test_clustered_dropout_removes_balls(cloud):
    out = augment_points(cloud, 1, AugPolicy.single("clustered_dropout", min_keep=10, radius=(0.4, 0.4),
                                                    anchors=(2, 2)))
    anchors = np.array(out.applied[0]['anchor_points'])
    dist, _ = cKDTree(anchors).query(cloud, k=1)
    removed = np.setdiff1d(np.arange(len(cloud)), out.indices)
    assert len(removed) > 0
    assert np.all(dist[removed] < 0.4) and np.all(dist[out.indices] >= 0.4)


def test_half_space_occlusion_keeps_one_side(cloud):
    out = augment_points(cloud, 2, AugPolicy.single("half_space_occlusion", min_keep=10, keep_depth=(0.0, 0.0)))
    record = out.applied[0]
    proj = out.points @ np.array(record['plane_normal'])
    assert np.all(proj <= record['plane_offset'] + 1e-12)
    assert 100 < len(out.points) < 300


def test_partial_trajectory_keeps_window_points(cloud):
    visibility = [np.arange(k * 40, (k + 1) * 40) for k in range(10)]
    out = augment_points(cloud, 4, AugPolicy.single("partial_trajectory", min_keep=10, window=(0.3, 0.3)),
                         visibility)
    start, stop = out.applied[0]['frames']
    assert stop - start == 3
    assert np.array_equal(out.indices, np.arange(start * 40, stop * 40))


def test_partial_trajectory_without_visibility_is_skipped(cloud):
    out = augment_points(cloud, 4, AugPolicy.single("partial_trajectory", window=(0.3, 0.3)))
    assert len(out.points) == len(cloud) and out.applied == []


def test_gaussian_jitter_moves_but_keeps_points(cloud):
    out = augment_points(cloud, 5, AugPolicy.single("gaussian_jitter", sigma=(0.01, 0.01)))
    assert np.array_equal(out.indices, np.arange(len(cloud)))
    assert 0.005 < np.std(out.points - cloud) < 0.02


def test_small_clouds_are_not_augmented():
    points = np.random.default_rng(0).random((10, 3))
    out = augment_points(points, 0, AugPolicy.single("uniform_dropout", min_keep=32, rate=(0.9, 0.9)))
    assert np.array_equal(out.points, points)


def test_point_augmentation_is_deterministic(cloud):
    policy, _ = compose_policies(7, 1, min_keep=16)
    a = augment_points(cloud, 11, policy)
    b = augment_points(cloud, 11, policy)
    assert np.array_equal(a.points, b.points) and a.applied == b.applied


@pytest.mark.parametrize("stage", [1, 2])
def test_composed_policies_respect_stage_ranges(stage):
    for seed in range(20):
        point_policy, image_policy = compose_policies(seed, stage)
        assert {s.op for s in point_policy.operators} <= set(POINT_OPERATORS)
        assert {s.op for s in image_policy.operators} <= set(IMAGE_OPERATORS)
        for spec in point_policy.operators + image_policy.operators:
            for name, (lo, hi) in spec.ranges.items():
                stage_lo, stage_hi = STAGE_RANGES[stage][spec.op][name]
                assert stage_lo <= lo <= hi <= stage_hi
    assert compose_policies(3, stage) == compose_policies(3, stage)


def test_policy_validation():
    with pytest.raises(ConfigError):
        AugPolicy.single("uniform_dropout", rate=(0.5, 0.99))
    with pytest.raises(ConfigError):
        AugPolicy("point", (OperatorSpec("fog", 1.0),)).validate()
    with pytest.raises(ConfigError):
        AugPolicy("point", (OperatorSpec("uniform_dropout", 1.5),)).validate()
    with pytest.raises(ConfigError):
        compose_policies(0, 3)
    policy = AugPolicy.single("occluder", count=(1, 2), size=(0.1, 0.2))
    assert AugPolicy.from_dict(policy.to_dict()) == policy


def test_identity_image_policy():
    image = np.random.default_rng(0).random((16, 16))
    out = augment_image(image, 0, AugPolicy.identity("image"))
    assert np.array_equal(out.image, image) and not out.occluder_mask.any()


def test_background_needs_assets():
    image = np.zeros((16, 16))
    with pytest.raises(MissingAssetError):
        augment_image(image, 0, AugPolicy.single("background"))
    with pytest.raises(MissingAssetError):
        augment_image(image, 0, AugPolicy.single("background"), ImageAssets(backgrounds=[np.ones((16, 16))]))


def test_background_composite_keeps_object_pixels():
    rng = np.random.default_rng(1)
    image = rng.random((16, 16))
    alpha = np.zeros((16, 16))
    alpha[4:12, 4:12] = 1.0
    backgrounds = make_backgrounds(3, (16, 16), seed=0)
    out = augment_image(image, 0, AugPolicy.single("background"), ImageAssets(alpha=alpha, backgrounds=backgrounds))
    inside = alpha > 0
    assert np.array_equal(out.image[inside], image[inside])
    assert np.allclose(out.image[~inside], backgrounds[out.applied[0]['background']][~inside])


def test_occluder_paints_its_mask():
    image = np.zeros((32, 32))
    out = augment_image(image, 2, AugPolicy.single("occluder", count=(2, 2), size=(0.3, 0.3)))
    assert out.occluder_mask.any()
    assert np.allclose(out.image[out.occluder_mask], out.applied[0]['value'])
    assert np.all(out.image[~out.occluder_mask] == 0.0)


def test_fog_saturates_background():
    image = np.zeros((8, 8))
    depth = np.full((8, 8), np.inf)
    depth[:4] = 1.0
    out = augment_image(image, 0, AugPolicy.single("fog", density=(0.5, 0.5)), ImageAssets(depth=depth))
    assert np.allclose(out.image[4:], 0.7)
    assert np.allclose(out.image[:4], 0.7 * (1.0 - np.exp(-0.5)))


def test_resolution_degradation():
    constant = np.full((16, 16), 0.3)
    assert np.allclose(degrade_resolution(constant, 4), constant)
    checker = (np.indices((16, 16)).sum(axis=0) % 2).astype(np.float64)
    assert degrade_resolution(checker, 2).std() < checker.std()


def _linear_resample(image, size):
    """Separable half-pixel bilinear resampling with edge clamping."""
    for axis, n_out in enumerate(size):
        n_in = image.shape[axis]
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        image = np.apply_along_axis(lambda line: np.interp(src, np.arange(n_in), line), axis, image)
    return image


@pytest.mark.parametrize("shape,factor", [((8, 12), 2), ((9, 12), 3), ((4, 4), 2)])
def test_resolution_degradation_matches_reference(shape, factor):
    image = np.random.default_rng(5).random(shape)
    small = _linear_resample(image, (shape[0] // factor, shape[1] // factor))
    expected = _linear_resample(small, shape)
    assert np.allclose(degrade_resolution(image, factor), expected, atol=1e-6)


def test_resolution_degradation_by_hand():
    image = np.arange(16, dtype=np.float64).reshape(4, 4)
    # 2x2 block means, then each output pixel mixes its block with the nearest neighbour block 3:1
    small = np.array([[2.5, 4.5], [10.5, 12.5]])
    row = lambda a, b: [a, 0.75 * a + 0.25 * b, 0.25 * a + 0.75 * b, b]
    expected = np.array([row(*r) for r in small]).T
    expected = np.array([row(*c) for c in expected]).T
    assert np.allclose(degrade_resolution(image, 2), expected, atol=1e-12)


def test_photometric_stays_in_range():
    image = np.random.default_rng(3).random((16, 16))
    policy = AugPolicy.single("photometric", gamma=(0.5, 0.5), gain=(2.0, 2.0), offset=(0.3, 0.3))
    out = augment_image(image, 0, policy)
    assert out.image.min() >= 0.0 and out.image.max() <= 1.0


def test_backgrounds_are_seeded():
    a = make_backgrounds(4, (16, 24), seed=5)
    b = make_backgrounds(4, (16, 24), seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x.shape == (16, 24) and x.min() >= 0.0 and x.max() <= 1.0 for x in a)
