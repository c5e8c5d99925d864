import numpy as np
import pytest
import torch

from flowshape.exceptions import ConditionError, ConfigError, NonFiniteStateError, ShapeMismatchError
from flowshape.flow import (ConditionSet, FlowConfig, FlowModel, encode_conditions, fm_loss, integrate, make_condition_set,
                            plucker_coords, plucker_encode, plucker_from_pixels, sample, sample_latent_set)
from flowshape.flow.model import DualStreamBlock, SingleStreamBlock
from flowshape.geometry import NdcTransform
from flowshape.nn import grad_check
from flowshape.synthworld import Intrinsics, look_at, tokenize_caption


def _config(**kwargs):
    values = dict(dual_blocks=2, single_blocks=1, heads=2, width=16, latent_dim=4, steps=2, point_widths=(8,),
                  patch_dim=8, mask_channels=4)
    values.update(kwargs)
    return FlowConfig(**values)


def _conditions(n_frames=2, seed=0):
    rng = np.random.default_rng(seed)
    points = rng.uniform(-0.2, 0.2, (60, 3)) + [1.0, 0.5, 0.3]
    intrinsics = Intrinsics.from_fov(16, 16)
    cameras = [look_at([1.0 + 2.0 * np.cos(a), 0.5 + 2.0 * np.sin(a), 1.0], [1.0, 0.5, 0.3], intrinsics)
               for a in np.linspace(0.0, np.pi, n_frames)]
    frames = [rng.random((16, 16)) for _ in cameras]
    masks = [(rng.random((16, 16)) > 0.5).astype(np.float64) for _ in cameras]
    return make_condition_set(points, frames, cameras, masks, tokenize_caption("a small box"))


def test_midpoint_is_exact_for_linear_time_velocity():
    a = torch.tensor([[[0.5, -2.0, 3.0]]], dtype=torch.float64)
    z1 = torch.zeros_like(a)
    z0 = integrate(lambda z, t: a * t.reshape(-1, 1, 1), z1, steps=3)
    # dz/dt = -a t from t = 1 to 0
    assert torch.allclose(z0, a / 2.0, atol=1e-12)


def test_midpoint_is_second_order():
    z1 = torch.ones((1, 1, 1), dtype=torch.float64)
    exact = float(np.exp(0.5))
    errors = [abs(float(integrate(lambda z, t: t.reshape(-1, 1, 1) * z, z1, steps=n)) - exact)
              for n in (8, 16, 32, 64)]
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.5 <= coarse / fine <= 4.5


def test_euler_is_first_order():
    z1 = torch.ones((1, 1, 1), dtype=torch.float64)
    exact = float(np.exp(0.5))
    errors = [abs(float(integrate(lambda z, t: t.reshape(-1, 1, 1) * z, z1, steps=n, method="euler")) - exact)
              for n in (16, 32)]
    assert 1.7 <= errors[0] / errors[1] <= 2.3


def test_sampler_reports_non_finite_state():
    with pytest.raises(NonFiniteStateError, match="step 0"):
        integrate(lambda z, t: z * float("inf"), torch.ones((1, 2, 2)), steps=4)
    with pytest.raises(ValueError):
        integrate(lambda z, t: z, torch.ones((1, 2, 2)), steps=0)


def test_sample_is_seeded():
    fn = lambda z, t: -z
    assert torch.equal(sample(fn, (2, 8, 4), 4, seed=3), sample(fn, (2, 8, 4), 4, seed=3))
    assert not torch.equal(sample(fn, (2, 8, 4), 4, seed=3), sample(fn, (2, 8, 4), 4, seed=4))


def test_fm_loss_of_zero_velocity():
    z0 = torch.randn((3, 8, 4), generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    result = fm_loss(lambda s: torch.zeros_like(s.z_t), z0, seed=11)
    s = result.sample
    assert torch.allclose(result.loss, torch.mean((s.z0 - s.z1) ** 2))
    tb = s.t.reshape(-1, 1, 1)
    assert torch.allclose(s.z_t, (1.0 - tb) * z0 + tb * s.z1)
    assert bool(((s.t >= 0) & (s.t <= 1)).all())


def test_fm_loss_monte_carlo_expectation():
    z0 = torch.randn((10000, 2, 2), generator=torch.Generator().manual_seed(2), dtype=torch.float64)
    result = fm_loss(lambda s: torch.zeros_like(s.z_t), z0, seed=5)
    per_sample = ((z0 - result.sample.z1) ** 2).reshape(len(z0), -1).mean(dim=1)
    stderr = float(per_sample.std()) / np.sqrt(len(z0))
    # E[(z0 - z1)^2] = z0^2 + 1 per element
    assert abs(float(result.loss) - float(torch.mean(z0 ** 2) + 1.0)) < 3.0 * stderr


def test_fm_loss_at_forced_times():
    z0 = torch.randn((2, 4, 3), generator=torch.Generator().manual_seed(1), dtype=torch.float64)
    at_data = fm_loss(lambda s: s.target, z0, seed=0, t=0.0)
    assert torch.equal(at_data.sample.z_t, z0)
    assert float(at_data.loss) == 0.0
    at_noise = fm_loss(lambda s: s.target, z0, seed=0, t=1.0)
    assert torch.equal(at_noise.sample.z_t, at_noise.sample.z1)


def test_plucker_moment_is_origin_invariant_along_ray():
    origin = torch.tensor([[0.3, -1.0, 2.0]], dtype=torch.float64)
    direction = torch.tensor([[1.0, 2.0, -0.5]], dtype=torch.float64)
    shifted = origin + 2.5 * direction
    a, b = plucker_coords(origin, direction), plucker_coords(shifted, direction)
    assert torch.allclose(a, b)
    assert torch.allclose(torch.norm(a[:, :3], dim=-1), torch.ones(1, dtype=torch.float64))
    assert torch.allclose((a[:, :3] * a[:, 3:]).sum(-1), torch.zeros(1, dtype=torch.float64))


def test_plucker_patch_layout():
    camera = look_at([2.0, 0.0, 1.0], [0.0, 0.0, 0.5], Intrinsics.from_fov(16, 8))
    features = plucker_encode(camera, 4)
    assert features.shape == (2 * 4, 6)
    # the central ray of an image points at what the camera looks at
    center = plucker_from_pixels(camera, np.array([camera.intrinsics.cy]), np.array([camera.intrinsics.cx]))
    expected = np.array([-2.0, 0.0, -0.5]) / np.linalg.norm([-2.0, 0.0, -0.5])
    assert np.allclose(center[0, :3].numpy(), expected)


def test_condition_set_validation():
    conditions = _conditions()
    assert np.abs(conditions.points).max() <= 1.0 + 1e-9
    bad = ConditionSet(conditions.points * 2.0, conditions.ndc)
    with pytest.raises(ConditionError):
        bad.validate()
    misaligned = ConditionSet(conditions.points, conditions.ndc, conditions.frames, conditions.cameras[:1],
                              conditions.masks)
    with pytest.raises(ConditionError):
        misaligned.validate()


def test_encoder_token_streams():
    model = FlowModel(_config())
    conditions = _conditions()
    streams = model.conditions([conditions, conditions.without(points=True, images=True)])
    assert streams.batch == 2
    # 2 frames of 16x16 pixels with 8x8 patches
    assert streams.image_tokens.shape[1] == 8
    assert bool(streams.image_mask[0].all()) and not bool(streams.image_mask[1].any())
    assert not bool(streams.point_mask[1].any())
    assert bool(streams.text_mask.all())


def test_single_condition_set_encoding():
    torch.manual_seed(0)
    model = FlowModel(_config()).eval()
    conditions = _conditions()
    with torch.no_grad():
        single = encode_conditions(model.conditions, conditions)
        batched = model.conditions([conditions])
    assert single.batch == 1
    assert torch.equal(single.point_tokens, batched.point_tokens)
    assert torch.equal(single.pooled_text, batched.pooled_text)


def test_empty_conditions_need_unconditional_mode():
    model = FlowModel(_config())
    empty = _conditions().without(points=True, images=True, text=True)
    with pytest.raises(ConditionError):
        model.conditions([empty])
    streams = model.conditions([empty], unconditional=True)
    assert streams.scene_tokens()[0].shape[1] == 0
    assert streams.text_tokens.shape[1] == 0


def test_per_sample_condition_dropout():
    model = FlowModel(_config())
    conditions = _conditions()
    streams = model.conditions([conditions, conditions], unconditional=[False, True])
    assert bool(streams.point_mask[0].any()) and not bool(streams.point_mask[1].any())
    assert torch.count_nonzero(streams.pooled_text[1]) == 0


def test_velocity_is_latent_permutation_equivariant():
    torch.manual_seed(0)
    model = FlowModel(_config()).double().eval()
    streams = model.conditions([_conditions()])
    z = torch.randn((1, 6, 4), generator=torch.Generator().manual_seed(2), dtype=torch.float64)
    perm = torch.tensor([3, 0, 5, 1, 4, 2])
    with torch.no_grad():
        out = model(z, torch.tensor([0.4], dtype=torch.float64), streams)
        permuted = model(z[:, perm], torch.tensor([0.4], dtype=torch.float64), streams)
    assert out.shape == z.shape
    assert torch.allclose(out[:, perm], permuted, atol=1e-10)


def test_velocity_shape_errors():
    model = FlowModel(_config())
    streams = model.conditions([_conditions()])
    with pytest.raises(ShapeMismatchError):
        model(torch.zeros((1, 4, 5)), torch.zeros(1), streams)
    with pytest.raises(ShapeMismatchError):
        model(torch.zeros((2, 4, 4)), torch.zeros(2), streams)


def test_flow_config_validation():
    with pytest.raises(ConfigError):
        _config(width=15).validate()
    with pytest.raises(ConfigError):
        _config(sampler="rk4").validate()
    assert _config(dual_blocks=8).resolved_text_depth == 2


def test_latent_sampling_is_deterministic():
    torch.manual_seed(0)
    model = FlowModel(_config())
    conditions = _conditions()
    a = sample_latent_set(model, conditions, 8, 2, seed=5)
    b = sample_latent_set(model, conditions, 8, 2, seed=5)
    assert a.tokens.shape == (1, 8, 4)
    assert torch.equal(a.tokens, b.tokens)


def test_ndc_frame_travels_with_conditions():
    conditions = _conditions()
    assert isinstance(conditions.ndc, NdcTransform)
    assert conditions.to_dict()['n_frames'] == 2
    assert conditions.without(text=True).caption_tokens == []


def _randn(*shape, seed=0):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def test_fm_loss_gradients():
    report = grad_check(lambda z0: fm_loss(lambda s: torch.tanh(s.z_t) * s.t.reshape(-1, 1, 1), z0, seed=3).loss,
                        [_randn(2, 4, 3, seed=1)])
    assert report.passed, str(report)


def test_dual_stream_block_gradients():
    torch.manual_seed(0)
    block = DualStreamBlock(8, 2).double()
    mask = torch.tensor([[True, True, True, False]])
    report = grad_check(lambda z, c, cond: sum(out.pow(2).sum() for out in block(z, c, mask, cond)),
                        [_randn(1, 3, 8, seed=1), _randn(1, 4, 8, seed=2), _randn(1, 8, seed=3)], max_coords=24)
    assert report.passed, str(report)


def test_single_stream_block_gradients():
    torch.manual_seed(0)
    block = SingleStreamBlock(8, 2).double()
    mask = torch.tensor([[True, True, True, True, False]])
    report = grad_check(lambda x, cond: block(x, mask, cond).pow(2).sum(),
                        [_randn(1, 5, 8, seed=1), _randn(1, 8, seed=2)], max_coords=24)
    assert report.passed, str(report)


def test_velocity_gradients():
    torch.manual_seed(0)
    model = FlowModel(_config()).double().eval()
    with torch.no_grad():
        streams = model.conditions([_conditions()])
    report = grad_check(lambda z, t: model.velocity(z, t, streams).pow(2).sum(),
                        [_randn(1, 6, 4, seed=2), torch.tensor([0.4], dtype=torch.float64)], max_coords=24)
    assert report.passed, str(report)


def test_text_blocks_carry_the_text_stream():
    torch.manual_seed(0)
    model = FlowModel(_config(dual_blocks=3, text_depth=2)).double().eval()
    with torch.no_grad():
        streams = model.conditions([_conditions()])
    seen = {}
    model.dual[0].register_forward_hook(lambda module, args, out: seen.setdefault('first_out', out[1]))
    model.dual[1].register_forward_hook(lambda module, args, out: seen.setdefault('second_in', args[1]))
    model.dual[2].register_forward_hook(lambda module, args, out: seen.setdefault('third_in', args[1]))
    with torch.no_grad():
        model(_randn(1, 6, 4, seed=2), torch.tensor([0.4], dtype=torch.float64), streams)
    assert torch.equal(seen['second_in'], seen['first_out'])
    assert not torch.equal(seen['second_in'], streams.text_tokens)
    # the scene blocks still start from the point and image tokens
    assert torch.equal(seen['third_in'], streams.scene_tokens()[0])
