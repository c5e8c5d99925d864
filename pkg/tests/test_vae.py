import numpy as np
import pytest
import torch

from flowshape.exceptions import DegenerateInputError, ShapeMismatchError
from flowshape.geometry import NdcTransform, ShapeSpec, mesh_shape
from flowshape.nn import CheckedAdam, grad_check
from flowshape.vae import (LatentPosterior, LatentSet, VaeConfig, VecSetVae, fourier_features, make_shape_sample,
                           reconstruct, sample_latent, vae_loss)


def _tiny(**kwargs):
    values = dict(width=16, heads=2, encoder_layers=1, decoder_layers=1, latent_dim=4, frequencies=3,
                  n_surface=64, n_edge=32, n_queries=128)
    values.update(kwargs)
    return VaeConfig(**values)


def _inputs(seed=0, n=64, m=32, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return torch.rand((2, n, 6), generator=g, dtype=dtype) * 2 - 1, torch.rand((2, m, 6), generator=g, dtype=dtype)


@pytest.mark.parametrize("length", [16, 32, 64])
def test_encode_every_ladder_length(length):
    torch.manual_seed(0)
    model = VecSetVae(_tiny())
    surface, edge = _inputs()
    posterior = model.encode(surface, edge, length)
    assert posterior.mean.shape == (2, length, 4) == posterior.logvar.shape
    assert model.decode_sdf(posterior.mean, torch.zeros((2, 10, 3))).shape == (2, 10)


def test_encode_rejects_bad_inputs():
    model = VecSetVae(_tiny())
    surface, edge = _inputs()
    with pytest.raises(ShapeMismatchError):
        model.encode(surface, edge, 24)
    with pytest.raises(DegenerateInputError):
        model.encode(surface, edge[:, :0])


def test_encoder_ignores_point_order():
    torch.manual_seed(0)
    model = VecSetVae(_tiny()).double()
    surface, edge = _inputs(dtype=torch.float64)
    perm = torch.randperm(surface.shape[1], generator=torch.Generator().manual_seed(3))
    a = model.encode(surface, edge, 32).mean
    b = model.encode(surface[:, perm], edge, 32).mean
    assert torch.allclose(a, b, atol=1e-10)


def test_kl_matches_torch_distributions():
    g = torch.Generator().manual_seed(1)
    posterior = LatentPosterior(torch.randn((3, 16, 4), generator=g, dtype=torch.float64),
                                torch.randn((3, 16, 4), generator=g, dtype=torch.float64))
    q = torch.distributions.Normal(posterior.mean, torch.exp(0.5 * posterior.logvar))
    p = torch.distributions.Normal(torch.zeros_like(posterior.mean), torch.ones_like(posterior.mean))
    expected = torch.distributions.kl_divergence(q, p).sum(dim=(-2, -1))
    assert torch.allclose(posterior.kl(), expected)
    assert torch.count_nonzero(LatentPosterior.standard(2, 16, 4).kl()) == 0


def test_logvar_is_clamped():
    model = VecSetVae(_tiny())
    with torch.no_grad():
        model.to_logvar.bias.fill_(100.0)
    surface, edge = _inputs()
    assert float(model.encode(surface, edge, 16).logvar.max()) == 10.0


def test_latent_draw_is_seeded():
    posterior = LatentPosterior(torch.zeros((1, 16, 4)), torch.zeros((1, 16, 4)))
    a, b = sample_latent(posterior, 4), sample_latent(posterior, 4)
    assert torch.equal(a.tokens, b.tokens)
    assert a.length == 16
    a.validate()
    with pytest.raises(ShapeMismatchError):
        LatentSet(torch.zeros((1, 12, 4))).validate()


def test_fourier_feature_width():
    x = torch.rand((5, 3))
    assert fourier_features(x, 4).shape == (5, 3 + 6 * 4)


def test_decoder_gradients():
    torch.manual_seed(0)
    model = VecSetVae(_tiny()).double()
    z = torch.randn((1, 16, 4), dtype=torch.float64)
    queries = torch.rand((1, 6, 3), dtype=torch.float64) * 2 - 1
    report = grad_check(lambda z: model.decode_sdf(z, queries).pow(2).sum(), [z], max_coords=24)
    assert report.passed, str(report)


def test_vae_loss_gradients():
    torch.manual_seed(0)
    model = VecSetVae(_tiny()).double()
    g = torch.Generator().manual_seed(4)
    noise = torch.randn((1, 16, 4), generator=g, dtype=torch.float64)
    queries = torch.rand((1, 8, 3), generator=g, dtype=torch.float64) * 2 - 1
    sdf = torch.rand((1, 8), generator=g, dtype=torch.float64) - 0.5

    def total(mean, logvar):
        posterior = LatentPosterior(mean, logvar)
        return vae_loss(model, posterior, mean + torch.exp(0.5 * logvar) * noise, queries, sdf, 0.5).total

    inputs = [torch.randn((1, 16, 4), generator=g, dtype=torch.float64),
              0.3 * torch.randn((1, 16, 4), generator=g, dtype=torch.float64)]
    report = grad_check(total, inputs, max_coords=24)
    assert report.passed, str(report)


def test_shape_sample_sdf_is_in_ndc_units():
    config = _tiny()
    shape = ShapeSpec("sphere", (0.4,))
    transform = NdcTransform((0.0, 0.0, 0.0), 0.5)
    sample = make_shape_sample(shape, mesh_shape(shape), transform, config, seed=0)
    assert sample.surface.shape == (64, 6) and sample.edge.shape == (32, 6)
    assert np.abs(sample.queries).max() <= 1.0
    assert np.allclose(sample.sdf, np.linalg.norm(sample.queries, axis=1) - 0.8)


def test_reconstruction_returns_to_metric_frame():
    torch.manual_seed(0)
    model = VecSetVae(_tiny())
    shape = ShapeSpec("sphere", (0.3,)).with_pose(np.eye(3), (1.0, 2.0, 0.5))
    mesh = mesh_shape(shape, 24)
    model.decode_sdf = lambda z, q: (q.norm(dim=-1) - 0.5)[None]
    recon = reconstruct(model, mesh, resolution=24, length=16)
    assert np.allclose(recon.bounds().mean(axis=0), [1.0, 2.0, 0.5], atol=0.05)

    model.decode_sdf = lambda z, q: torch.ones(q.shape[:-1])[None]
    assert reconstruct(model, mesh, resolution=16, length=16).is_empty


@pytest.mark.slow
def test_vae_overfits_one_shape():
    torch.manual_seed(0)
    config = _tiny(width=32, n_queries=512)
    model = VecSetVae(config)
    shape = ShapeSpec("box", (0.3, 0.2, 0.25))
    sample = make_shape_sample(shape, mesh_shape(shape), NdcTransform((0.0, 0.0, 0.0), 0.35), config, seed=0)
    surface = torch.as_tensor(sample.surface, dtype=torch.float32)
    edge = torch.as_tensor(sample.edge, dtype=torch.float32)
    queries = torch.as_tensor(sample.queries, dtype=torch.float32)
    sdf = torch.as_tensor(sample.sdf, dtype=torch.float32)[None]
    optimizer = CheckedAdam(model.named_parameters(), lr=1e-3)

    losses = []
    for step in range(400):
        posterior = model.encode(surface, edge, 16)
        loss = vae_loss(model, posterior, sample_latent(posterior, step).tokens, queries, sdf, config.beta)
        optimizer.zero_grad()
        loss.total.backward()
        optimizer.step()
        losses.append(float(loss.mse))
    assert np.mean(losses[-20:]) < 0.1 * np.mean(losses[:5])
