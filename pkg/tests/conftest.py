import os

import pytest
import torch

from flowshape.flow.config import FlowConfig
from flowshape.pipeline.config import RunConfig, TrainConfig
from flowshape.pipeline.dataset import build_dataset
from flowshape.pipeline.models import save_model
from flowshape.vae.model import VaeConfig, VecSetVae


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end training runs, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_tiny_config() -> RunConfig:
    """Run config small enough for a whole pipeline in a few seconds."""
    config = RunConfig()
    config.trajectory.n_frames = 12
    config.trajectory.width = config.trajectory.height = 32
    config.dataset.stage1_scenes = 2
    config.dataset.stage2_scenes = 1
    config.dataset.stage2_objects = 2
    config.dataset.mesh_resolution = 24
    config.dataset.vae_shapes = 4
    config.vae = VaeConfig(width=32, heads=2, encoder_layers=1, decoder_layers=1, n_surface=128, n_edge=64,
                           n_queries=256)
    config.flow = FlowConfig(dual_blocks=1, single_blocks=1, heads=2, width=32, latent_dim=config.vae.latent_dim,
                             steps=2, point_widths=(8, 16), patch_dim=16, mask_channels=4, inference_views=2)
    config.vae_train = TrainConfig(stage=1, batch_size=2, steps=4, log_every=1, checkpoint_every=2)
    config.flow_train = TrainConfig(stage=1, batch_size=2, steps=4, log_every=1, checkpoint_every=2,
                                    latent_schedule=((0, 16), (2, 32)))
    config.inference.resolution = 24
    config.inference.min_points = 8
    config.metrics.n_samples = 500
    config.validate()
    return config


@pytest.fixture
def tiny_config() -> RunConfig:
    return make_tiny_config()


@pytest.fixture(scope="session")
def tiny_vae(tmp_path_factory) -> str:
    """Checkpoint prefix of an untrained tiny VAE."""
    torch.manual_seed(0)
    prefix = str(tmp_path_factory.mktemp("vae") / "vae")
    save_model(prefix, VecSetVae(make_tiny_config().vae))
    return prefix


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, tiny_vae) -> str:
    """Stage 1 dataset directory built with the tiny VAE."""
    root = str(tmp_path_factory.mktemp("dataset"))
    build_dataset(make_tiny_config(), 1, os.path.join(root, "stage1"), tiny_vae, seed=0)
    return os.path.join(root, "stage1")
