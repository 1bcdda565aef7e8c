"""Shared fixtures: seeded generators, tiny models and a trained toy run"""
import numpy as np
import pytest

from config import TrainConfig
from main import main
from model_train import Autoencoder
from nn_core import MlpParams

TOY_OVERRIDES = [
    "train.variant=ds_aae",
    "train.latent_dim=2",
    "train.hidden_dims=8",
    "train.batch_size=100",
    "train.epochs=3",
    "train.dropout_input=0.0",
    "train.feature_count=20",
    "train.checkpoint_every=2",
    "data.kind=gaussian_mixture_8",
    "data.n_samples=600",
    "output.verbose=false",
    "eval.n_samples=200",
    "eval.grid_size=5",
]


def set_flags(overrides):
    args = []
    for item in overrides:
        args.extend(["--set", item])
    return args


def flat_arrays(params: MlpParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    """input 4, hidden 5, latent 2 with no dropout"""
    config = TrainConfig(variant="mmd_ae", latent_dim=2, hidden_dims=(5,), dropout_input=0.0)
    return Autoencoder.build(4, config, np.random.default_rng(7))


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """Output directory of a short DS-AAE training run on the 8-Gaussian set"""
    out = tmp_path_factory.mktemp("toy_run")
    code = main(["train", "--out", str(out)] + set_flags(TOY_OVERRIDES))
    assert code == 0
    return out
