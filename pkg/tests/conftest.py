"""Shared fixtures: the seeded toy classification problem and its trained
model, reused by the diagnostics and acceptance suites."""

import logging

import numpy as np
import pytest

from quadbias import Mlp, MlpArchitecture, Rng
from quadbias.harness import DatasetSpec, TrainConfig, generate_dataset, train

# Silence the (expected) tiny-eigenvalue clamp warnings during test runs.
logging.getLogger("quadbias.laplace").setLevel(logging.ERROR)

TOY_SPEC = DatasetSpec(
    generator="gaussian_blobs", n=2048, d=16, c=10, noise=2.0, seed=7,
    train_frac=0.8, ood_translation=4.0, ood_noise_mult=2.0,
)
TOY_ARCH = MlpArchitecture((16, 36, 20, 10), "relu", "cross_entropy")
TOY_TRAIN = TrainConfig(lr=0.08, momentum=0.9, epochs=30, batch_size=128,
                        beta=5e-4, seed=11)
# Regularizer used when building quadratics on the fixture.
TOY_BETA = 0.03


@pytest.fixture(scope="session")
def toy_dataset():
    return generate_dataset(TOY_SPEC)


@pytest.fixture(scope="session")
def toy_mlp():
    return Mlp(TOY_ARCH)


@pytest.fixture(scope="session")
def toy_theta(toy_dataset):
    checkpoints = train(TOY_ARCH, toy_dataset, TOY_TRAIN)
    return checkpoints[-1].params


@pytest.fixture(scope="session")
def toy_checkpoints(toy_dataset):
    return train(TOY_ARCH, toy_dataset, TOY_TRAIN)


@pytest.fixture()
def rng():
    return Rng(1234)


def small_problem(seed=0, n=12, arch=None):
    """A tiny net + batch for derivative oracles (P small enough for dense)."""
    from quadbias.model import Batch, one_hot

    arch = arch or MlpArchitecture((5, 8, 4), "relu", "cross_entropy")
    mlp = Mlp(arch)
    r = Rng(seed)
    params = mlp.init_params(r)
    x = r.normal(n * arch.input_dim).reshape(n, arch.input_dim)
    labels = r.integers(0, arch.output_dim, n)
    batch = Batch(x, one_hot(labels, arch.output_dim))
    return mlp, params, batch
