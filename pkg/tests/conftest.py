"""Shared fixtures.

The expensive trained models are session-scoped: the skill benchmark and the
robustness experiment reuse the same three seeded runs. (The regularizer
comparison trains its own matched-epoch pair in ``test_acceptance.py``.)
"""

from __future__ import annotations

import warnings

import pytest

from hyperphen.data import split_dataset
from hyperphen.model import ModelConfig
from hyperphen.synthetic import SyntheticConfig, generate_synthetic
from hyperphen.training import TrainConfig, train_single

# The shipped corpus: the default generator config at this seed (also written
# by `hyperphen synth` with configs/synthetic_default.json).
CORPUS_SEED = 3
SPLIT_SEED = 7


@pytest.fixture(scope="session")
def corpus():
    return generate_synthetic(SyntheticConfig(), CORPUS_SEED)


@pytest.fixture(scope="session")
def splits(corpus):
    return split_dataset(corpus, (0.8, 0.1, 0.1), SPLIT_SEED)


@pytest.fixture(scope="session")
def tiny_corpus():
    config = SyntheticConfig(n_patients=30, n_codes=30, n_clusters=3, visits_per_patient=(3, 5))
    return generate_synthetic(config, CORPUS_SEED)


@pytest.fixture(scope="session")
def small_model_config():
    return ModelConfig(d_c=4, unigin_dims=(16, 16), n_phenotypes=3, d_hid=16, n_attn_heads=2)


@pytest.fixture(scope="session")
def train_config():
    return TrainConfig(epochs=20, patience=10, seeds=(0, 1, 2))


@pytest.fixture(scope="session")
def trained_runs(splits, train_config):
    """Three independently seeded models trained on the shipped corpus."""
    train_ds, val_ds, _ = splits
    runs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for seed in train_config.seeds:
            runs.append(train_single(train_ds, val_ds, train_config, seed))
    return runs


@pytest.fixture(scope="session")
def trained_model(trained_runs):
    return trained_runs[0][0]
