from __future__ import annotations

from pathlib import Path

import pytest

from moltree.cli import read_smiles_file
from moltree.molgraph import parse_smiles
from moltree.train import Model, TrainConfig, train

DATA = Path(__file__).resolve().parents[1] / "data"

# Pinned toy-scale training configuration used across the suite; the
# acceptance module reuses the resulting checkpoints.
OVERFIT_CONFIG = TrainConfig(
    hidden_dim=32,
    latent_dim=12,
    message_iterations=2,
    learning_rate=4e-3,
    lr_decay=0.995,
    batch_size=5,
    epochs=500,
    kl_weight_max=0.01,
    seed=7,
)


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return DATA / "corpus.smi"


@pytest.fixture(scope="session")
def train20_path() -> Path:
    return DATA / "train20.smi"


@pytest.fixture(scope="session")
def corpus(corpus_path):
    return [parse_smiles(s) for _, s in read_smiles_file(corpus_path)]


@pytest.fixture(scope="session")
def train20(train20_path):
    return [parse_smiles(s) for _, s in read_smiles_file(train20_path)]


@pytest.fixture(scope="session")
def overfit_model(train20) -> Model:
    return train(train20, OVERFIT_CONFIG)


@pytest.fixture(scope="session")
def joint_model(train20) -> Model:
    from moltree.latentopt import train_joint
    from moltree.molgraph import desk_property

    cfg = OVERFIT_CONFIG.override(epochs=300, property_weight=2.0)
    return train_joint(train20, cfg, property_fn=desk_property)
