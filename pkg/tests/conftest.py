import numpy as np
import pytest
import torch

from joadaa.config import ModelConfig, TrainConfig
from joadaa.synth_data import (
    ActionVocabulary,
    DependencyGrammar,
    TriggerRule,
)

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def vocab():
    return ActionVocabulary(("run", "catch", "throw", "jump"))


@pytest.fixture()
def base_grammar():
    return DependencyGrammar(
        triggers=[TriggerRule("run", "catch", 4, 8, 0.9)],
        base_rates={"run": 0.05, "throw": 0.03, "jump": 0.02},
        duration_range={a: (2, 5) for a in ("run", "catch", "throw", "jump")},
    )


@pytest.fixture()
def tiny_model_cfg():
    return ModelConfig(
        feature_dim=8,
        hidden_dim=16,
        num_heads=2,
        num_encoder_layers=1,
        num_decoder_layers=1,
        anticipation_frames=2,
        num_classes=4,
        head_mode="sigmoid",
        dropout_rate=0.0,
        long_capacity=12,
        short_capacity=4,
    )


@pytest.fixture()
def tiny_train_cfg():
    return TrainConfig(epochs=2, batch_size=2, peak_lr=1e-3, seed=7)


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(1234))
