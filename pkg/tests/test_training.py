import dataclasses
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from joadaa.config import DatasetConfig, ModelConfig, TrainConfig
from joadaa.errors import ConfigError, TrainingDivergedError
from joadaa.model import Joadaa, PredictionBundle
from joadaa.synth_data import (
    ActionVocabulary,
    DependencyGrammar,
    TriggerRule,
    make_dataset,
)
from joadaa.training import (
    build_window,
    compute_loss,
    loss_targets,
    lr_at,
    train,
)


# --- schedule ---------------------------------------------------------------


def test_schedule_endpoints_and_peak():
    cfg = TrainConfig()
    total = 1000
    assert lr_at(0, total, cfg) == 0.0
    assert lr_at(400, total, cfg) == pytest.approx(5e-5, abs=0)
    assert lr_at(total, total, cfg) <= 1e-12


def test_schedule_errors():
    cfg = TrainConfig()
    with pytest.raises(ConfigError):
        lr_at(0, 0, cfg)
    with pytest.raises(ConfigError):
        lr_at(-1, 10, cfg)
    with pytest.raises(ConfigError):
        lr_at(11, 10, cfg)


@settings(max_examples=40, deadline=None)
@given(total=st.integers(10, 5000), frac=st.floats(0.05, 0.95))
def test_schedule_shape(total, frac):
    cfg = TrainConfig(warmup_fraction=frac)
    values = [lr_at(s, total, cfg) for s in range(total + 1)]
    assert min(values) >= 0.0
    peak_step = int(round(frac * total))
    assert max(values) <= cfg.peak_lr + 1e-18
    # maximum sits at the warmup boundary
    assert max(values) == pytest.approx(
        max(lr_at(math.floor(frac * total), total, cfg),
            lr_at(math.ceil(frac * total), total, cfg))
    )
    jumps = np.abs(np.diff(values))
    # per-step jump bounded by the max analytic slope of either piece
    max_slope = cfg.peak_lr * max(
        1.0 / (frac * total), math.pi / (2 * (1 - frac) * total)
    )
    assert jumps.max() <= max_slope * (1 + 1e-9)


# --- loss -------------------------------------------------------------------


def _bundle_from_logits(past, ant, online, hidden=4):
    z = torch.zeros
    return PredictionBundle(
        past_logits=past,
        anticipation_logits=ant,
        online_logits=online,
        past_embeddings=z(past.shape[0], hidden),
        anticipation_embeddings=z(ant.shape[0], hidden),
        updated_current_embedding=z(hidden),
    )


def bce_loop_oracle(logits, targets):
    total = 0.0
    n = 0
    for i in range(logits.shape[0]):
        for j in range(logits.shape[1]):
            x = float(logits[i, j])
            y = float(targets[i, j])
            p = 1.0 / (1.0 + math.exp(-x))
            total += -(y * math.log(p) + (1 - y) * math.log(1 - p))
            n += 1
    return total / n


def test_perfect_logits_give_near_zero_loss(tiny_model_cfg, tiny_train_cfg):
    cfg = dataclasses.replace(tiny_model_cfg, anticipation_frames=1)
    labels = np.zeros((10, cfg.num_classes), dtype=np.uint8)
    labels[:, 0] = 1
    t, wf = 4, 4
    to_logits = lambda rows: torch.tensor(
        (rows * 40.0 - 20.0), dtype=torch.float32
    )
    bundle = _bundle_from_logits(
        to_logits(labels[0:4].astype(np.float32)),
        to_logits(labels[4:6].astype(np.float32)),
        to_logits(labels[4].astype(np.float32)),
    )
    total, report = compute_loss(bundle, labels, t, cfg, tiny_train_cfg, wf)
    assert report.total < 1e-6


def test_all_zero_logits_sigmoid_is_ln2(tiny_model_cfg, tiny_train_cfg):
    cfg = dataclasses.replace(tiny_model_cfg, anticipation_frames=0)
    labels = np.zeros((6, cfg.num_classes), dtype=np.uint8)
    labels[:, 1] = 1
    bundle = _bundle_from_logits(
        torch.zeros(3, cfg.num_classes),
        torch.zeros(1, cfg.num_classes),
        torch.zeros(cfg.num_classes),
    )
    _, report = compute_loss(bundle, labels, 3, cfg, tiny_train_cfg, 3)
    for value in report.per_head:
        assert value == pytest.approx(math.log(2), rel=1e-6)


def test_loss_matches_scalar_loop_oracle(tiny_model_cfg, tiny_train_cfg):
    cfg = dataclasses.replace(tiny_model_cfg, anticipation_frames=2)
    rng = np.random.Generator(np.random.PCG64(21))
    labels = (rng.random((12, cfg.num_classes)) < 0.4).astype(np.uint8)
    t, wf = 5, 5
    g = torch.Generator().manual_seed(22)
    past = torch.randn(wf, cfg.num_classes, generator=g)
    ant = torch.randn(3, cfg.num_classes, generator=g)
    online = torch.randn(cfg.num_classes, generator=g)
    bundle = _bundle_from_logits(past, ant, online)
    _, report = compute_loss(bundle, labels, t, cfg, tiny_train_cfg, wf)
    assert report.past == pytest.approx(
        bce_loop_oracle(past, labels[0:5]), rel=1e-6
    )
    assert report.anticipation == pytest.approx(
        bce_loop_oracle(ant, labels[5:8]), rel=1e-6
    )
    assert report.present == pytest.approx(
        bce_loop_oracle(online.unsqueeze(0), labels[5:6]), rel=1e-6
    )
    w = tiny_train_cfg.loss_weights
    assert report.total == pytest.approx(
        w[0] * report.past + w[1] * report.anticipation + w[2] * report.present,
        abs=1e-6,
    )


def test_anticipation_targets_truncated_at_video_end(tiny_model_cfg):
    labels = np.zeros((10, 4), dtype=np.uint8)
    past, ant, present = loss_targets(labels, 8, 4, n_f=6)
    assert past.shape == (4, 4)
    assert ant.shape == (2, 4)  # frames 8, 9 only
    assert present.shape == (1, 4)


def test_softmax_loss_with_background(tiny_train_cfg):
    cfg = ModelConfig(
        feature_dim=8, hidden_dim=16, num_heads=2, num_classes=4,
        head_mode="softmax", anticipation_frames=0, dropout_rate=0.0,
        long_capacity=4, short_capacity=4,
    )
    labels = np.zeros((6, 4), dtype=np.uint8)
    labels[2, 3] = 1  # one labeled frame; the rest map to background
    logits = torch.zeros(3, cfg.num_outputs)
    bundle = _bundle_from_logits(
        logits, torch.zeros(1, cfg.num_outputs), torch.zeros(cfg.num_outputs)
    )
    _, report = compute_loss(bundle, labels, 3, cfg, tiny_train_cfg, 3)
    # uniform logits over C+1 entries
    assert report.past == pytest.approx(math.log(cfg.num_outputs), rel=1e-6)
    # multi-label target in softmax mode is a contract violation
    labels[2, 1] = 1
    with pytest.raises(ConfigError):
        compute_loss(bundle, labels, 3, cfg, tiny_train_cfg, 3)


# --- training loop ----------------------------------------------------------


@pytest.fixture()
def easy_dataset():
    vocab = ActionVocabulary(("aa", "bb", "cc"))
    grammar = DependencyGrammar(
        base_rates={"aa": 0.08, "bb": 0.06, "cc": 0.05},
        duration_range={a: (4, 8) for a in vocab.actions},
    )
    cfg = DatasetConfig(
        train_videos=2, test_videos=1, num_frames=48, feature_dim=8,
        noise_sigma=0.1, seed=3,
    )
    return make_dataset(cfg, grammar, vocab)


def small_cfgs(**overrides):
    model_cfg = ModelConfig(
        feature_dim=8, hidden_dim=16, num_heads=2, num_classes=3,
        num_encoder_layers=1, num_decoder_layers=1, anticipation_frames=2,
        dropout_rate=0.0, long_capacity=8, short_capacity=8,
    )
    train_cfg = TrainConfig(epochs=4, batch_size=2, peak_lr=2e-3, seed=1)
    for key, value in overrides.items():
        if hasattr(model_cfg, key):
            setattr(model_cfg, key, value)
        else:
            setattr(train_cfg, key, value)
    return model_cfg, train_cfg


def test_training_reduces_loss(easy_dataset):
    train_pairs, _ = easy_dataset
    model_cfg, train_cfg = small_cfgs(epochs=6)
    _, metrics = train(train_pairs, model_cfg, train_cfg)
    assert metrics[-1].loss_total < metrics[0].loss_total


def test_training_deterministic(easy_dataset):
    train_pairs, _ = easy_dataset
    model_cfg, train_cfg = small_cfgs()
    m1, metrics1 = train(train_pairs, model_cfg, train_cfg)
    m2, metrics2 = train(train_pairs, model_cfg, train_cfg)
    assert [m.as_log_line() for m in metrics1] == \
        [m.as_log_line() for m in metrics2]
    for p1, p2 in zip(m1.state_dict().values(), m2.state_dict().values()):
        assert torch.equal(p1, p2)


def test_no_anticipation_arm_reduces_to_oad_only(easy_dataset):
    train_pairs, _ = easy_dataset
    model_cfg, train_cfg = small_cfgs(
        anticipation_frames=0, loss_weight_anticipation=0.0, epochs=1
    )
    model, metrics = train(train_pairs, model_cfg, train_cfg)
    assert model.cfg.num_queries == 1
    # anticipation head contributes nothing to the optimised total
    assert metrics[0].loss_total == pytest.approx(
        metrics[0].loss_past + metrics[0].loss_present, rel=1e-5
    )


def test_decoupled_weight_decay_frozen_at_zero_lr(easy_dataset):
    train_pairs, _ = easy_dataset
    model_cfg, _ = small_cfgs()
    torch.manual_seed(0)
    model = Joadaa(model_cfg)
    before = [p.detach().clone() for p in model.parameters()]
    opt = torch.optim.AdamW(model.parameters(), lr=0.0, weight_decay=10.0)
    feats, labels = train_pairs[0][0].features, train_pairs[0][1].labels
    window, padding, real = build_window(feats, 5, model_cfg)
    bundle = model(window, padding, feats[5])
    loss, _ = compute_loss(
        bundle, labels, 5, model_cfg, TrainConfig(), real
    )
    loss.backward()
    opt.step()
    for p, b in zip(model.parameters(), before):
        assert torch.equal(p.detach(), b)


def test_non_finite_loss_raises_with_diagnostics(easy_dataset):
    train_pairs, _ = easy_dataset
    model_cfg, train_cfg = small_cfgs(epochs=1)

    class Poisoned(list):
        pass

    feats = train_pairs[0][0].features.copy()
    feats[3] = np.nan
    from joadaa.synth_data import FeatureSequence

    poisoned = [(FeatureSequence(features=feats), train_pairs[0][1])] + \
        train_pairs[1:]
    with pytest.raises(TrainingDivergedError) as err:
        train(poisoned, model_cfg, train_cfg)
    assert err.value.step is not None
    assert err.value.batch_ids


def test_empty_dataset_rejected():
    model_cfg, train_cfg = small_cfgs()
    with pytest.raises(ConfigError):
        train([], model_cfg, train_cfg)
