import numpy as np
import pytest

from joadaa.config import DatasetConfig
from joadaa.errors import ConfigError, DegenerateGrammarError
from joadaa.synth_data import (
    ActionVocabulary,
    DependencyGrammar,
    TriggerRule,
    CoOccurrenceRule,
    class_embeddings,
    generate_timeline,
    grammar_from_kv,
    grammar_to_kv,
    make_dataset,
    render_features,
)
from joadaa.config import parse_kv_text


def test_forced_trigger_fires_at_exact_frame():
    vocab = ActionVocabulary(("A", "B"))
    grammar = DependencyGrammar(
        triggers=[TriggerRule("A", "B", 2, 2, 1.0)],
        duration_range={"A": (1, 1), "B": (1, 1)},
    )
    tl = generate_timeline(grammar, vocab, 10, 0, forced_starts=[(0, "A", 1)])
    # A covers frame 0, ends at 1; delay 2 puts B at frame 3
    assert tl.labels[0, 0] == 1
    assert tl.labels[3, 1] == 1
    assert tl.labels[1:3, 1].sum() == 0


def test_degenerate_grammar_errors_after_bounded_retries(vocab):
    grammar = DependencyGrammar(base_rates={})
    with pytest.raises(DegenerateGrammarError):
        generate_timeline(grammar, vocab, 20, 0)


def test_unknown_action_rejected(vocab):
    grammar = DependencyGrammar(base_rates={"nope": 0.5})
    with pytest.raises(ConfigError):
        generate_timeline(grammar, vocab, 20, 0)


def test_timeline_deterministic(base_grammar, vocab):
    a = generate_timeline(base_grammar, vocab, 100, 42)
    b = generate_timeline(base_grammar, vocab, 100, 42)
    assert np.array_equal(a.labels, b.labels)
    c = generate_timeline(base_grammar, vocab, 100, 43)
    assert not np.array_equal(a.labels, c.labels)


def test_trigger_realizability():
    # probability 1 and fixed delay: every source end must schedule the target
    vocab = ActionVocabulary(("src", "dst"))
    grammar = DependencyGrammar(
        triggers=[TriggerRule("src", "dst", 5, 5, 1.0)],
        base_rates={"src": 0.04},
        duration_range={"src": (3, 3), "dst": (2, 2)},
    )
    for seed in range(10):
        tl = generate_timeline(grammar, vocab, 200, seed)
        src = tl.labels[:, 0]
        starts = np.flatnonzero(np.diff(np.concatenate([[0], src])) == 1)
        for s in starts:
            end = s + 3
            if end + 5 < 200:
                assert tl.labels[end + 5, 1] == 1, (seed, s)


def test_sparse_mode_at_most_one_label(vocab):
    grammar = DependencyGrammar(
        triggers=[TriggerRule("run", "catch", 1, 3, 1.0)],
        base_rates={"run": 0.1, "throw": 0.1, "jump": 0.1},
        duration_range={a: (2, 6) for a in vocab.actions},
        density_mode="sparse",
    )
    for seed in range(20):
        tl = generate_timeline(grammar, vocab, 150, seed)
        assert tl.labels.sum(axis=1).max() <= 1


def test_sparse_mode_rejects_cooccurrence(vocab):
    grammar = DependencyGrammar(
        co_occurrence=[CoOccurrenceRule("run", "jump", 0.5)],
        base_rates={"run": 0.1},
        density_mode="sparse",
    )
    with pytest.raises(ConfigError):
        generate_timeline(grammar, vocab, 50, 0)


def test_density_matches_monte_carlo_oracle():
    # independent oracle: a single action with base rate p and duration d is
    # a renewal process; simulate it directly with a plain loop
    p, d = 0.05, 4
    vocab = ActionVocabulary(("x", "pad"))
    grammar = DependencyGrammar(
        base_rates={"x": p}, duration_range={"x": (d, d)}
    )
    frames = 400
    means = []
    for seed in range(120):
        tl = generate_timeline(grammar, vocab, frames, seed)
        means.append(tl.labels.sum(axis=1).mean())
    observed = np.mean(means)

    rng = np.random.Generator(np.random.PCG64(999))
    active = 0
    hits = 0
    total = 200_000
    for _ in range(total):
        if active == 0 and rng.random() < p:
            active = d
        if active > 0:
            hits += 1
            active -= 1
    expected = hits / total
    assert abs(observed - expected) / expected < 0.2


def test_render_zero_noise_matches_embedding_rows():
    vocab = ActionVocabulary(("A", "B"))
    labels = np.zeros((12, 2), dtype=np.uint8)
    labels[5] = [1, 0]
    labels[9] = [1, 0]
    from joadaa.synth_data import EventTimeline

    tl = EventTimeline(labels=labels)
    seq = render_features(tl, 6, 0.0, seed=3)
    assert np.array_equal(seq.features[5], seq.features[9])
    assert np.array_equal(seq.features[0], np.zeros(6, dtype=np.float32))
    emb = class_embeddings(2, 6, 0)
    assert np.allclose(seq.features[5], emb[0])


def test_render_noise_matches_half_normal_mean():
    # E|N(0, sigma)| = sigma * sqrt(2/pi)
    vocab = ActionVocabulary(("A", "B"))
    from joadaa.synth_data import EventTimeline

    labels = np.zeros((2000, 2), dtype=np.uint8)
    labels[0, 0] = 1
    tl = EventTimeline(labels=labels)
    sigma = 0.1
    clean = render_features(tl, 8, 0.0, seed=11)
    noisy = render_features(tl, 8, sigma, seed=11)
    mad = np.abs(noisy.features - clean.features).mean()
    expected = sigma * np.sqrt(2 / np.pi)
    assert abs(mad - expected) / expected < 0.1


def test_render_preconditions():
    from joadaa.synth_data import EventTimeline

    tl = EventTimeline(labels=np.ones((4, 3), dtype=np.uint8))
    with pytest.raises(ConfigError):
        render_features(tl, 2, 0.0, seed=0)
    with pytest.raises(ConfigError):
        render_features(tl, 4, -1.0, seed=0)


def test_make_dataset_shapes_determinism_and_disjoint(base_grammar, vocab):
    cfg = DatasetConfig(
        train_videos=8, test_videos=2, num_frames=64, feature_dim=8,
        noise_sigma=0.2, seed=5,
    )
    train, test = make_dataset(cfg, base_grammar, vocab)
    assert len(train) == 8 and len(test) == 2
    for seq, tl in train + test:
        assert seq.features.shape == (64, 8)
        assert tl.labels.shape == (64, 4)
    train2, test2 = make_dataset(cfg, base_grammar, vocab)
    for (a, ta), (b, tb) in zip(train + test, train2 + test2):
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(ta.labels, tb.labels)
    # no duplicated videos across splits
    for _, ttl in test:
        for _, rtl in train:
            assert not np.array_equal(ttl.labels, rtl.labels)


def test_make_dataset_rejects_empty_split(base_grammar, vocab):
    cfg = DatasetConfig(train_videos=0, test_videos=1)
    with pytest.raises(ConfigError):
        make_dataset(cfg, base_grammar, vocab)


def test_grammar_kv_round_trip(base_grammar, vocab):
    kv = grammar_to_kv(base_grammar, vocab)
    from joadaa.config import format_kv

    grammar2, vocab2 = grammar_from_kv(parse_kv_text(format_kv(kv)))
    assert vocab2.actions == vocab.actions
    assert grammar2.triggers == base_grammar.triggers
    assert grammar2.base_rates == base_grammar.base_rates
    assert grammar2.duration_range == base_grammar.duration_range


def test_grammar_kv_missing_actions_key():
    with pytest.raises(ConfigError, match="grammar.actions"):
        grammar_from_kv({"grammar.density_mode": "dense"})
