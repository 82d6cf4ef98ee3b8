"""Synthetic densely-annotated event timelines and surrogate features.

A :class:`DependencyGrammar` drives a frame-by-frame simulation: actions
start spontaneously (per-action base rates), trigger other actions after a
delay, and optionally co-occur. Timelines are rendered into feature
sequences by a fixed seeded class-embedding matrix plus isotropic noise,
standing in for pre-extracted video-clip features.

Everything here is a pure function of its explicit seed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateGrammarError

MAX_TIMELINE_RETRIES = 100


@dataclass(frozen=True)
class ActionVocabulary:
    actions: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.actions)) != len(self.actions):
            raise ConfigError("duplicate action identifiers")
        if len(self.actions) < 2:
            raise ConfigError("need at least 2 actions")

    @property
    def num_classes(self) -> int:
        return len(self.actions)

    def index(self, action: str) -> int:
        try:
            return self.actions.index(action)
        except ValueError:
            raise ConfigError(f"action {action!r} not in vocabulary") from None


@dataclass(frozen=True)
class TriggerRule:
    source: str
    target: str
    delay_min: int
    delay_max: int
    probability: float


@dataclass(frozen=True)
class CoOccurrenceRule:
    action_a: str
    action_b: str
    probability: float


@dataclass
class DependencyGrammar:
    triggers: list[TriggerRule] = field(default_factory=list)
    co_occurrence: list[CoOccurrenceRule] = field(default_factory=list)
    base_rates: dict[str, float] = field(default_factory=dict)
    duration_range: dict[str, tuple[int, int]] = field(default_factory=dict)
    density_mode: str = "dense"  # dense: multi-label; sparse: <=1 label/frame

    def validate(self, vocab: ActionVocabulary) -> None:
        names = set(vocab.actions)
        for rule in self.triggers:
            if rule.source not in names or rule.target not in names:
                raise ConfigError(f"trigger references unknown action: {rule}")
            if not (0.0 <= rule.probability <= 1.0):
                raise ConfigError(f"trigger probability out of [0,1]: {rule}")
            if rule.delay_min < 0 or rule.delay_min > rule.delay_max:
                raise ConfigError(f"bad delay range: {rule}")
        for rule in self.co_occurrence:
            if rule.action_a not in names or rule.action_b not in names:
                raise ConfigError(f"co-occurrence references unknown action: {rule}")
            if not (0.0 <= rule.probability <= 1.0):
                raise ConfigError(f"co-occurrence probability out of [0,1]: {rule}")
        for action, rate in self.base_rates.items():
            if action not in names:
                raise ConfigError(f"base rate for unknown action {action!r}")
            if not (0.0 <= rate <= 1.0):
                raise ConfigError(f"base rate out of [0,1] for {action!r}")
        for action, (lo, hi) in self.duration_range.items():
            if action not in names:
                raise ConfigError(f"duration for unknown action {action!r}")
            if lo < 1 or lo > hi:
                raise ConfigError(f"bad duration range for {action!r}: ({lo}, {hi})")
        if self.density_mode not in ("dense", "sparse"):
            raise ConfigError("density_mode must be 'dense' or 'sparse'")
        if self.density_mode == "sparse" and self.co_occurrence:
            raise ConfigError("sparse mode cannot carry co-occurrence rules")

    def duration_of(self, action: str) -> tuple[int, int]:
        return self.duration_range.get(action, (1, 1))


@dataclass(frozen=True)
class EventTimeline:
    labels: np.ndarray  # (num_frames, num_classes) uint8 in {0,1}

    @property
    def num_frames(self) -> int:
        return self.labels.shape[0]

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class FeatureSequence:
    features: np.ndarray  # (num_frames, feature_dim) float32

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def _draw_duration(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def _simulate(grammar, vocab, num_frames, rng, forced_starts):
    n = vocab.num_classes
    labels = np.zeros((num_frames, n), dtype=np.uint8)
    sparse = grammar.density_mode == "sparse"
    # remaining active frames per class; scheduled[t] holds class indices
    active = np.zeros(n, dtype=np.int64)
    scheduled: dict[int, list[int]] = {}
    forced: dict[int, list[tuple[int, int]]] = {}
    for frame, action, duration in forced_starts:
        forced.setdefault(frame, []).append((vocab.index(action), duration))

    def start(t, cls, duration):
        if sparse and active.any() and active[cls] == 0:
            active[:] = 0  # scheduled/forced start preempts the ongoing action
        active[cls] = max(active[cls], duration)
        end = t + duration
        for rule in grammar.triggers:
            if rule.source != vocab.actions[cls]:
                continue
            if rule.probability >= 1.0 or rng.random() < rule.probability:
                delay = int(rng.integers(rule.delay_min, rule.delay_max + 1))
                if end + delay < num_frames:
                    scheduled.setdefault(end + delay, []).append(
                        vocab.index(rule.target)
                    )
        if not sparse:
            for rule in grammar.co_occurrence:
                if rule.action_a != vocab.actions[cls]:
                    continue
                other = vocab.index(rule.action_b)
                if active[other] == 0 and rng.random() < rule.probability:
                    lo, hi = grammar.duration_of(rule.action_b)
                    active[other] = _draw_duration(rng, lo, hi)

    for t in range(num_frames):
        for cls, duration in forced.get(t, ()):
            start(t, cls, duration)
        starters = scheduled.pop(t, [])
        if sparse and len(starters) > 1:
            starters = [min(starters)]  # deterministic tie-break
        for cls in sorted(starters):
            lo, hi = grammar.duration_of(vocab.actions[cls])
            start(t, cls, _draw_duration(rng, lo, hi))
        # spontaneous starts
        for cls, action in enumerate(vocab.actions):
            rate = grammar.base_rates.get(action, 0.0)
            if rate <= 0.0 or active[cls] > 0:
                continue
            if sparse and active.any():
                continue
            if rng.random() < rate:
                lo, hi = grammar.duration_of(action)
                start(t, cls, _draw_duration(rng, lo, hi))
        labels[t] = active > 0
        active = np.maximum(active - 1, 0)
    return labels


def generate_timeline(
    grammar: DependencyGrammar,
    vocab: ActionVocabulary,
    num_frames: int,
    seed: int,
    forced_starts: list[tuple[int, str, int]] | None = None,
) -> EventTimeline:
    """Simulate one video's per-frame multi-hot labels.

    ``forced_starts`` is a list of (frame, action, duration) occurrences
    injected unconditionally; useful for pinning down trigger chains.
    Retries with derived sub-seeds until at least one frame is labeled,
    erroring after MAX_TIMELINE_RETRIES attempts.
    """
    if num_frames < 1:
        raise ConfigError("num_frames must be >= 1")
    grammar.validate(vocab)
    forced_starts = list(forced_starts or [])
    for attempt in range(MAX_TIMELINE_RETRIES):
        rng = np.random.Generator(np.random.PCG64([seed, attempt]))
        labels = _simulate(grammar, vocab, num_frames, rng, forced_starts)
        if labels.any():
            return EventTimeline(labels=labels)
    raise DegenerateGrammarError(
        f"no active frame after {MAX_TIMELINE_RETRIES} attempts (seed {seed})"
    )


def class_embeddings(num_classes: int, feature_dim: int, seed: int) -> np.ndarray:
    """Unit-norm rows mapping each class to a fixed direction in feature space."""
    rng = np.random.Generator(np.random.PCG64([seed, 0xE]))
    emb = rng.standard_normal((num_classes, feature_dim))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    return emb.astype(np.float32)


def render_features(
    timeline: EventTimeline,
    feature_dim: int,
    noise_sigma: float,
    seed: int,
    embedding_seed: int = 0,
) -> FeatureSequence:
    """labels @ E + Gaussian noise, E fixed by ``embedding_seed``."""
    if feature_dim < timeline.num_classes:
        raise ConfigError("feature_dim must be >= num_classes")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be >= 0")
    emb = class_embeddings(timeline.num_classes, feature_dim, embedding_seed)
    feats = timeline.labels.astype(np.float32) @ emb
    if noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64([seed, 0xF]))
        noise = rng.standard_normal(feats.shape).astype(np.float32)
        feats = feats + np.float32(noise_sigma) * noise
    return FeatureSequence(features=feats.astype(np.float32))


def make_split(
    grammar: DependencyGrammar,
    vocab: ActionVocabulary,
    num_videos: int,
    num_frames: int,
    feature_dim: int,
    noise_sigma: float,
    seed_base: int,
    embedding_seed: int = 0,
) -> list[tuple[FeatureSequence, EventTimeline]]:
    pairs = []
    for i in range(num_videos):
        timeline = generate_timeline(grammar, vocab, num_frames, seed_base + i)
        feats = render_features(
            timeline, feature_dim, noise_sigma, seed_base + i, embedding_seed
        )
        pairs.append((feats, timeline))
    return pairs


def make_dataset(cfg, grammar: DependencyGrammar, vocab: ActionVocabulary):
    """Generate (train, test) splits with disjoint per-video seeds."""
    cfg.validate()
    grammar.validate(vocab)
    train_base = cfg.seed * 1_000_003
    test_base = train_base + 500_000  # disjoint from any plausible train count
    if cfg.train_videos >= 500_000:
        raise ConfigError("train_videos too large for seed partitioning")
    common = (cfg.num_frames, cfg.feature_dim, cfg.noise_sigma)
    train = make_split(
        grammar, vocab, cfg.train_videos, *common, train_base, cfg.embedding_seed
    )
    test = make_split(
        grammar, vocab, cfg.test_videos, *common, test_base, cfg.embedding_seed
    )
    return train, test


# ---------------------------------------------------------------------------
# Grammar config parsing.
#
#   grammar.actions       = run, catch, throw
#   grammar.density_mode  = dense
#   grammar.base_rate.run = 0.02
#   grammar.duration.run  = 8..16
#   grammar.trigger       = run -> catch : delay 20..30 : p 0.9
#   grammar.cooccur       = run + throw : p 0.3

_TRIGGER_RE = re.compile(
    r"^(?P<src>[\w-]+)\s*->\s*(?P<dst>[\w-]+)\s*:\s*delay\s+(?P<lo>\d+)\s*\.\.\s*"
    r"(?P<hi>\d+)\s*:\s*p\s+(?P<p>[\d.eE+-]+)$"
)
_COOCCUR_RE = re.compile(
    r"^(?P<a>[\w-]+)\s*\+\s*(?P<b>[\w-]+)\s*:\s*p\s+(?P<p>[\d.eE+-]+)$"
)
_RANGE_RE = re.compile(r"^(?P<lo>\d+)\s*\.\.\s*(?P<hi>\d+)$")


def grammar_from_kv(kv: dict) -> tuple[DependencyGrammar, ActionVocabulary]:
    if "grammar.actions" not in kv:
        raise ConfigError("missing required key 'grammar.actions'")
    actions = tuple(a.strip() for a in kv["grammar.actions"].split(",") if a.strip())
    vocab = ActionVocabulary(actions)
    grammar = DependencyGrammar(
        density_mode=kv.get("grammar.density_mode", "dense")
    )
    for spec_str in kv.get("grammar.trigger", []):
        m = _TRIGGER_RE.match(spec_str.strip())
        if not m:
            raise ConfigError(f"cannot parse grammar.trigger rule: {spec_str!r}")
        grammar.triggers.append(
            TriggerRule(
                m["src"], m["dst"], int(m["lo"]), int(m["hi"]), float(m["p"])
            )
        )
    for spec_str in kv.get("grammar.cooccur", []):
        m = _COOCCUR_RE.match(spec_str.strip())
        if not m:
            raise ConfigError(f"cannot parse grammar.cooccur rule: {spec_str!r}")
        grammar.co_occurrence.append(
            CoOccurrenceRule(m["a"], m["b"], float(m["p"]))
        )
    for key, value in kv.items():
        if key.startswith("grammar.base_rate."):
            grammar.base_rates[key.rsplit(".", 1)[1]] = float(value)
        elif key.startswith("grammar.duration."):
            m = _RANGE_RE.match(str(value).strip())
            if not m:
                raise ConfigError(f"cannot parse duration range {value!r} for {key}")
            grammar.duration_range[key.rsplit(".", 1)[1]] = (
                int(m["lo"]),
                int(m["hi"]),
            )
    grammar.validate(vocab)
    return grammar, vocab


def grammar_to_kv(grammar: DependencyGrammar, vocab: ActionVocabulary) -> dict:
    kv: dict = {
        "grammar.actions": ", ".join(vocab.actions),
        "grammar.density_mode": grammar.density_mode,
    }
    if grammar.triggers:
        kv["grammar.trigger"] = [
            f"{r.source} -> {r.target} : delay {r.delay_min}..{r.delay_max} : p {r.probability}"
            for r in grammar.triggers
        ]
    if grammar.co_occurrence:
        kv["grammar.cooccur"] = [
            f"{r.action_a} + {r.action_b} : p {r.probability}"
            for r in grammar.co_occurrence
        ]
    for action, rate in grammar.base_rates.items():
        kv[f"grammar.base_rate.{action}"] = rate
    for action, (lo, hi) in grammar.duration_range.items():
        kv[f"grammar.duration.{action}"] = f"{lo}..{hi}"
    return kv
