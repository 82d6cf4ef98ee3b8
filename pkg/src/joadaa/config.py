"""Dataclass configs and the key-value config file format.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Keys are dotted: ``model.hidden_dim = 64``, ``train.epochs = 10``. Grammar
rules use the repeated keys ``grammar.trigger`` / ``grammar.cooccur`` (see
:mod:`joadaa.synth_data` for the rule syntax).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

MEMORY_MODES = ("short_only", "long_short")
HEAD_MODES = ("softmax", "sigmoid")
HEAD_KINDS = ("fused", "fc")


@dataclass
class ModelConfig:
    feature_dim: int = 16
    hidden_dim: int = 64
    num_heads: int = 4
    num_encoder_layers: int = 2
    num_decoder_layers: int = 2
    num_head_encoder_layers: int = 1
    anticipation_frames: int = 6  # number of strictly-future frames predicted
    num_classes: int = 8
    head_mode: str = "sigmoid"  # softmax | sigmoid
    head_kind: str = "fused"  # fused (TCN + encoder) | fc
    tcn_kernel_size: int = 3
    dropout_rate: float = 0.1
    memory_mode: str = "long_short"
    long_capacity: int = 512
    short_capacity: int = 32

    @property
    def num_queries(self) -> int:
        return 1 + self.anticipation_frames

    @property
    def num_outputs(self) -> int:
        # softmax mode appends an implicit background column for frames
        # with no active action
        return self.num_classes + (1 if self.head_mode == "softmax" else 0)

    def validate(self) -> None:
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError("hidden_dim must be divisible by num_heads")
        if self.anticipation_frames < 0:
            raise ConfigError("anticipation_frames must be >= 0")
        if self.tcn_kernel_size < 1 or self.tcn_kernel_size % 2 == 0:
            raise ConfigError("tcn_kernel_size must be odd and >= 1")
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"head_mode must be one of {HEAD_MODES}")
        if self.head_kind not in HEAD_KINDS:
            raise ConfigError(f"head_kind must be one of {HEAD_KINDS}")
        if self.memory_mode not in MEMORY_MODES:
            raise ConfigError(f"memory_mode must be one of {MEMORY_MODES}")
        if self.feature_dim < 1 or self.num_classes < 2:
            raise ConfigError("feature_dim >= 1 and num_classes >= 2 required")
        if self.long_capacity < 0 or self.short_capacity < 1:
            raise ConfigError("capacities invalid")


@dataclass
class TrainConfig:
    peak_lr: float = 5e-5
    weight_decay: float = 5e-5
    warmup_fraction: float = 0.4
    batch_size: int = 4
    epochs: int = 25
    loss_weight_past: float = 1.0
    loss_weight_anticipation: float = 1.0
    loss_weight_present: float = 1.0
    grad_clip_norm: float = 1.0  # <= 0 disables clipping
    eval_every: int = 0  # epochs between held-out evals; 0 disables
    seed: int = 0

    @property
    def loss_weights(self) -> tuple[float, float, float]:
        return (
            self.loss_weight_past,
            self.loss_weight_anticipation,
            self.loss_weight_present,
        )

    def validate(self) -> None:
        if not (0.0 < self.warmup_fraction < 1.0):
            raise ConfigError("warmup_fraction must be in (0, 1)")
        if min(self.loss_weights) < 0 or max(self.loss_weights) == 0:
            raise ConfigError("loss weights must be >= 0 and not all zero")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr must be > 0")


@dataclass
class DatasetConfig:
    train_videos: int = 8
    test_videos: int = 2
    num_frames: int = 256
    feature_dim: int = 16
    noise_sigma: float = 0.5
    seed: int = 0
    embedding_seed: int = 0

    def validate(self) -> None:
        if self.train_videos < 1 or self.test_videos < 1:
            raise ConfigError("splits must contain at least one video")
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")


_CONFIG_SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "dataset": DatasetConfig,
}

# keys that may repeat and are collected into lists
_MULTI_KEYS = {"grammar.trigger", "grammar.cooccur"}


def parse_kv_text(text: str) -> dict:
    """Parse ``key = value`` lines into a flat dict (lists for multi-keys)."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if key in _MULTI_KEYS:
            out.setdefault(key, []).append(value)
        elif key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        else:
            out[key] = value
    return out


def load_kv_file(path) -> dict:
    return parse_kv_text(Path(path).read_text())


def _coerce(value: str, target_type):
    try:
        if target_type is bool:
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
        return target_type(value)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {value!r} as {target_type.__name__}") from exc


def section_from_kv(kv: dict, section: str):
    """Build the dataclass for ``section`` from dotted keys, validating it."""
    cls = _CONFIG_SECTIONS[section]
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs = {}
    prefix = section + "."
    for key, value in kv.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        if name not in fields:
            raise ConfigError(f"unknown key {key!r}")
        ftype = {"int": int, "float": float, "str": str, "bool": bool}[fields[name]]
        kwargs[name] = _coerce(value, ftype)
    cfg = cls(**kwargs)
    cfg.validate()
    return cfg


def kv_from_section(cfg, section: str) -> dict:
    return {
        f"{section}.{f.name}": getattr(cfg, f.name)
        for f in dataclasses.fields(type(cfg))
    }


def format_kv(kv: dict) -> str:
    lines = []
    for key in kv:
        value = kv[key]
        if isinstance(value, list):
            lines.extend(f"{key} = {v}" for v in value)
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def dump_kv_file(path, kv: dict) -> None:
    Path(path).write_text(format_kv(kv))
