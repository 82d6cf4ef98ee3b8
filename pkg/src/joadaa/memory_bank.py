"""Streaming FIFO store of past frame features.

The buffer keeps the most recent ``long_capacity + short_capacity`` rows.
Windows are right-aligned and front-padded with zero rows during stream
warm-up; the padding mask (True = padded) is returned alongside so
attention can ignore those positions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .config import MEMORY_MODES
from .errors import ConfigError


@dataclass(frozen=True)
class FeatureWindow:
    matrix: np.ndarray  # (T, D) float32, causally ordered, most recent last
    padding: np.ndarray  # (T,) bool, True where the row is front padding
    mode: str

    @property
    def length(self) -> int:
        return self.matrix.shape[0]


class MemoryBank:
    def __init__(self, feature_dim: int, long_capacity: int = 512,
                 short_capacity: int = 32):
        if short_capacity < 1 or long_capacity < 0:
            raise ConfigError("short_capacity >= 1 and long_capacity >= 0 required")
        self.feature_dim = feature_dim
        self.long_capacity = long_capacity
        self.short_capacity = short_capacity
        self.total_pushed = 0
        self._buffer: deque[np.ndarray] = deque(
            maxlen=long_capacity + short_capacity
        )

    def __len__(self) -> int:
        return len(self._buffer)

    def push(self, feature_row: np.ndarray) -> None:
        row = np.asarray(feature_row, dtype=np.float32)
        if row.shape != (self.feature_dim,):
            raise ConfigError(
                f"feature row shape {row.shape}, expected ({self.feature_dim},)"
            )
        self._buffer.append(row.copy())
        self.total_pushed += 1

    def reset(self) -> None:
        self._buffer.clear()
        self.total_pushed = 0

    def window(self, mode: str) -> FeatureWindow:
        if mode not in MEMORY_MODES:
            raise ConfigError(f"mode must be one of {MEMORY_MODES}")
        if not self._buffer:
            raise ConfigError("cannot take a window of an empty memory bank")
        capacity = (
            self.short_capacity
            if mode == "short_only"
            else self.long_capacity + self.short_capacity
        )
        rows = list(self._buffer)[-capacity:]
        pad = capacity - len(rows)
        matrix = np.zeros((capacity, self.feature_dim), dtype=np.float32)
        if rows:
            matrix[pad:] = np.stack(rows)
        padding = np.zeros(capacity, dtype=bool)
        padding[:pad] = True
        return FeatureWindow(matrix=matrix, padding=padding, mode=mode)
