"""Per-unit token layout used by both networks.

A window tensor ``[B, T, V, C]`` becomes ``[B, V, T*C]``: one token per spatial
unit carrying its whole time slice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio.series import WindowBatch, Windows


def to_tokens(x: np.ndarray) -> np.ndarray:
    B, T, V, C = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(B, V, T * C)


def from_tokens(tok: np.ndarray, T: int, C: int) -> np.ndarray:
    B, V, _ = tok.shape
    return np.ascontiguousarray(tok.reshape(B, V, T, C).transpose(0, 2, 1, 3))


@dataclass
class TokenSet:
    """All windows of a split, pre-arranged as tokens."""

    x_co: np.ndarray  # [N, V, M*C]
    target: np.ndarray  # [N, V, P*C]
    tod: np.ndarray  # [N] slot of the last history step
    dow: np.ndarray  # [N]
    window_start: np.ndarray  # [N]
    M: int
    P: int
    C: int

    @classmethod
    def from_windows(cls, windows: Windows) -> "TokenSet":
        b = windows.all()
        return cls.from_batch(b)

    @classmethod
    def from_batch(cls, b: WindowBatch) -> "TokenSet":
        return cls(
            to_tokens(b.x_co),
            to_tokens(b.x_ta),
            b.last_tod.copy(),
            b.last_dow.copy(),
            b.window_start.copy(),
            b.M,
            b.P,
            b.x_co.shape[3],
        )

    def __len__(self) -> int:
        return len(self.x_co)

    def take(self, rows) -> "TokenSet":
        rows = np.asarray(rows, dtype=np.int64)
        return TokenSet(
            self.x_co[rows],
            self.target[rows],
            self.tod[rows],
            self.dow[rows],
            self.window_start[rows],
            self.M,
            self.P,
            self.C,
        )

    def with_target(self, target: np.ndarray) -> "TokenSet":
        return TokenSet(self.x_co, target, self.tod, self.dow, self.window_start, self.M, self.P, self.C)

    def chunks(self, size: int):
        for i in range(0, len(self), size):
            yield self.take(np.arange(i, min(i + size, len(self))))
