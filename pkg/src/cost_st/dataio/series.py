"""Spatiotemporal series container, chronological splits and window extraction."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

from ..errors import DataError, InvalidArgument

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class Layout:
    """Either ``grid`` with ``(H, W)`` or ``graph`` with ``V`` nodes."""

    kind: str
    dims: tuple
    adjacency: Optional[np.ndarray] = None

    @classmethod
    def grid(cls, h: int, w: int) -> "Layout":
        return cls("grid", (int(h), int(w)))

    @classmethod
    def graph(cls, v: int, adjacency=None) -> "Layout":
        adj = None if adjacency is None else np.asarray(adjacency, dtype=np.float64)
        return cls("graph", (int(v),), adj)

    @property
    def n_units(self) -> int:
        return int(np.prod(self.dims))

    def to_header(self) -> dict:
        if self.kind == "grid":
            return {"grid": list(self.dims)}
        return {"graph": self.dims[0]}

    @classmethod
    def from_header(cls, d: dict) -> "Layout":
        if "grid" in d:
            h, w = d["grid"]
            return cls.grid(h, w)
        if "graph" in d:
            return cls.graph(d["graph"])
        raise InvalidArgument(f"unknown layout {d!r}")


@dataclass(frozen=True)
class SpatioTemporalSeries:
    values: np.ndarray  # [T, V, C]
    interval_minutes: int
    start_epoch_seconds: int
    layout: Layout
    channels: tuple = field(default=("value",))

    def __post_init__(self):
        if self.values.ndim != 3:
            raise InvalidArgument(f"values must be [T, V, C], got shape {self.values.shape}")
        if self.layout.n_units != self.values.shape[1]:
            raise InvalidArgument(
                f"layout {self.layout.kind}{self.layout.dims} does not match V={self.values.shape[1]}"
            )
        if self.interval_minutes <= 0:
            raise InvalidArgument("interval_minutes must be positive")
        if len(self.channels) != self.values.shape[2]:
            object.__setattr__(self, "channels", tuple(f"c{i}" for i in range(self.values.shape[2])))
        bad = ~np.isfinite(self.values)
        if bad.any():
            t, v, c = (int(i) for i in np.argwhere(bad)[0])
            raise DataError(f"non-finite value at (t={t}, v={v}, c={c})")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def V(self) -> int:
        return self.values.shape[1]

    @property
    def C(self) -> int:
        return self.values.shape[2]

    @property
    def steps_per_day(self) -> int:
        return max(1, SECONDS_PER_DAY // (self.interval_minutes * 60))

    def slice_time(self, start: int, stop: int) -> "SpatioTemporalSeries":
        return replace(
            self,
            values=self.values[start:stop],
            start_epoch_seconds=self.start_epoch_seconds + start * self.interval_minutes * 60,
        )

    def with_values(self, values: np.ndarray) -> "SpatioTemporalSeries":
        return replace(self, values=values)

    def calendar(self, t_index) -> tuple[np.ndarray, np.ndarray]:
        """Time-of-day slot and day-of-week (days since epoch mod 7) for time indices."""
        t = np.asarray(t_index, dtype=np.int64)
        seconds = self.start_epoch_seconds + t * self.interval_minutes * 60
        tod = (seconds % SECONDS_PER_DAY) // (self.interval_minutes * 60)
        dow = (seconds // SECONDS_PER_DAY) % 7
        return tod, dow


def split(series: SpatioTemporalSeries, ratios=(6, 2, 2)):
    """Chronological train/val/test split; train and val round down, test takes the rest."""
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (3,) or np.any(r <= 0):
        raise InvalidArgument(f"ratios must be three positive numbers, got {ratios!r}")
    r = r / r.sum()
    T = series.T
    # tiny epsilon guards exact ratios like 0.6*100 evaluating to 59.999...
    n_train = int(np.floor(T * r[0] + 1e-9))
    n_val = int(np.floor(T * r[1] + 1e-9))
    n_test = T - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InvalidArgument(f"series of length {T} is too short to split {tuple(ratios)}")
    return (
        series.slice_time(0, n_train),
        series.slice_time(n_train, n_train + n_val),
        series.slice_time(n_train + n_val, T),
    )


@dataclass(frozen=True)
class WindowBatch:
    x_co: np.ndarray  # [B, M, V, C]
    x_ta: np.ndarray  # [B, P, V, C]
    tod_index: np.ndarray  # [B, M+P]
    dow_index: np.ndarray  # [B, M+P]
    window_start: np.ndarray  # [B]

    @property
    def B(self) -> int:
        return self.x_co.shape[0]

    @property
    def M(self) -> int:
        return self.x_co.shape[1]

    @property
    def P(self) -> int:
        return self.x_ta.shape[1]

    @property
    def last_tod(self) -> np.ndarray:
        return self.tod_index[:, self.M - 1]

    @property
    def last_dow(self) -> np.ndarray:
        return self.dow_index[:, self.M - 1]

    def with_targets(self, x_ta: np.ndarray) -> "WindowBatch":
        return replace(self, x_ta=x_ta)


class Windows:
    """Read-only indexed view of every ``(M, P)`` window of one series."""

    def __init__(self, series: SpatioTemporalSeries, M: int, P: int, stride: int = 1):
        if M < 1 or P < 1 or stride < 1:
            raise InvalidArgument("M, P and stride must be positive")
        if series.T < M + P:
            raise InvalidArgument(f"series length {series.T} < M + P = {M + P}")
        self.series = series
        self.M, self.P, self.stride = M, P, stride
        self.starts = np.arange(0, series.T - M - P + 1, stride, dtype=np.int64)
        self._tod, self._dow = series.calendar(np.arange(series.T))

    def __len__(self) -> int:
        return len(self.starts)

    def batch(self, rows) -> WindowBatch:
        starts = self.starts[np.asarray(rows, dtype=np.int64)]
        span = starts[:, None] + np.arange(self.M + self.P)[None, :]
        vals = self.series.values[span]  # [B, M+P, V, C]
        return WindowBatch(
            x_co=vals[:, : self.M],
            x_ta=vals[:, self.M :],
            tod_index=self._tod[span],
            dow_index=self._dow[span],
            window_start=starts,
        )

    def all(self) -> WindowBatch:
        return self.batch(np.arange(len(self)))

    def iter_batches(self, batch_size: int, order=None) -> Iterator[WindowBatch]:
        order = np.arange(len(self)) if order is None else np.asarray(order)
        for i in range(0, len(order), batch_size):
            yield self.batch(order[i : i + batch_size])

    def __iter__(self) -> Iterator[WindowBatch]:
        for i in range(len(self)):
            yield self.batch([i])


def make_windows(series: SpatioTemporalSeries, M: int, P: int, stride: int = 1) -> Windows:
    return Windows(series, M, P, stride)
