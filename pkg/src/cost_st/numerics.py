"""Numeric kernel: seeded random streams, one-sided spectra, standardization.

Arrays are plain ``numpy.ndarray`` in float64. Nothing here mutates its inputs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

STD_FLOOR = 1e-8
_MASK64 = (1 << 64) - 1


def stream_id(*labels) -> int:
    """Stable 64-bit id for a tuple of labels such as ``("shuffle", epoch)``."""
    digest = hashlib.sha256(repr(tuple(labels)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by Philox with the two 64-bit words as its key, so a stream is
    reproducible on any platform and streams with different ids do not overlap.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @classmethod
    def for_purpose(cls, seed: int, *labels) -> "RngStream":
        return cls(seed, stream_id(*labels))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream:#x})"

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def sign(self, shape) -> np.ndarray:
        # Bernoulli(0.5) mapped to {-1, +1}
        return self._gen.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0

    def uniform_int(self, low: int, high: int, shape) -> np.ndarray:
        """Integers in ``[low, high)``."""
        return self._gen.integers(low, high, size=shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def draw_normal(stream: RngStream, shape) -> np.ndarray:
    return stream.normal(shape)


def draw_sign(stream: RngStream, shape) -> np.ndarray:
    return stream.sign(shape)


def draw_uniform_int(stream: RngStream, shape, low: int, high: int) -> np.ndarray:
    return stream.uniform_int(low, high, shape)


@dataclass(frozen=True)
class SpectrumSide:
    """One-sided spectrum of a real series: bins ``0..L//2``."""

    amplitudes: np.ndarray
    phases: np.ndarray
    length: int

    @property
    def n_bins(self) -> int:
        return self.length // 2 + 1

    def complex(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases)


def rfft(series) -> SpectrumSide:
    """Unnormalized forward transform of a real vector."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise InvalidArgument(f"rfft needs a 1-D series of length >= 2, got shape {x.shape}")
    spec = np.fft.rfft(x)
    phases = np.angle(spec)
    phases = np.where(phases <= -np.pi, np.pi, phases)
    return SpectrumSide(np.abs(spec), phases, x.size)


def reconstruct_masked(spec: SpectrumSide, keep) -> np.ndarray:
    """Inverse transform with every one-sided bin outside ``keep`` zeroed.

    Zeroing a one-sided bin implicitly zeroes its conjugate partner, so the
    result is real. The inverse divides by ``L``.
    """
    keep = np.asarray(sorted(set(int(k) for k in keep)), dtype=np.int64)
    if keep.size and (keep.min() < 0 or keep.max() >= spec.n_bins):
        raise InvalidArgument(f"keep indices must lie in [0, {spec.n_bins - 1}]")
    masked = np.zeros(spec.n_bins, dtype=np.complex128)
    full = spec.complex()
    masked[keep] = full[keep]
    return np.fft.irfft(masked, n=spec.length)


def spectral_energy(spec: SpectrumSide) -> float:
    """Time-domain energy implied by the one-sided spectrum (Parseval)."""
    a2 = spec.amplitudes ** 2
    L = spec.length
    total = a2[0] + 2.0 * a2[1:].sum()
    if L % 2 == 0:
        # Nyquist bin has no conjugate partner
        total -= a2[-1]
    return float(total / L)


@dataclass(frozen=True)
class Standardizer:
    """Per-channel affine standardization ``(x - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(m) for m in self.mean], "std": [float(s) for s in self.std]}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def standardize_fit(train: np.ndarray) -> Standardizer:
    """Fit per-channel stats over every axis but the last (population std)."""
    x = np.asarray(train, dtype=np.float64)
    if x.size == 0:
        raise InvalidArgument("cannot standardize an empty tensor")
    axes = tuple(range(x.ndim - 1))
    mean = x.mean(axis=axes)
    std = np.maximum(x.std(axis=axes), STD_FLOOR)
    return Standardizer(mean, std)


def check_finite(values: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise InvalidArgument(f"{what} contains non-finite values")
    return values
