"""Per-unit fluctuation scale from the low-amplitude spectral content of the training split.

For every unit and channel the one-sided spectrum of the standardized training
series is split into dominant bins and the set ``K`` of bins whose amplitude
is below ``threshold * A_max``. The series rebuilt from ``K`` alone is the
fluctuation component; its population variance is ``sigma2``. The signed
prior tensor is ``Q = S * sigma2**(power/2)`` with ``S`` uniform on {-1, +1}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .numerics import RngStream


@dataclass(frozen=True)
class FluctuationScale:
    sigma2: np.ndarray  # [V, C]
    threshold: float = 0.1
    source_length: int = 0
    power: int = 2
    include_dc: bool = False

    @property
    def magnitude(self) -> np.ndarray:
        """Per-unit magnitude carried by Q: the variance (power 2) or its square root (power 1)."""
        if self.power == 2:
            return self.sigma2
        return np.sqrt(self.sigma2)

    def to_dict(self) -> dict:
        return {
            "sigma2": self.sigma2.tolist(),
            "threshold": self.threshold,
            "source_length": self.source_length,
            "power": self.power,
            "include_dc": self.include_dc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FluctuationScale":
        return cls(
            np.asarray(d["sigma2"], dtype=np.float64),
            float(d["threshold"]),
            int(d["source_length"]),
            int(d.get("power", 2)),
            bool(d.get("include_dc", False)),
        )

    @classmethod
    def zeros(cls, V: int, C: int = 1) -> "FluctuationScale":
        return cls(np.zeros((V, C)))


def fluctuation_bins(amplitudes: np.ndarray, threshold: float = 0.1, include_dc: bool = False):
    """Boolean mask over one-sided bins (axis 0) selecting the fluctuation set ``K``."""
    first = 0 if include_dc else 1
    considered = amplitudes[first:]
    a_max = considered.max(axis=0, keepdims=True)
    keep = np.zeros(amplitudes.shape, dtype=bool)
    keep[first:] = considered < threshold * a_max
    return keep


def fluctuation_series(values: np.ndarray, threshold: float = 0.1, include_dc: bool = False) -> np.ndarray:
    """Fluctuation component of ``values`` along axis 0 (any trailing shape)."""
    x = np.asarray(values, dtype=np.float64)
    L = x.shape[0]
    spec = np.fft.rfft(x, axis=0)
    keep = fluctuation_bins(np.abs(spec), threshold, include_dc)
    return np.fft.irfft(np.where(keep, spec, 0.0), n=L, axis=0)


def compute_scale(train, threshold: float = 0.1, power: int = 2, include_dc: bool = False) -> FluctuationScale:
    """Fit the scale on a standardized training series (``SpatioTemporalSeries`` or ``[L, V, C]``)."""
    values = getattr(train, "values", train)
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 3:
        raise InvalidArgument(f"expected [L, V, C] values, got shape {x.shape}")
    if x.shape[0] < 4:
        raise InvalidArgument("fluctuation scale needs at least 4 time steps")
    if not 0 < threshold <= 1:
        raise InvalidArgument("threshold must be in (0, 1]")
    resid = fluctuation_series(x, threshold, include_dc)
    sigma2 = resid.var(axis=0)
    constant = np.ptp(x, axis=0) == 0
    sigma2 = np.where(constant, 0.0, sigma2)
    return FluctuationScale(sigma2, threshold, x.shape[0], power, include_dc)


def draw_Q(scale: FluctuationScale, B: int, P: int, stream: RngStream) -> np.ndarray:
    """Signed prior tensor ``[B, P, V, C]`` with ``|Q| = magnitude`` elementwise."""
    V, C = scale.sigma2.shape
    signs = stream.sign((B, P, V, C))
    return signs * scale.magnitude
