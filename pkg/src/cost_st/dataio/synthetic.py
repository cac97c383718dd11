"""Synthetic datasets with a known conditional mean and per-unit noise level.

``grid_periodic``: for unit v,
    x_v[t] = a_v sin(2 pi t / p1) + b_v sin(2 pi t / p2 + psi_v) + c_v + sigma_v eps_t

``graph_diffusive``: periodic node sources mixed through ``(I + kappa L)^-1`` of
a ring graph, plus per-node white noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument
from ..numerics import RngStream
from .series import Layout, SpatioTemporalSeries


@dataclass
class GroundTruth:
    kind: str
    mean: np.ndarray  # [T, V, C] exact conditional mean
    sigma: np.ndarray  # [V, C]
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma.tolist(),
            "params": self.params,
        }


def _sigma_map(spec, n_rows: int, n_cols: int, C: int) -> np.ndarray:
    """Scalar -> homogeneous; [lo, hi] -> linear gradient over row+col; full list -> as given."""
    arr = np.asarray(spec, dtype=np.float64)
    V = n_rows * n_cols
    if arr.ndim == 0:
        out = np.full((V, C), float(arr))
    elif arr.shape == (2,):
        r, c = np.divmod(np.arange(V), n_cols)
        span = max(n_rows + n_cols - 2, 1)
        frac = (r + c) / span
        out = np.repeat((arr[0] + (arr[1] - arr[0]) * frac)[:, None], C, axis=1)
    else:
        out = arr.reshape(V, -1)
        if out.shape[1] == 1 and C > 1:
            out = np.repeat(out, C, axis=1)
    if np.any(out < 0):
        raise InvalidArgument("noise scales must be nonnegative")
    return out


def _check_periods(*periods):
    for p in periods:
        if not p > 0:
            raise InvalidArgument(f"periods must be positive, got {p}")


def grid_periodic(
    H=8,
    W=8,
    T=4096,
    C=1,
    period1=24.0,
    period2=168.0,
    amp1=(1.0, 2.0),
    amp2=(0.5, 1.0),
    offset=(2.0, 4.0),
    sigma=(0.1, 0.6),
    interval_minutes=60,
    start_epoch_seconds=0,
    seed=0,
):
    _check_periods(period1, period2)
    V = H * W
    coef = RngStream.for_purpose(seed, "synthetic", "grid_periodic", "coefficients")
    a = coef.uniform(amp1[0], amp1[1], (V, C))
    b = coef.uniform(amp2[0], amp2[1], (V, C))
    c = coef.uniform(offset[0], offset[1], (V, C))
    psi = coef.uniform(-np.pi, np.pi, (V, C))
    sig = _sigma_map(sigma, H, W, C)

    t = np.arange(T, dtype=np.float64)[:, None, None]
    mean = a * np.sin(2 * np.pi * t / period1) + b * np.sin(2 * np.pi * t / period2 + psi) + c
    eps = RngStream.for_purpose(seed, "synthetic", "grid_periodic", "noise").normal((T, V, C))
    values = mean + sig * eps

    series = SpatioTemporalSeries(values, interval_minutes, start_epoch_seconds, Layout.grid(H, W))
    truth = GroundTruth(
        "grid_periodic",
        mean,
        sig,
        {
            "formula": "a*sin(2*pi*t/period1) + b*sin(2*pi*t/period2 + psi) + c",
            "period1": float(period1),
            "period2": float(period2),
            "a": a.tolist(),
            "b": b.tolist(),
            "c": c.tolist(),
            "psi": psi.tolist(),
        },
    )
    return series, truth


def ring_adjacency(V: int, k: int = 1) -> np.ndarray:
    adj = np.zeros((V, V))
    for d in range(1, k + 1):
        idx = np.arange(V)
        adj[idx, (idx + d) % V] = 1.0
        adj[(idx + d) % V, idx] = 1.0
    return adj


def graph_diffusive(
    V=16,
    T=2048,
    C=1,
    period=24.0,
    amp=(1.0, 2.0),
    offset=(2.0, 4.0),
    sigma=(0.1, 0.5),
    kappa=1.0,
    neighbors=1,
    interval_minutes=60,
    start_epoch_seconds=0,
    seed=0,
):
    _check_periods(period)
    coef = RngStream.for_purpose(seed, "synthetic", "graph_diffusive", "coefficients")
    a = coef.uniform(amp[0], amp[1], (V, C))
    c = coef.uniform(offset[0], offset[1], (V, C))
    psi = coef.uniform(-np.pi, np.pi, (V, C))
    sig = _sigma_map(sigma, V, 1, C)

    adj = ring_adjacency(V, neighbors)
    lap = np.diag(adj.sum(axis=1)) - adj
    mix = np.linalg.inv(np.eye(V) + kappa * lap)
    t = np.arange(T, dtype=np.float64)[:, None, None]
    sources = a * np.sin(2 * np.pi * t / period + psi) + c
    mean = np.einsum("uv,tvc->tuc", mix, sources)
    eps = RngStream.for_purpose(seed, "synthetic", "graph_diffusive", "noise").normal((T, V, C))
    values = mean + sig * eps

    series = SpatioTemporalSeries(
        values, interval_minutes, start_epoch_seconds, Layout.graph(V, adjacency=adj)
    )
    truth = GroundTruth(
        "graph_diffusive",
        mean,
        sig,
        {
            "formula": "mix @ (a*sin(2*pi*t/period + psi) + c)",
            "period": float(period),
            "kappa": float(kappa),
            "a": a.tolist(),
            "c": c.tolist(),
            "psi": psi.tolist(),
            "adjacency": adj.tolist(),
        },
    )
    return series, truth


GENERATORS = {"grid_periodic": grid_periodic, "graph_diffusive": graph_diffusive}


def gen_synthetic(kind: str, params: dict | None = None, seed: int = 0):
    if kind not in GENERATORS:
        raise InvalidArgument(f"unknown synthetic kind {kind!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[kind](**(params or {}), seed=seed)
