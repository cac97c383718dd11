"""Deterministic and probabilistic scores for ensemble forecasts.

Every function takes ``samples`` with the ensemble on axis 0 (``[K, ...]``) and
``truth`` shaped like one member. Quantiles are empirical with linear
interpolation between order statistics.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument


@dataclass
class EnsembleForecast:
    samples: np.ndarray  # [K, B, P, V, C], original units
    window_starts: np.ndarray  # [B], index of each window's first history step


def _check(samples, truth):
    samples = np.asarray(samples, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if samples.ndim < 1 or samples.shape[1:] != truth.shape:
        raise InvalidArgument(f"samples {samples.shape} do not match truth {truth.shape}")
    if samples.shape[0] < 1:
        raise InvalidArgument("ensemble needs at least one member")
    return samples, truth


def point_forecast(samples, kind: str = "mean") -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if kind == "mean":
        # shifting by one member keeps identical members exact
        return samples[0] + (samples - samples[0]).mean(axis=0)
    if kind == "median":
        return np.median(samples, axis=0)
    raise InvalidArgument(f"unknown point forecast {kind!r}")


def mae_rmse(forecast, truth) -> tuple[float, float]:
    forecast = np.asarray(forecast, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if forecast.shape != truth.shape:
        raise InvalidArgument(f"forecast {forecast.shape} does not match truth {truth.shape}")
    err = forecast - truth
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err * err)))


def crps_per_point(samples, truth) -> np.ndarray:
    """Empirical CRPS ``mean|x_k - y| - 1/(2K^2) sum_kj |x_k - x_j|`` per point.

    The pairwise term uses the sorted-sample identity
    ``sum_kj |x_k - x_j| = 2 sum_i (2i - K + 1) x_(i)``.
    """
    samples, truth = _check(samples, truth)
    K = samples.shape[0]
    term1 = np.mean(np.abs(samples - truth), axis=0)
    if K == 1:
        return term1
    srt = np.sort(samples, axis=0)
    w = (2.0 * np.arange(K) - K + 1).reshape((K,) + (1,) * truth.ndim)
    # sum(w) = 0, so centering on the minimum changes nothing but rounding
    pair = 2.0 * np.sum(w * (srt - srt[0]), axis=0)
    return term1 - pair / (2.0 * K * K)


def crps(samples, truth) -> tuple[float, float]:
    """``(mean CRPS per point, sum CRPS / sum |y|)``."""
    per = crps_per_point(samples, truth)
    denom = float(np.sum(np.abs(truth)))
    return float(per.mean()), float(per.sum() / denom) if denom > 0 else float("inf")


def quantiles(samples, levels) -> np.ndarray:
    return np.quantile(np.asarray(samples, dtype=np.float64), levels, axis=0)


def qice(samples, truth, n_intervals: int = 10) -> float:
    """Mean absolute gap between per-interval truth frequency and ``1/n_intervals``.

    Interval m spans the empirical quantiles at ``(m-1)/M`` and ``m/M``;
    both ends are inclusive.
    """
    samples, truth = _check(samples, truth)
    if samples.shape[0] < n_intervals:
        raise InvalidArgument(f"QICE needs at least {n_intervals} samples, got {samples.shape[0]}")
    q = quantiles(samples, np.linspace(0.0, 1.0, n_intervals + 1))
    inside = (truth >= q[:-1]) & (truth <= q[1:])  # [M, ...]
    counts = inside.reshape(n_intervals, -1).sum(axis=1)
    # integer numerator so hand-checkable cases come out correctly rounded
    n = inside[0].size
    gap = int(np.abs(n_intervals * counts - n).sum())
    return gap / (n_intervals * n_intervals * n)


def interval_score_bounds(lower, upper, truth, alpha: float = 0.1) -> float:
    lower, upper, truth = (np.asarray(a, dtype=np.float64) for a in (lower, upper, truth))
    below = (lower - truth) * (truth < lower)
    above = (truth - upper) * (truth > upper)
    return float(np.mean((upper - lower) + (2.0 / alpha) * below + (2.0 / alpha) * above))


def interval_score(samples, truth, alpha: float = 0.1) -> float:
    samples, truth = _check(samples, truth)
    lo, hi = quantiles(samples, [alpha / 2.0, 1.0 - alpha / 2.0])
    return interval_score_bounds(lo, hi, truth, alpha)


def picp_curve(samples, truth, levels) -> np.ndarray:
    """Coverage of the central interval at each nominal level (inclusive bounds)."""
    samples, truth = _check(samples, truth)
    levels = np.asarray(levels, dtype=np.float64)
    if np.any((levels <= 0) | (levels >= 1)):
        raise InvalidArgument("coverage levels must lie in (0, 1)")
    lo = quantiles(samples, (1.0 - levels) / 2.0)
    hi = quantiles(samples, (1.0 + levels) / 2.0)
    inside = (truth >= lo) & (truth <= hi)
    return inside.reshape(len(levels), -1).mean(axis=1)


def pit_values(samples, truth, seed: int = 0) -> np.ndarray:
    """Randomized rank PIT ``min(rank, K) / (K + 1)`` with ``rank = 1 + #below + U{0..#ties}``."""
    samples, truth = _check(samples, truth)
    K = samples.shape[0]
    below = np.sum(samples < truth, axis=0)
    ties = np.sum(samples == truth, axis=0)
    rng = np.random.default_rng(seed)
    jitter = np.floor(rng.random(truth.shape) * (ties + 1))
    rank = np.minimum(1 + below + jitter, K)
    return (rank / (K + 1.0)).reshape(-1)


def pit_histogram(pit, bins: int = 10) -> np.ndarray:
    counts, _ = np.histogram(pit, bins=bins, range=(0.0, 1.0))
    return counts / max(len(pit), 1)


def pit_cdf(pit, grid) -> np.ndarray:
    srt = np.sort(np.asarray(pit))
    return np.searchsorted(srt, grid, side="right") / max(len(srt), 1)


def ks_uniform(pit) -> float:
    """Kolmogorov-Smirnov distance between the PIT sample and U(0, 1)."""
    srt = np.sort(np.asarray(pit, dtype=np.float64))
    n = len(srt)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - srt), np.max(srt - (i - 1) / n)))


@dataclass
class MetricReport:
    mae: float
    rmse: float
    crps_raw: float
    crps_norm: float
    qice: float
    interval_score: float
    picp_levels: np.ndarray
    picp: np.ndarray
    pit: np.ndarray
    pit_hist: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def picp_max_deviation(self) -> float:
        return float(np.max(np.abs(self.picp - self.picp_levels)))


def evaluate(samples, truth, n_intervals=10, alpha=0.1, levels=None, point="mean", pit_bins=10, seed=0):
    samples, truth = _check(samples, truth)
    K = samples.shape[0]
    notes = []
    if K == 1:
        notes.append("single-member ensemble: CRPS reduces to absolute error")
    mae, rmse = mae_rmse(point_forecast(samples, point), truth)
    c_raw, c_norm = crps(samples, truth)
    if K >= n_intervals:
        q = qice(samples, truth, n_intervals)
    else:
        q = float("nan")
        notes.append(f"QICE undefined for K={K} < {n_intervals} intervals")
    if K < 2:
        notes.append("interval score from a single member is the degenerate zero-width interval")
    levels = np.asarray(levels if levels is not None else np.round(np.arange(1, 20) * 0.05, 2))
    pit = pit_values(samples, truth, seed)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return MetricReport(
        mae,
        rmse,
        c_raw,
        c_norm,
        q,
        interval_score(samples, truth, alpha),
        levels,
        picp_curve(samples, truth, levels),
        pit,
        pit_histogram(pit, pit_bins),
        notes,
    )


def format_report(report: MetricReport, picp_file: str, pit_file: str) -> str:
    lines = [
        f"mae: {report.mae:.9g}",
        f"rmse: {report.rmse:.9g}",
        f"crps_raw: {report.crps_raw:.9g}",
        f"crps_norm: {report.crps_norm:.9g}",
        f"qice: {report.qice:.9g}",
        f"is: {report.interval_score:.9g}",
        f"picp_table: {picp_file}",
        f"pit_table: {pit_file}",
    ]
    if report.warnings:
        lines.append("warnings: " + "; ".join(report.warnings))
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if ":" in line:
            key, value = line.split(":", 1)
            out[key.strip()] = value.strip()
    return out


def picp_table(report: MetricReport) -> str:
    rows = ["level\tcoverage"]
    rows += [f"{lv:.6g}\t{cv:.9g}" for lv, cv in zip(report.picp_levels, report.picp)]
    return "\n".join(rows) + "\n"


def pit_table(report: MetricReport) -> str:
    bins = len(report.pit_hist)
    edges = np.linspace(0.0, 1.0, bins + 1)
    cdf = pit_cdf(report.pit, edges[1:])
    rows = ["bin_right\tfrequency\tcdf"]
    rows += [f"{e:.6g}\t{h:.9g}\t{c:.9g}" for e, h, c in zip(edges[1:], report.pit_hist, cdf)]
    return "\n".join(rows) + "\n"
