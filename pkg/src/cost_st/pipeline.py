"""Artifact-level orchestration of the two training stages, forecasting and scoring.

Everything lives in ``cfg.workdir``::

    data.stbin            series (generated when no data path is configured)
    data.truth.json       generator sidecar for synthetic data
    mean.ckpt             stage-1 weights, standardization stats
    mean_history.jsonl
    diffusion.ckpt        stage-2 weights, schedule, fluctuation scale, stage-1 digest
    diffusion_history.jsonl
    ensemble.ens          K forecasts for the test windows, original units
    report.txt, picp.tsv, pit.tsv
    timing.txt            wall-clock of the last forecast (kept out of the report)
"""
from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .config import RunConfig
from .dataio import EnsembleFile, SpatioTemporalSeries, gen_synthetic, load_series, make_windows, split
from .dataio import read_ensemble, write_ensemble, write_stbin
from .diffusion import Denoiser, DenoiserConfig, build_schedule, infer, train_stage2
from .errors import ConfigError, DataError
from .fluctscale import FluctuationScale, compute_scale
from .meanmodel import MeanModel, MeanModelConfig, ZeroMean, train_mean
from .nn import Checkpoint, file_fingerprint
from .numerics import Standardizer, standardize_fit
from .tokens import TokenSet

log = logging.getLogger(__name__)

DATA_FILE = "data.stbin"
TRUTH_FILE = "data.truth.json"
MEAN_CKPT = "mean.ckpt"
DIFF_CKPT = "diffusion.ckpt"
ENSEMBLE_FILE = "ensemble.ens"
REPORT_FILE = "report.txt"
PICP_FILE = "picp.tsv"
PIT_FILE = "pit.tsv"
TIMING_FILE = "timing.txt"


def workdir(cfg: RunConfig) -> Path:
    path = Path(cfg.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_jsonl(path: Path, records) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


# data


def gen_data(cfg: RunConfig, out=None) -> Path:
    series, truth = gen_synthetic(cfg.data.synthetic, cfg.data.synthetic_params, cfg.seed)
    out = Path(out) if out else workdir(cfg) / DATA_FILE
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        write_stbin(out, series)
        out.with_name(out.name.replace(".stbin", "") + ".truth.json").write_text(
            json.dumps(truth.to_dict(), sort_keys=True) + "\n"
        )
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from exc
    return out


def data_path(cfg: RunConfig) -> Path:
    if cfg.data.path:
        return Path(cfg.data.path)
    return workdir(cfg) / DATA_FILE


def load_data(cfg: RunConfig) -> SpatioTemporalSeries:
    path = data_path(cfg)
    if not path.exists():
        if cfg.data.path:
            raise DataError(f"data file {path} not found")
        gen_data(cfg, path)
    meta = {}
    if cfg.data.format == "csv":
        meta = {"interval_minutes": cfg.data.interval_minutes, "start_epoch_seconds": cfg.data.start_epoch_seconds}
    return load_series(path, cfg.data.format, **meta)


@dataclass
class Prepared:
    series: SpatioTemporalSeries  # original units
    std: Standardizer
    train: SpatioTemporalSeries  # standardized splits
    val: SpatioTemporalSeries
    test: SpatioTemporalSeries
    test_offset: int

    def tokens(self, part: str, M: int, P: int, stride: int = 1) -> TokenSet:
        return TokenSet.from_windows(make_windows(getattr(self, part), M, P, stride))


def prepare(cfg: RunConfig, series=None, std: Standardizer | None = None) -> Prepared:
    series = series if series is not None else load_data(cfg)
    train, val, test = split(series, cfg.split.ratios)
    if std is None:
        std = standardize_fit(train.values.reshape(-1, series.C))
    z = lambda s: s.with_values(std.apply(s.values))  # noqa: E731
    return Prepared(series, std, z(train), z(val), z(test), train.T + val.T)


# stage 1


def mean_model_config(cfg: RunConfig, series) -> MeanModelConfig:
    return MeanModelConfig(
        cfg.windows.M, cfg.windows.P, series.V, series.C, series.steps_per_day, cfg.mean.hidden, cfg.mean.n_blocks
    )


def run_train_mean(cfg: RunConfig) -> Path:
    prep = prepare(cfg)
    wd = workdir(cfg)
    M, P = cfg.windows.M, cfg.windows.P
    mcfg = mean_model_config(cfg, prep.series)
    extra = {"standardizer": prep.std.to_dict(), "model": mcfg.to_dict(), "enabled": cfg.mean.enabled}
    history = []
    if cfg.mean.enabled:
        model = MeanModel(mcfg, cfg.seed)
        stopper, history = train_mean(model, prep.tokens("train", M, P), prep.tokens("val", M, P), cfg.train, cfg.seed)
        extra["best_epoch"] = stopper.best_epoch
        state = model.state()
    else:
        state = {}
    Checkpoint(state, cfg.fingerprint(), cfg.seed, extra).save(wd / MEAN_CKPT)
    _write_jsonl(wd / "mean_history.jsonl", history)
    return wd / MEAN_CKPT


def _check_fingerprint(ckpt: Checkpoint, cfg: RunConfig, what: str) -> None:
    if ckpt.config_fingerprint != cfg.fingerprint():
        raise ConfigError(f"{what} was trained with a different configuration; retrain or restore the original config")


def load_mean(cfg: RunConfig):
    path = workdir(cfg) / MEAN_CKPT
    if not path.exists():
        raise ConfigError(f"stage-1 checkpoint {path} is missing; run train-mean first")
    ckpt = Checkpoint.load(path)
    _check_fingerprint(ckpt, cfg, "mean model")
    mcfg = MeanModelConfig(**ckpt.extra["model"])
    if ckpt.extra.get("enabled", True):
        model = MeanModel(mcfg, ckpt.seed)
        model.load_state(ckpt.state)
    else:
        model = ZeroMean(mcfg.P, mcfg.C)
    return model, Standardizer.from_dict(ckpt.extra["standardizer"]), file_fingerprint(path)


# stage 2


def schedule_of(cfg: RunConfig):
    s = cfg.schedule
    return build_schedule(s.n_steps, s.beta_start, s.beta_end)


def denoiser_config(cfg: RunConfig, series) -> DenoiserConfig:
    return DenoiserConfig(
        cfg.windows.M, cfg.windows.P, series.V, series.C, series.steps_per_day, cfg.denoiser.dim, cfg.denoiser.n_layers
    )


def run_train_diffusion(cfg: RunConfig) -> Path:
    mean_model, std, mean_digest = load_mean(cfg)
    prep = prepare(cfg, std=std)
    wd = workdir(cfg)
    M, P = cfg.windows.M, cfg.windows.P
    sc = cfg.scale
    scale = compute_scale(prep.train, sc.threshold, sc.power, sc.include_dc)
    schedule = schedule_of(cfg)
    dcfg = denoiser_config(cfg, prep.series)
    den = Denoiser(dcfg, cfg.seed)
    stopper, history = train_stage2(
        den,
        mean_model,
        prep.tokens("train", M, P),
        prep.tokens("val", M, P, cfg.eval_stride),
        scale,
        schedule,
        std,
        cfg.train,
        cfg.seed,
        cfg.sample.posterior_mode,
        precision=cfg.sample.precision,
    )
    extra = {
        "model": dcfg.to_dict(),
        "schedule": schedule.to_dict(),
        "scale": scale.to_dict(),
        "standardizer": std.to_dict(),
        "mean_checkpoint_sha256": mean_digest,
        "best_epoch": stopper.best_epoch,
    }
    Checkpoint(den.state(), cfg.fingerprint(), cfg.seed, extra).save(wd / DIFF_CKPT)
    _write_jsonl(wd / "diffusion_history.jsonl", history)
    return wd / DIFF_CKPT


def run_train(cfg: RunConfig):
    return run_train_mean(cfg), run_train_diffusion(cfg)


@dataclass
class Trained:
    mean_model: object
    denoiser: Denoiser
    std: Standardizer
    scale: FluctuationScale
    schedule: object


def load_trained(cfg: RunConfig) -> Trained:
    mean_model, std, mean_digest = load_mean(cfg)
    path = workdir(cfg) / DIFF_CKPT
    if not path.exists():
        raise ConfigError(f"stage-2 checkpoint {path} is missing; run train-diffusion first")
    ckpt = Checkpoint.load(path)
    _check_fingerprint(ckpt, cfg, "denoiser")
    if ckpt.extra.get("mean_checkpoint_sha256") != mean_digest:
        raise ConfigError("denoiser was trained against a different stage-1 checkpoint")
    if ckpt.extra.get("standardizer") != std.to_dict():
        raise ConfigError("standardization statistics differ between the two checkpoints")
    den = Denoiser(DenoiserConfig(**ckpt.extra["model"]), ckpt.seed)
    den.load_state(ckpt.state)
    return Trained(mean_model, den, std, FluctuationScale.from_dict(ckpt.extra["scale"]), schedule_of(cfg))


# forecast and evaluation


def run_forecast(cfg: RunConfig, out=None, jobs: int | None = None) -> Path:
    trained = load_trained(cfg)
    prep = prepare(cfg, std=trained.std)
    M, P = cfg.windows.M, cfg.windows.P
    ctx = prep.tokens("test", M, P, cfg.eval_stride)
    if len(ctx) == 0:
        raise DataError("test split is too short for one forecast window")
    s = cfg.sample
    t0 = time.perf_counter()
    samples = infer(
        trained.mean_model,
        trained.denoiser,
        ctx,
        trained.scale,
        trained.schedule,
        trained.std,
        s.n_samples,
        cfg.seed,
        ("forecast",),
        s.posterior_mode,
        s.member_chunk,
        jobs or s.jobs,
        s.precision,
    )
    elapsed = time.perf_counter() - t0
    meta = {"config_fingerprint": cfg.fingerprint(), "posterior_mode": s.posterior_mode, "seed": cfg.seed}
    ens = EnsembleFile(samples, ctx.window_start + prep.test_offset, M, meta)
    wd = workdir(cfg)
    out = Path(out) if out else wd / ENSEMBLE_FILE
    write_ensemble(out, ens)
    (wd / TIMING_FILE).write_text(
        f"inference_seconds: {elapsed:.3f}\nsamples: {s.n_samples}\nwindows: {len(ctx)}\nunits: {prep.series.V}\n"
    )
    log.info("forecast %d x %d windows in %.2fs", s.n_samples, len(ctx), elapsed)
    return out


def aligned_truth(ens: EnsembleFile, series: SpatioTemporalSeries) -> np.ndarray:
    """Ground-truth targets ``[B, P, V, C]`` for the windows an ensemble covers."""
    K, B, P, V, C = ens.samples.shape
    if (V, C) != (series.V, series.C):
        raise DataError(f"ensemble units/channels {(V, C)} do not match series {(series.V, series.C)}")
    starts = np.asarray(ens.window_starts, dtype=np.int64)
    if starts.size and (starts.min() < 0 or starts.max() + ens.M + P > series.T):
        raise DataError("ensemble windows fall outside the series")
    targets = [series.values[s + ens.M : s + ens.M + P] for s in starts]
    covered = np.concatenate([np.arange(s + ens.M, s + ens.M + P) for s in starts]) if B else np.zeros(0)
    if len(np.unique(covered)) != len(covered):
        raise DataError("ensemble windows overlap; every target must be scored once")
    return np.stack(targets) if B else np.zeros((0, P, V, C))


def run_evaluate(cfg: RunConfig, ensemble=None, data=None, out_dir=None) -> metrics.MetricReport:
    wd = workdir(cfg)
    ens = read_ensemble(ensemble or wd / ENSEMBLE_FILE)
    series = load_series(data) if data else load_data(cfg)
    if not np.all(np.isfinite(ens.samples)):
        raise DataError("ensemble contains non-finite values")
    truth = aligned_truth(ens, series)
    m = cfg.metrics
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # kept in the report instead
        report = metrics.evaluate(
            ens.samples, truth, m.n_quantile_intervals, m.alpha_ci, m.picp_levels, m.point, m.pit_bins, cfg.seed
        )
    out = Path(out_dir) if out_dir else wd
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_FILE).write_text(metrics.format_report(report, PICP_FILE, PIT_FILE))
    (out / PICP_FILE).write_text(metrics.picp_table(report))
    (out / PIT_FILE).write_text(metrics.pit_table(report))
    return report


def run_pipeline(cfg: RunConfig, jobs: int | None = None) -> metrics.MetricReport:
    if not cfg.data.path:
        gen_data(cfg)
    run_train(cfg)
    run_forecast(cfg, jobs=jobs)
    return run_evaluate(cfg)
