"""Training-dynamics and unbiasedness checks on the shared acceptance run."""
import pytest

from cost_st import metrics, pipeline
from cost_st.diffusion import Denoiser, diffusion_loss, infer, magnitude_tokens
from cost_st.diffusion.training import validation_crps
from cost_st.meanmodel import residual_tokens
from cost_st.nn import Checkpoint, Tape
from cost_st.numerics import RngStream
from cost_st.tokens import from_tokens

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def trained(runs):
    cfg = runs["cost"]["cfg"]
    t = pipeline.load_trained(cfg)
    prep = pipeline.prepare(cfg, std=t.std)
    return cfg, t, prep


def fixed_loss(den, toks, mag, schedule, seed=123, batch=256):
    # same rows and same noise for both networks
    stream = RngStream.for_purpose(seed, "probe")
    rows = stream.permutation(len(toks))[:batch]
    return float(diffusion_loss(den, Tape(record=False), toks.take(rows), mag, schedule, stream).value)


def test_stage_two_loss_drops_five_fold(trained):
    cfg, t, prep = trained
    toks = prep.tokens("train", cfg.windows.M, cfg.windows.P)
    resid = toks.with_target(residual_tokens(t.mean_model, toks))
    mag = magnitude_tokens(t.scale, cfg.windows.P)
    fresh = Denoiser(t.denoiser.cfg, cfg.seed)
    before = fixed_loss(fresh, resid, mag, t.schedule)
    after = fixed_loss(t.denoiser, resid, mag, t.schedule)
    assert after * 5 <= before


def test_trained_val_crps_beats_untrained(trained):
    cfg, t, prep = trained
    val = prep.tokens("val", cfg.windows.M, cfg.windows.P, cfg.eval_stride)
    args = (val, t.scale, t.schedule, t.std, cfg.train.val_samples, cfg.seed, cfg.sample.posterior_mode)
    untrained = validation_crps(t.mean_model, Denoiser(t.denoiser.cfg, cfg.seed), *args)
    final = validation_crps(t.mean_model, t.denoiser, *args)
    assert final <= 0.7 * untrained


def test_large_ensemble_mean_is_unbiased(trained):
    cfg, t, prep = trained
    M, P = cfg.windows.M, cfg.windows.P
    ctx = prep.tokens("test", M, P, cfg.eval_stride)
    samples = infer(t.mean_model, t.denoiser, ctx, t.scale, t.schedule, t.std, 200, cfg.seed, ("unbiased",))
    truth = t.std.invert(from_tokens(ctx.target, P, ctx.C))
    mean_only = t.std.invert(from_tokens(t.mean_model.predict_tokens(ctx.x_co, ctx.tod, ctx.dow), P, ctx.C))
    mae_ens, _ = metrics.mae_rmse(metrics.point_forecast(samples), truth)
    mae_mean, _ = metrics.mae_rmse(mean_only, truth)
    assert abs(mae_ens / mae_mean - 1) <= 0.02


def test_calibrated_run_qice(runs):
    assert float(runs["cost"]["report"]["qice"]) < 0.03


def test_best_epochs_recorded(runs):
    wd = runs["cost"]["dir"]
    for name in (pipeline.MEAN_CKPT, pipeline.DIFF_CKPT):
        best = Checkpoint.load(wd / name).extra["best_epoch"]
        assert 1 <= best <= runs["cost"]["cfg"].train.epochs
