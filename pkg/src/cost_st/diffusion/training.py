"""Stage-2 residual diffusion: epsilon-prediction loss, training loop, ensemble inference."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import metrics
from ..errors import InvalidArgument, TrainingError
from ..fluctscale import FluctuationScale
from ..meanmodel import residual_tokens
from ..nn import Adam, Tape, lr_at
from ..nn import tape as T
from ..nn.optim import fit_with_early_stopping
from ..numerics import RngStream, Standardizer
from ..tokens import TokenSet, from_tokens
from .process import NoiseSchedule, forward_noise, sample_members

log = logging.getLogger(__name__)


def magnitude_tokens(scale: FluctuationScale, P: int) -> np.ndarray:
    """Per-unit Q magnitude ``[V, C]`` laid out as residual tokens ``[V, P*C]``."""
    mag = scale.magnitude
    V, C = mag.shape
    return np.tile(mag[:, None, :], (1, P, 1)).reshape(V, P * C)


def diffusion_loss(denoiser, tape: Tape, batch: TokenSet, magnitude: np.ndarray, schedule: NoiseSchedule, stream: RngStream):
    """MSE between the injected noise and the denoiser's estimate for one batch.

    ``batch.target`` holds residual tokens ``r0``. A step ``n ~ U{1..N}`` is
    drawn per row, with fresh noise and fresh signs for Q.
    """
    r0 = batch.target
    B = r0.shape[0]
    n = stream.uniform_int(1, schedule.N + 1, B)
    eps = stream.normal(r0.shape)
    Q = stream.sign(r0.shape) * magnitude
    r_n = forward_noise(r0, Q, n, eps, schedule)
    pred = denoiser.forward(tape, r_n, batch.x_co, Q, n, batch.tod, batch.dow)
    return T.mse(tape, pred, eps)


def sample_residuals(
    denoiser,
    context: TokenSet,
    scale: FluctuationScale,
    schedule: NoiseSchedule,
    K: int,
    seed: int,
    labels=("sample",),
    mode: str = "per_step",
    member_chunk: int = 10,
    jobs: int = 1,
    precision: str = "float32",
) -> np.ndarray:
    """K residual trajectories per context window, as tokens ``[K, B, V, P*C]``.

    Members are processed in groups of ``member_chunk``; with ``jobs > 1`` the
    groups run on a thread pool and are merged by member index. ``precision``
    is the dtype of the network evaluation only; the chain itself is float64.
    """
    if K < 1:
        raise InvalidArgument("need at least one ensemble member")
    if precision not in ("float32", "float64"):
        raise InvalidArgument(f"precision must be float32 or float64, got {precision!r}")
    dtype = np.dtype(precision)
    P = context.P
    mag = magnitude_tokens(scale, P)
    B, V, _ = context.x_co.shape
    shape = (B, V, P * context.C)

    def run(member_ids):
        G = len(member_ids)
        x_co = np.tile(context.x_co, (G, 1, 1))
        tod = np.tile(context.tod, G)
        dow = np.tile(context.dow, G)

        def eps_fn(r, Q, n):
            return denoiser.eps(r, x_co, Q, np.full(G * B, n), tod, dow, dtype)

        return sample_members(eps_fn, shape, mag, schedule, member_ids, seed, labels, mode)

    groups = [list(range(i, min(i + member_chunk, K))) for i in range(0, K, member_chunk)]
    if jobs > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, groups))
    else:
        parts = [run(g) for g in groups]
    return np.concatenate(parts, axis=0)


def infer(
    mean_model,
    denoiser,
    context: TokenSet,
    scale: FluctuationScale,
    schedule: NoiseSchedule,
    standardizer: Standardizer,
    K: int = 50,
    seed: int = 0,
    labels=("sample",),
    mode: str = "per_step",
    member_chunk: int = 10,
    jobs: int = 1,
    precision: str = "float32",
) -> np.ndarray:
    """Full forecasts ``mean + residual`` in original units, ``[K, B, P, V, C]``."""
    mean_tok = mean_model.predict_tokens(context.x_co, context.tod, context.dow)
    resid = sample_residuals(denoiser, context, scale, schedule, K, seed, labels, mode, member_chunk, jobs, precision)
    full = mean_tok[None] + resid
    out = np.stack([from_tokens(full[k], context.P, context.C) for k in range(K)])
    return standardizer.invert(out)


def validation_crps(
    mean_model, denoiser, val: TokenSet, scale, schedule, standardizer, K, seed, mode, member_chunk=10, precision="float32"
):
    # same noise every epoch so epochs are compared on common random numbers
    samples = infer(
        mean_model, denoiser, val, scale, schedule, standardizer, K, seed, ("validate",), mode, member_chunk, 1, precision
    )
    # val.target holds the raw standardized targets here, not residuals
    truth = standardizer.invert(from_tokens(val.target, val.P, val.C))
    return metrics.crps(samples, truth)[1]


def train_stage2(
    denoiser,
    mean_model,
    train: TokenSet,
    val: TokenSet,
    scale: FluctuationScale,
    schedule: NoiseSchedule,
    standardizer: Standardizer,
    cfg,
    seed: int = 0,
    mode: str = "per_step",
    on_epoch=None,
    precision: str = "float32",
):
    """Stage 2: fit the denoiser on residual targets of a frozen mean model.

    ``train`` and ``val`` carry standardized raw targets; residuals are
    computed once from ``mean_model``. Early stopping uses normalized CRPS of
    ``cfg.val_samples`` forecasts on ``val``. Returns ``(stopper, history)``.
    """
    if len(train) == 0 or len(val) == 0:
        raise InvalidArgument("train_stage2 needs nonempty train and validation windows")
    resid = train.with_target(residual_tokens(mean_model, train))
    mag = magnitude_tokens(scale, train.P)
    opt = Adam(denoiser.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    def train_epoch(epoch):
        lr = lr_at(epoch, cfg.lr, cfg.lr_late, cfg.lr_switch_epoch)
        order = RngStream.for_purpose(seed, "diffusion", "shuffle", epoch).permutation(len(resid))
        losses = []
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            rows = order[start : start + cfg.batch_size]
            stream = RngStream.for_purpose(seed, "diffusion", "batch", epoch, bi)
            tape = Tape()
            loss = diffusion_loss(denoiser, tape, resid.take(rows), mag, schedule, stream)
            value = float(loss.value)
            if not np.isfinite(value):
                raise TrainingError(f"denoiser diverged at epoch {epoch}, batch {bi}")
            opt.zero_grad()
            tape.backward(loss)
            opt.step(lr)
            losses.append(value)
        return float(np.mean(losses)), lr

    def validate(epoch):
        score = validation_crps(
            mean_model, denoiser, val, scale, schedule, standardizer, cfg.val_samples, seed, mode, precision=precision
        )
        if not np.isfinite(score):
            raise TrainingError(f"validation CRPS is not finite at epoch {epoch}")
        return score

    def report(record):
        log.info("diffusion epoch %(epoch)d loss %(train_loss).5f val_crps %(val_loss).5f lr %(lr)g", record)
        if on_epoch is not None:
            on_epoch(record)

    return fit_with_early_stopping(denoiser, train_epoch, validate, cfg.epochs, cfg.patience, report)
