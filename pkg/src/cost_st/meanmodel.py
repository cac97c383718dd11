"""Deterministic conditional-mean backbone (STID-style identity-embedding MLP).

Per spatial unit the history slice is projected to width ``d`` and
concatenated with time-of-day, day-of-week and node embeddings
(``[series, tod, dow, node]``, width ``4d``); a residual MLP trunk and a linear
head emit the ``P*C`` future values. All weights except the node embedding
are shared across units.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgument, TrainingError
from .nn import MLP, Adam, Embedding, Linear, Module, Tape, lr_at
from .nn import tape as T
from .nn.optim import fit_with_early_stopping
from .numerics import RngStream
from .tokens import TokenSet, from_tokens, to_tokens

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeanModelConfig:
    M: int
    P: int
    V: int
    C: int = 1
    steps_per_day: int = 24
    hidden: int = 64
    n_blocks: int = 4

    def to_dict(self) -> dict:
        return asdict(self)


def _unit_index(B: int, V: int) -> np.ndarray:
    return np.broadcast_to(np.arange(V), (B, V))


def _per_unit(idx: np.ndarray, V: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(idx)[:, None], (len(idx), V))


class MeanModel(Module):
    def __init__(self, cfg: MeanModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = RngStream.for_purpose(seed, "init", "mean")
        d = cfg.hidden
        self.input_proj = Linear(cfg.M * cfg.C, d, rng)
        self.tod_emb = Embedding(cfg.steps_per_day, d, rng)
        self.dow_emb = Embedding(7, d, rng)
        self.node_emb = Embedding(cfg.V, d, rng)
        self.trunk = MLP(4 * d, cfg.n_blocks, rng)
        self.head = Linear(4 * d, cfg.P * cfg.C, rng)

    def forward(self, tape: Tape, x_co_tok: np.ndarray, tod: np.ndarray, dow: np.ndarray) -> T.Node:
        """Tokens ``[B, V, M*C]`` -> predicted target tokens ``[B, V, P*C]``."""
        B, V, width = x_co_tok.shape
        if V != self.cfg.V or width != self.cfg.M * self.cfg.C:
            raise InvalidArgument(
                f"input tokens {x_co_tok.shape} do not match V={self.cfg.V}, M*C={self.cfg.M * self.cfg.C}"
            )
        h = self.input_proj(tape, tape.constant(x_co_tok))
        parts = [
            h,
            self.tod_emb(tape, _per_unit(tod, V)),
            self.dow_emb(tape, _per_unit(dow, V)),
            self.node_emb(tape, _unit_index(B, V)),
        ]
        z = self.trunk(tape, T.concat(tape, parts))
        return self.head(tape, z)

    def predict_tokens(self, x_co_tok, tod, dow) -> np.ndarray:
        return self.forward(Tape(record=False), x_co_tok, tod, dow).value

    def predict(self, batch) -> np.ndarray:
        tok = self.predict_tokens(to_tokens(batch.x_co), batch.last_tod, batch.last_dow)
        return from_tokens(tok, self.cfg.P, self.cfg.C)


class ZeroMean:
    """Stand-in backbone that predicts 0, so the diffusion model sees raw targets."""

    def __init__(self, P: int, C: int = 1):
        self.P, self.C = P, C

    def predict_tokens(self, x_co_tok, tod, dow) -> np.ndarray:
        B, V, _ = x_co_tok.shape
        return np.zeros((B, V, self.P * self.C))

    def predict(self, batch) -> np.ndarray:
        B, _, V, C = batch.x_co.shape
        return np.zeros((B, self.P, V, C))


def predict_mean(model, batch) -> np.ndarray:
    return model.predict(batch)


def residual_targets(model, batch) -> np.ndarray:
    """``x_ta - predict_mean(model, batch)`` on the (standardized) input scale."""
    mean = model.predict(batch)
    if mean.shape != batch.x_ta.shape:
        raise InvalidArgument(f"mean prediction {mean.shape} does not match targets {batch.x_ta.shape}")
    return batch.x_ta - mean


def residual_tokens(model, tokens: TokenSet, chunk: int = 256) -> np.ndarray:
    out = np.empty_like(tokens.target)
    for i in range(0, len(tokens), chunk):
        sl = slice(i, i + chunk)
        out[sl] = tokens.target[sl] - model.predict_tokens(tokens.x_co[sl], tokens.tod[sl], tokens.dow[sl])
    return out


def eval_mse(model, tokens: TokenSet, chunk: int = 256) -> float:
    sq = 0.0
    for i in range(0, len(tokens), chunk):
        sl = slice(i, i + chunk)
        pred = model.predict_tokens(tokens.x_co[sl], tokens.tod[sl], tokens.dow[sl])
        sq += float(np.sum((pred - tokens.target[sl]) ** 2))
    return sq / tokens.target.size


def train_mean(model: MeanModel, train: TokenSet, val: TokenSet, cfg, seed: int = 0, on_epoch=None):
    """Stage 1: minimize the L2 loss with early stopping on validation MSE.

    ``cfg`` is a :class:`cost_st.config.TrainConfig`. The model is left at its
    best-validation weights. Returns ``(stopper, history)``.
    """
    if len(train) == 0 or len(val) == 0:
        raise InvalidArgument("train_mean needs nonempty train and validation windows")
    opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    def train_epoch(epoch):
        lr = lr_at(epoch, cfg.lr, cfg.lr_late, cfg.lr_switch_epoch)
        order = RngStream.for_purpose(seed, "mean", "shuffle", epoch).permutation(len(train))
        losses = []
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            rows = order[start : start + cfg.batch_size]
            tape = Tape()
            pred = model.forward(tape, train.x_co[rows], train.tod[rows], train.dow[rows])
            loss = T.mse(tape, pred, train.target[rows])
            value = float(loss.value)
            if not np.isfinite(value):
                raise TrainingError(f"mean model diverged at epoch {epoch}, batch {bi}")
            opt.zero_grad()
            tape.backward(loss)
            opt.step(lr)
            losses.append(value)
        return float(np.mean(losses)), lr

    def validate(epoch):
        score = eval_mse(model, val)
        if not np.isfinite(score):
            raise TrainingError(f"mean model validation loss is not finite at epoch {epoch}")
        return score

    def report(record):
        log.info("mean epoch %(epoch)d train %(train_loss).5f val %(val_loss).5f lr %(lr)g", record)
        if on_epoch is not None:
            on_epoch(record)

    return fit_with_early_stopping(model, train_epoch, validate, cfg.epochs, cfg.patience, report)
