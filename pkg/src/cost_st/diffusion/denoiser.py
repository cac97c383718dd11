"""Noise-prediction network: a lightweight STID-style residual MLP.

Per unit, ``[x_co (M*C), r_n (P*C), Q (P*C)]`` is projected to ``dim``; a
step embedding (sinusoidal encoding through a 2-layer MLP) and
time-of-day / day-of-week / node embeddings are added; a trunk of residual
blocks and a linear head produce the ``P*C`` noise estimate.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidArgument
from ..nn import MLP, Embedding, Linear, Module, Tape, sinusoidal_encoding
from ..nn import tape as T
from ..numerics import RngStream


@dataclass(frozen=True)
class DenoiserConfig:
    M: int
    P: int
    V: int
    C: int = 1
    steps_per_day: int = 24
    dim: int = 128
    n_layers: int = 8

    def to_dict(self) -> dict:
        return asdict(self)


class Denoiser(Module):
    def __init__(self, cfg: DenoiserConfig, seed: int = 0):
        self.cfg = cfg
        rng = RngStream.for_purpose(seed, "init", "denoiser")
        d = cfg.dim
        self.input_proj = Linear((cfg.M + 2 * cfg.P) * cfg.C, d, rng)
        self.step_fc1 = Linear(d, d, rng)
        self.step_fc2 = Linear(d, d, rng)
        self.tod_emb = Embedding(cfg.steps_per_day, d, rng)
        self.dow_emb = Embedding(7, d, rng)
        self.node_emb = Embedding(cfg.V, d, rng)
        self.trunk = MLP(d, cfg.n_layers, rng)
        self.head = Linear(d, cfg.P * cfg.C, rng)

    def forward(self, tape: Tape, r_n, x_co, q, steps, tod, dow) -> T.Node:
        """Token inputs ``r_n, q: [B, V, P*C]``, ``x_co: [B, V, M*C]``, per-row ``steps, tod, dow``."""
        B, V, _ = r_n.shape
        cfg = self.cfg
        if V != cfg.V or x_co.shape != (B, V, cfg.M * cfg.C) or q.shape != r_n.shape:
            raise InvalidArgument("denoiser inputs do not match its configuration")
        tokens = np.concatenate([x_co, r_n, q], axis=-1)
        h = self.input_proj(tape, tape.constant(tokens))

        enc = tape.constant(sinusoidal_encoding(np.asarray(steps), cfg.dim))  # [B, d]
        step = self.step_fc2(tape, T.relu(tape, self.step_fc1(tape, enc)))
        h = T.add(tape, h, T.reshape(tape, step, (B, 1, cfg.dim)))

        tod_e = T.reshape(tape, self.tod_emb(tape, tod), (B, 1, cfg.dim))
        dow_e = T.reshape(tape, self.dow_emb(tape, dow), (B, 1, cfg.dim))
        node_e = T.reshape(tape, self.node_emb(tape, np.arange(V)), (1, V, cfg.dim))
        h = T.add(tape, h, T.add(tape, tod_e, dow_e))
        h = T.add(tape, h, node_e)
        return self.head(tape, self.trunk(tape, h))

    def eps(self, r_n, x_co, q, steps, tod, dow, dtype=np.float64) -> np.ndarray:
        out = self.forward(Tape(record=False, dtype=dtype), r_n, x_co, q, steps, tod, dow).value
        return out.astype(np.float64, copy=False)
