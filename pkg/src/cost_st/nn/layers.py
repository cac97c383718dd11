"""Trainable building blocks: Linear, Embedding, ReLU, residual MLP blocks."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument
from ..numerics import RngStream
from . import tape as T


def f32(x: np.ndarray) -> np.ndarray:
    """Round to the nearest float32 while keeping float64 storage."""
    return np.asarray(x, dtype=np.float32).astype(np.float64)


class Parameter:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Module:
    """Parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix: str = ""):
        for key, item in vars(self).items():
            if isinstance(item, Parameter):
                yield prefix + key, item
            elif isinstance(item, Module):
                yield from item.named_parameters(f"{prefix}{key}.")
            elif isinstance(item, (list, tuple)):
                for i, sub in enumerate(item):
                    if isinstance(sub, Module):
                        yield from sub.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def n_parameters(self) -> int:
        return int(sum(p.value.size for p in self.parameters()))

    def state(self) -> dict:
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state(self, state: dict) -> None:
        params = dict(self.named_parameters())
        if set(params) != set(state):
            raise InvalidArgument("state keys do not match the module's parameters")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise InvalidArgument(f"{name}: shape {value.shape} != {p.value.shape}")
            p.value[...] = value


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: RngStream, bias: bool = True):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Parameter("weight", f32(rng.uniform(-bound, bound, (n_in, n_out))))
        self.bias = Parameter("bias", np.zeros(n_out)) if bias else None
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, tape: T.Tape, x: T.Node) -> T.Node:
        b = tape.param(self.bias) if self.bias is not None else None
        return T.linear(tape, x, tape.param(self.weight), b)


class Embedding(Module):
    def __init__(self, rows: int, dim: int, rng: RngStream):
        self.table = Parameter("table", f32(0.02 * rng.normal((rows, dim))))
        self.rows, self.dim = rows, dim

    def __call__(self, tape: T.Tape, index) -> T.Node:
        return T.embedding(tape, tape.param(self.table), index)


class ReLU(Module):
    def __call__(self, tape: T.Tape, x: T.Node) -> T.Node:
        return T.relu(tape, x)


class ResidualBlock(Module):
    """``x + fc2(relu(fc1(x)))`` at constant width."""

    def __init__(self, dim: int, rng: RngStream):
        self.fc1 = Linear(dim, dim, rng)
        self.fc2 = Linear(dim, dim, rng)

    def __call__(self, tape: T.Tape, x: T.Node) -> T.Node:
        h = self.fc2(tape, T.relu(tape, self.fc1(tape, x)))
        return T.add(tape, x, h)


class MLP(Module):
    """Stack of residual blocks."""

    def __init__(self, dim: int, n_blocks: int, rng: RngStream):
        self.blocks = [ResidualBlock(dim, rng) for _ in range(n_blocks)]

    def __call__(self, tape: T.Tape, x: T.Node) -> T.Node:
        for block in self.blocks:
            x = block(tape, x)
        return x


SINUSOID_BASE = 10000.0


def sinusoidal_encoding(n, dim: int, base: float = SINUSOID_BASE) -> np.ndarray:
    """Interleaved ``[sin(n w_0), cos(n w_0), sin(n w_1), ...]`` with ``w_i = base^(-2i/dim)``.

    ``n`` may be a scalar or an array; the encoding is appended as a last axis.
    """
    if dim <= 0 or dim % 2:
        raise InvalidArgument(f"encoding dim must be a positive even number, got {dim}")
    n = np.asarray(n, dtype=np.float64)
    freqs = base ** (-2.0 * np.arange(dim // 2) / dim)
    angles = n[..., None] * freqs
    out = np.empty(n.shape + (dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out
