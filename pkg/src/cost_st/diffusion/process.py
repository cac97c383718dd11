"""Noise schedule, scale-aware forward kernel, reverse posterior mean and sampler.

Steps are 1-based: ``schedule.beta[n - 1]`` is beta_n. With prior tensor Q the
forward marginal is::

    r_n = sqrt(abar_n) r_0 + (1 - sqrt(abar_n)) Q + sqrt(1 - abar_n) eps

so ``r_N`` approaches N(Q, I). Q = 0 recovers the usual DDPM kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from ..numerics import RngStream

POSTERIOR_MODES = ("per_step", "cumulative")


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def N(self) -> int:
        return len(self.beta)

    def check_step(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=np.int64)
        if n.size and (n.min() < 1 or n.max() > self.N):
            raise InvalidArgument(f"diffusion step must lie in 1..{self.N}")
        return n

    def posterior_variance(self, n: int) -> float:
        """``(1 - abar_{n-1}) / (1 - abar_n) * beta_n`` with ``abar_0 = 1``."""
        ab_prev = self.alpha_bar[n - 2] if n > 1 else 1.0
        return float((1.0 - ab_prev) / (1.0 - self.alpha_bar[n - 1]) * self.beta[n - 1])

    def to_dict(self) -> dict:
        return {"n_steps": self.N, "beta_start": float(self.beta[0]), "beta_end": float(self.beta[-1])}


def build_schedule(N: int = 50, beta_start: float = 1e-4, beta_end: float = 0.5) -> NoiseSchedule:
    if N < 1 or not 0 < beta_start < 1 or not 0 < beta_end < 1 or (N > 1 and not beta_start < beta_end):
        raise InvalidArgument(f"invalid schedule N={N}, beta in [{beta_start}, {beta_end}]")
    beta = np.linspace(beta_start, beta_end, N)
    alpha = 1.0 - beta
    return NoiseSchedule(beta, alpha, np.cumprod(alpha))


def _bcast(coef: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Per-row coefficients ``[B]`` broadcast against ``[B, ...]``."""
    coef = np.asarray(coef, dtype=np.float64)
    return coef.reshape(coef.shape + (1,) * (like.ndim - coef.ndim))


def forward_noise(r0, Q, n, eps, schedule: NoiseSchedule) -> np.ndarray:
    """Noised residual at step ``n`` (scalar or per-row ``[B]``)."""
    r0 = np.asarray(r0, dtype=np.float64)
    if np.shape(Q) != r0.shape or np.shape(eps) != r0.shape:
        raise InvalidArgument("r0, Q and eps must share one shape")
    n = schedule.check_step(n)
    sab = _bcast(np.sqrt(schedule.alpha_bar[n - 1]), r0)
    s1m = _bcast(np.sqrt(1.0 - schedule.alpha_bar[n - 1]), r0)
    return sab * r0 + (1.0 - sab) * Q + s1m * eps


def posterior_mean(r_n, eps_hat, Q, n: int, schedule: NoiseSchedule, mode: str = "per_step") -> np.ndarray:
    """Reverse-step mean.

    ``per_step`` uses ``1/sqrt(alpha_n)``, the exact DDPM posterior coefficient
    for the Q-shifted chain; ``cumulative`` uses ``1/sqrt(abar_n)`` verbatim.
    The two coincide at n = 1.
    """
    if mode not in POSTERIOR_MODES:
        raise InvalidArgument(f"posterior mode must be one of {POSTERIOR_MODES}, got {mode!r}")
    n = int(schedule.check_step(n))
    beta = schedule.beta[n - 1]
    ab = schedule.alpha_bar[n - 1]
    coef = 1.0 / np.sqrt(schedule.alpha[n - 1] if mode == "per_step" else ab)
    return coef * (r_n - beta / np.sqrt(1.0 - ab) * eps_hat) + (1.0 - coef) * Q


def _member_streams(seed: int, member_ids, labels):
    noise = [RngStream.for_purpose(seed, *labels, "noise", int(k)) for k in member_ids]
    signs = [RngStream.for_purpose(seed, *labels, "q", int(k)) for k in member_ids]
    return noise, signs


def sample_members(
    eps_fn,
    shape,
    magnitude: np.ndarray,
    schedule: NoiseSchedule,
    member_ids,
    seed: int,
    labels=("sample",),
    mode: str = "per_step",
) -> np.ndarray:
    """Ancestral sampling of residual tokens for a group of ensemble members.

    ``eps_fn(r_n, Q, n)`` predicts noise for stacked members; its arrays are
    ``[G*B, ...]`` where ``shape = (B, ...)`` is one member's block and
    ``G = len(member_ids)``. Member k draws
    its Gaussian noise from stream ``(*labels, "noise", k)`` and its signs from
    ``(*labels, "q", k)``, so results do not depend on how members are grouped.
    ``magnitude`` broadcasts against ``shape``. Returns ``[G, *shape]``.
    """
    noise, signs = _member_streams(seed, member_ids, labels)
    shape = tuple(shape)
    G = len(member_ids)

    def draw(streams, fn):
        return np.concatenate([fn(s) for s in streams], axis=0)

    Q = draw(signs, lambda s: s.sign(shape) * magnitude)
    r = Q + draw(noise, lambda s: s.normal(shape))
    for n in range(schedule.N, 0, -1):
        eps_hat = eps_fn(r, Q, n)
        mu = posterior_mean(r, eps_hat, Q, n, schedule, mode)
        if n > 1:
            z = draw(noise, lambda s: s.normal(shape))
            r = mu + np.sqrt(schedule.posterior_variance(n)) * z
        else:
            r = mu
    return r.reshape((G,) + shape)
