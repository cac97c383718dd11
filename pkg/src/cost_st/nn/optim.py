"""Adam with coupled L2 weight decay, plus the epoch-level training helpers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import f32


class Adam:
    """Adam where ``weight_decay * value`` is added to the gradient before the moments."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.value
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: Adam, lr_now: float):
    state.step(lr_now)


def lr_at(epoch: int, lr: float = 1e-3, lr_late: float = 4e-4, switch_after: int = 20) -> float:
    """Learning rate for a 1-based epoch: ``lr`` for the first ``switch_after`` epochs."""
    return lr if epoch <= switch_after else lr_late


@dataclass
class EarlyStopping:
    """Tracks the best (lowest) validation score; ties keep the earlier epoch."""

    patience: int = 5
    best: float = float("inf")
    best_epoch: int = 0
    bad_epochs: int = 0
    history: list = field(default_factory=list)

    def update(self, epoch: int, score: float) -> bool:
        """Record ``score`` for ``epoch``; returns True when this epoch is the new best."""
        self.history.append((epoch, score))
        if score < self.best:
            self.best, self.best_epoch, self.bad_epochs = score, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def fit_with_early_stopping(module, train_epoch, validate, epochs: int, patience: int, log=None):
    """Generic epoch loop with best-epoch restore.

    ``train_epoch(epoch) -> (train_loss, lr)`` and ``validate(epoch) -> score``.
    The best state is snapshotted rounded to float32 so the restored module is
    exactly what a checkpoint stores. Returns ``(stopper, history)``.
    """
    stopper = EarlyStopping(patience)
    best_state = None
    history = []
    for epoch in range(1, epochs + 1):
        train_loss, lr = train_epoch(epoch)
        score = float(validate(epoch))
        if stopper.update(epoch, score):
            best_state = {k: f32(v) for k, v in module.state().items()}
        record = {"epoch": epoch, "train_loss": float(train_loss), "val_loss": score, "lr": lr}
        history.append(record)
        if log is not None:
            log(record)
        if stopper.should_stop:
            break
    if best_state is not None:
        module.load_state(best_state)
    return stopper, history
