"""Adam updates and plateau-driven learning-rate control.

Two early-stop profiles are used throughout: ``slow`` halves the rate after
5 epochs without validation improvement and stops after 15, ``fast`` uses
3 and 6. An improving epoch resets both counters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["DivergenceError", "AdamState", "adam_init", "adam_step", "EarlyStopPolicy"]


class DivergenceError(FloatingPointError):
    """A gradient or parameter went non-finite; the message names it."""


@dataclass
class AdamState:
    """Bias-corrected first/second moment buffers, one pair per parameter."""

    lr: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(params: list, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2)
    state.m = [np.zeros_like(p.values) for p in params]
    state.v = [np.zeros_like(p.values) for p in params]
    return state


def adam_step(params: list, state: AdamState) -> None:
    """One in-place update from the gradients stored on the parameters."""
    if len(params) != len(state.m):
        raise ValueError(f"state holds {len(state.m)} moment pairs for {len(params)} params")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for i, p in enumerate(params):
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {p.name or f'param {i}'}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if not np.all(np.isfinite(p.values)):
            raise DivergenceError(f"non-finite values in {p.name or f'param {i}'} after update")


_POLICY_SCHEDULES = {"slow": (5, 15), "fast": (3, 6)}


@dataclass
class EarlyStopPolicy:
    """Plateau tracker: halve the rate periodically, stop when stale.

    ``update`` returns "continue", "halve_lr" or "stop". Halving fires each
    time the stale-epoch count reaches a multiple of ``halve_after``;
    stopping fires when it reaches ``stop_after`` and takes precedence.
    """

    mode: str
    halve_after: int
    stop_after: int
    best_loss: float = float("inf")
    epochs_since_best: int = 0

    @classmethod
    def slow(cls) -> "EarlyStopPolicy":
        return cls("slow", *_POLICY_SCHEDULES["slow"])

    @classmethod
    def fast(cls) -> "EarlyStopPolicy":
        return cls("fast", *_POLICY_SCHEDULES["fast"])

    @classmethod
    def from_mode(cls, mode: str) -> "EarlyStopPolicy":
        if mode not in _POLICY_SCHEDULES:
            raise ValueError(f"unknown early-stop mode {mode!r}")
        return cls(mode, *_POLICY_SCHEDULES[mode])

    def update(self, val_loss: float) -> str:
        if not np.isfinite(val_loss):
            raise ValueError(f"validation loss must be finite, got {val_loss}")
        if val_loss < self.best_loss:
            self.best_loss = float(val_loss)
            self.epochs_since_best = 0
            return "continue"
        self.epochs_since_best += 1
        if self.epochs_since_best >= self.stop_after:
            return "stop"
        if self.epochs_since_best % self.halve_after == 0:
            return "halve_lr"
        return "continue"
