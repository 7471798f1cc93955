"""Noise schedules and the forward (noising) process.

Timesteps are 1-based: ``beta(t)`` for t in [1, T]. The cumulative products
``alpha_bar`` are validated against a compensated log-space recomputation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = ["NoiseSchedule", "linear_schedule", "forward_sample", "alpha_bar_recompute"]


@dataclass(frozen=True)
class NoiseSchedule:
    """Tables over t = 1..T, stored 0-indexed (entry t-1 belongs to step t).

    ``sigma(t)**2 = beta(t)``: the reverse-step noise uses the forward
    variance, the usual upper-bound choice.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.shape != (self.T,):
            raise DataError(f"beta must have shape ({self.T},)")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise DataError("beta values must lie strictly inside (0, 1)")
        object.__setattr__(self, "beta", beta)
        alpha = 1.0 - beta
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", np.cumprod(alpha))
        object.__setattr__(self, "sigma", np.sqrt(beta))
        for arr in (self.beta, self.alpha, self.alpha_bar, self.sigma):
            arr.setflags(write=False)

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise DataError(f"timestep {t} out of range [1, {self.T}]")
        return t

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._check_t(t) - 1])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._check_t(t) - 1])

    def alpha_bar_at(self, t: int) -> float:
        return float(self.alpha_bar[self._check_t(t) - 1])

    def sigma_at(self, t: int) -> float:
        return float(self.sigma[self._check_t(t) - 1])


def linear_schedule(T: int, beta_1: float, beta_T: float) -> NoiseSchedule:
    """Betas linearly interpolated from ``beta_1`` to ``beta_T`` inclusive."""
    if T < 2:
        raise DataError("schedule needs T >= 2")
    if not (0.0 < beta_1 <= beta_T < 1.0):
        raise DataError("need 0 < beta_1 <= beta_T < 1")
    return NoiseSchedule(T=T, beta=np.linspace(beta_1, beta_T, T))


def alpha_bar_recompute(sched: NoiseSchedule) -> np.ndarray:
    """Recompute alpha_bar with Kahan-compensated log-space accumulation.

    Used by tests to bound the rounding error of the cumulative product.
    """
    out = np.empty(sched.T)
    total = 0.0
    carry = 0.0
    for i in range(sched.T):
        term = math.log1p(-sched.beta[i]) - carry
        acc = total + term
        carry = (acc - total) - term
        total = acc
        out[i] = math.exp(total)
    return out


def forward_sample(
    d0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    """Noised field ``sqrt(abar_t) * d0 + sqrt(1 - abar_t) * eps``."""
    d0 = np.asarray(d0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if d0.shape != eps.shape:
        raise DataError(f"d0 shape {d0.shape} != eps shape {eps.shape}")
    ab = sched.alpha_bar_at(t)
    return np.sqrt(ab) * d0 + np.sqrt(1.0 - ab) * eps
