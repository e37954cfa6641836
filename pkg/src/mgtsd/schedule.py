"""Variance schedules: a base schedule plus per-granularity truncations.

A granularity level with start index ``n*`` keeps its chain frozen below
``n*`` (alpha = 1 there) and shares the base schedule from step ``n*``
onward:

    alpha_n^g = 1        for n < n*
    alpha_n^g = alpha_n  for n >= n*

so a_n^g = prod_{k<=n} alpha_k^g equals 1 strictly below ``n*`` and picks
up the base products from ``n*``. The share ratio is r = 1 - (n* - 1)/N,
the fraction of the schedule shared with the finest level: r = 1 and
n* = 1 reproduce the base schedule exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ScheduleSpec:
    """Base variance schedule {beta_n} with derived alpha / alpha-bar arrays."""

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-d array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("every beta must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))

    @property
    def num_steps(self) -> int:
        return int(self.betas.size)

    def tail(self, start_index: int) -> "ScheduleSpec":
        """Plain schedule made of the shared steps {beta_n : n >= start_index}."""
        if not 1 <= start_index <= self.num_steps:
            raise ValueError(f"start index {start_index} outside [1, {self.num_steps}]")
        return ScheduleSpec(self.betas[start_index - 1 :])


def linear_beta_schedule(
    num_steps: int, beta_start: float = 1e-4, beta_end: float = 0.1
) -> ScheduleSpec:
    """Linearly spaced betas, endpoints included."""
    if num_steps < 2:
        raise ValueError(f"need at least 2 diffusion steps, got {num_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"require 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return ScheduleSpec(np.linspace(beta_start, beta_end, num_steps))


def share_ratio_to_index(ratio: float, num_steps: int) -> int:
    """Invert r = 1 - (n* - 1)/N with round-half-up, clamped to [1, N]."""
    if ratio <= 0.0:
        raise ValueError(f"share ratio must be positive, got {ratio}")
    if ratio > 1.0:
        raise ValueError(f"share ratio must be at most 1, got {ratio}")
    n_star = int(np.floor(num_steps * (1.0 - ratio) + 0.5)) + 1
    return max(1, min(num_steps, n_star))


@dataclass(frozen=True)
class GranularitySchedule:
    """Truncated schedule for one granularity level.

    ``a`` and ``b`` are stored with a leading entry for n = 0 (empty
    product), so ``a[n]`` is the signal fraction after n forward steps.
    """

    base: ScheduleSpec
    start_index: int
    alphas: np.ndarray = field(init=False)
    betas: np.ndarray = field(init=False)
    a: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)

    def __post_init__(self):
        N = self.base.num_steps
        if not 1 <= self.start_index <= N:
            raise ValueError(f"start index {self.start_index} outside [1, {N}]")
        alphas = np.ones(N, dtype=np.float64)
        alphas[self.start_index - 1 :] = self.base.alphas[self.start_index - 1 :]
        a = np.ones(N + 1, dtype=np.float64)
        a[1:] = np.cumprod(alphas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", 1.0 - alphas)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", 1.0 - a)

    @property
    def num_steps(self) -> int:
        return self.base.num_steps

    @property
    def share_ratio(self) -> float:
        return 1.0 - (self.start_index - 1) / self.num_steps

    def alpha(self, n) -> np.ndarray | float:
        return self.alphas[np.asarray(n) - 1]

    def beta(self, n) -> np.ndarray | float:
        return self.betas[np.asarray(n) - 1]

    def a_of(self, n) -> np.ndarray | float:
        return self.a[np.asarray(n)]

    def b_of(self, n) -> np.ndarray | float:
        return self.b[np.asarray(n)]

    def sigma(self, n: int) -> float:
        """Reverse-step variance (1 - a_{n-1}) / (1 - a_n) * beta_n; 0 when frozen."""
        beta_n = float(self.betas[n - 1])
        if beta_n == 0.0:
            return 0.0
        denom = float(self.b[n])
        if denom == 0.0:
            return 0.0
        return float(self.b[n - 1]) / denom * beta_n


def derive_gran_schedule(base: ScheduleSpec, start_index: int) -> GranularitySchedule:
    return GranularitySchedule(base=base, start_index=start_index)
