"""Coarse-grained target construction.

Coarse levels are built by reducing non-overlapping windows of the finest
series with a smoother (mean) and replicating each block value over its
window, so every level stays aligned on the same [0, T) timeline. A
trailing partial block (window size not dividing T) is reduced over its
actual length instead of being dropped.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SMOOTHERS = ("mean",)


@dataclass(frozen=True)
class GranularitySpec:
    """One granularity level: window size in finest-grain ticks."""

    window_size: int
    smoother: str = "mean"
    loss_weight: float | None = None

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError(f"window_size must be >= 1, got {self.window_size}")
        if self.smoother not in SMOOTHERS:
            raise ValueError(f"unknown smoother {self.smoother!r}")
        if self.loss_weight is not None and not (0.0 <= self.loss_weight <= 1.0):
            raise ValueError(f"loss_weight must lie in [0, 1], got {self.loss_weight}")


@dataclass
class MultiGranSeries:
    """Aligned stack of granularity levels over a common timeline.

    ``levels`` has shape [G, T, D]; level 0 is the raw series. ``t_context``
    marks the context/prediction split when the stack represents a single
    forecasting window (None for full-history stacks).
    """

    levels: np.ndarray
    specs: tuple[GranularitySpec, ...]
    t_context: int | None = None

    @property
    def num_levels(self) -> int:
        return self.levels.shape[0]

    @property
    def length(self) -> int:
        return self.levels.shape[1]

    @property
    def dim(self) -> int:
        return self.levels.shape[2]

    def block_bounds(self, g: int, t: int) -> tuple[int, int]:
        """[start, end) of the source window feeding level ``g`` at tick ``t``."""
        s = self.specs[g].window_size
        start = (t // s) * s
        return start, min(start + s, self.length)


def smooth(fine: np.ndarray, s: int, smoother: str = "mean") -> np.ndarray:
    """Blockwise-smooth a [T, D] series with non-overlapping windows of ``s``."""
    if s <= 0:
        raise ValueError(f"window size must be positive, got {s}")
    if smoother not in SMOOTHERS:
        raise ValueError(f"unknown smoother {smoother!r}")
    fine = np.asarray(fine, dtype=np.float64)
    if fine.ndim == 1:
        fine = fine[:, None]
    T = fine.shape[0]
    if T < 1:
        raise ValueError("series must contain at least one row")
    if s == 1:
        return fine.copy()
    starts = np.arange(0, T, s)
    sums = np.add.reduceat(fine, starts, axis=0)
    counts = np.minimum(starts + s, T) - starts
    means = sums / counts[:, None]
    return np.repeat(means, counts, axis=0)


def build_multigran(
    fine: np.ndarray, specs: Sequence[GranularitySpec]
) -> MultiGranSeries:
    """Stack aligned granularity levels for the given specs."""
    specs = tuple(specs)
    if not specs:
        raise ValueError("at least one granularity spec is required")
    if specs[0].window_size != 1:
        raise ValueError("finest granularity must have window_size 1")
    sizes = [sp.window_size for sp in specs]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"window sizes must be strictly increasing, got {sizes}")
    weights = [sp.loss_weight for sp in specs]
    if any(w is not None for w in weights):
        if any(w is None for w in weights):
            raise ValueError("either all or no granularity specs carry loss weights")
        total = float(np.sum(weights))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"loss weights must sum to 1, got {total}")
    fine = np.asarray(fine, dtype=np.float64)
    if fine.ndim == 1:
        fine = fine[:, None]
    levels = np.stack([smooth(fine, sp.window_size, sp.smoother) for sp in specs])
    return MultiGranSeries(levels=levels, specs=specs)
