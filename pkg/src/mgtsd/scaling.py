"""Per-dimension mean-magnitude scaling of forecasting windows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Scaler:
    """Divides by the mean absolute value of the context window per dimension.

    ``factors`` broadcasts against the trailing axes of whatever it scales;
    dimensions whose context is identically zero fall back to factor 1.
    """

    mode: str
    factors: np.ndarray

    @classmethod
    def fit(cls, context: np.ndarray, mode: str = "mean") -> "Scaler":
        """``context``: [..., T, D]; factor per leading batch element and dim."""
        context = np.asarray(context, dtype=np.float64)
        if mode == "none":
            shape = context.shape[:-2] + (1, context.shape[-1])
            return cls(mode=mode, factors=np.ones(shape))
        if mode != "mean":
            raise ValueError(f"unknown scaling mode {mode!r}")
        factors = np.abs(context).mean(axis=-2, keepdims=True)
        factors = np.where(factors > 0.0, factors, 1.0)
        return cls(mode=mode, factors=factors)

    def scale(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) / self.factors

    def unscale(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.factors
