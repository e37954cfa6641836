"""Neural-network primitives on top of the tensor core.

GRU formulation (the widely used one, single bias per gate per input path):

    z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
    r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
    n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
    h' = (1 - z) * n + z * h

Weight matrices are stored input-major, so a batch row vector multiplies
from the left: ``x @ W``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, mul, sigmoid, tanh


@dataclass
class GRUWeights:
    """One GRU cell's weights. ``W_i*``: [d_in, d_h], ``W_h*``: [d_h, d_h]."""

    W_iz: Tensor
    W_hz: Tensor
    b_iz: Tensor
    b_hz: Tensor
    W_ir: Tensor
    W_hr: Tensor
    b_ir: Tensor
    b_hr: Tensor
    W_in: Tensor
    W_hn: Tensor
    b_in: Tensor
    b_hn: Tensor

    @property
    def d_in(self) -> int:
        return self.W_iz.shape[0]

    @property
    def d_h(self) -> int:
        return self.W_iz.shape[1]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in self.__dataclass_fields__}


def uniform_init(stream: np.random.Generator, shape, fan_in: int) -> Tensor:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual recurrent-net default."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(stream.uniform(-bound, bound, size=shape))


def init_gru_weights(stream: np.random.Generator, d_in: int, d_h: int) -> GRUWeights:
    def w(shape, fan):
        return uniform_init(stream, shape, fan)

    return GRUWeights(
        W_iz=w((d_in, d_h), d_h), W_hz=w((d_h, d_h), d_h),
        b_iz=w((d_h,), d_h), b_hz=w((d_h,), d_h),
        W_ir=w((d_in, d_h), d_h), W_hr=w((d_h, d_h), d_h),
        b_ir=w((d_h,), d_h), b_hr=w((d_h,), d_h),
        W_in=w((d_in, d_h), d_h), W_hn=w((d_h, d_h), d_h),
        b_in=w((d_h,), d_h), b_hn=w((d_h,), d_h),
    )


def gru_cell(x: Tensor, h: Tensor, weights: GRUWeights) -> Tensor:
    """Single GRU update. ``x``: [..., d_in], ``h``: [..., d_h] -> [..., d_h]."""
    if x.shape[-1] != weights.d_in:
        raise ValueError(
            f"input width {x.shape[-1]} does not match GRU d_in {weights.d_in}"
        )
    if h.shape[-1] != weights.d_h:
        raise ValueError(
            f"hidden width {h.shape[-1]} does not match GRU d_h {weights.d_h}"
        )
    z = sigmoid(x @ weights.W_iz + weights.b_iz + h @ weights.W_hz + weights.b_hz)
    r = sigmoid(x @ weights.W_ir + weights.b_ir + h @ weights.W_hr + weights.b_hr)
    n = tanh(x @ weights.W_in + weights.b_in + mul(r, h @ weights.W_hn + weights.b_hn))
    one = Tensor(1.0)
    return mul(one - z, n) + mul(z, h)


@dataclass
class LinearWeights:
    W: Tensor
    b: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b}


def init_linear(
    stream: np.random.Generator, d_in: int, d_out: int, zero: bool = False
) -> LinearWeights:
    if zero:
        return LinearWeights(
            W=Tensor(np.zeros((d_in, d_out))), b=Tensor(np.zeros(d_out))
        )
    return LinearWeights(
        W=uniform_init(stream, (d_in, d_out), d_in),
        b=uniform_init(stream, (d_out,), d_in),
    )


def linear(x: Tensor, w: LinearWeights) -> Tensor:
    return x @ w.W + w.b
