"""Per-granularity recurrent encoders producing conditioning states.

Each granularity level owns an independent parameter set by default (a
config flag can share one set across levels for ablation). The encoder is
an input projection followed by a stack of GRU layers; the top layer's
state conditions the denoiser.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import GRUWeights, LinearWeights, gru_cell, init_gru_weights, init_linear, linear
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_size: int = 64
    num_layers: int = 2


@dataclass
class EncoderParams:
    """Input projection plus stacked GRU layers for one granularity level."""

    in_proj: LinearWeights
    layers: list[GRUWeights]

    @property
    def hidden_size(self) -> int:
        return self.layers[0].d_h

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = self.in_proj.named(f"{prefix}.in_proj")
        for i, layer in enumerate(self.layers):
            out.update(layer.named(f"{prefix}.layer{i}"))
        return out


def init_encoder(cfg: EncoderConfig, stream: np.random.Generator) -> EncoderParams:
    in_proj = init_linear(stream, cfg.input_dim, cfg.hidden_size)
    layers = [
        init_gru_weights(stream, cfg.hidden_size, cfg.hidden_size)
        for _ in range(cfg.num_layers)
    ]
    return EncoderParams(in_proj=in_proj, layers=layers)


@dataclass
class HiddenState:
    """Recurrent state: one tensor per layer, each [..., hidden_size].

    ``t`` is the number of timesteps consumed so far, ``g`` the
    granularity level the state belongs to.
    """

    layers: tuple[Tensor, ...]
    g: int
    t: int

    @property
    def top(self) -> Tensor:
        return self.layers[-1]

    def as_array(self) -> np.ndarray:
        return np.stack([h.data for h in self.layers])


def init_hidden(
    g: int, num_layers: int, hidden_size: int, batch: int | None = None
) -> HiddenState:
    """All-zero state at t = 0."""
    if g < 0:
        raise ValueError(f"granularity index must be >= 0, got {g}")
    shape = (hidden_size,) if batch is None else (batch, hidden_size)
    return HiddenState(
        layers=tuple(Tensor(np.zeros(shape)) for _ in range(num_layers)), g=g, t=0
    )


def encode_step(x_t: Tensor, h_prev: HiddenState, params: EncoderParams) -> HiddenState:
    """Advance the state by one observation."""
    if len(h_prev.layers) != params.num_layers:
        raise ValueError(
            f"state has {len(h_prev.layers)} layers, encoder has {params.num_layers}"
        )
    inp = linear(x_t, params.in_proj)
    new_layers = []
    for h_layer, weights in zip(h_prev.layers, params.layers):
        h_new = gru_cell(inp, h_layer, weights)
        new_layers.append(h_new)
        inp = h_new
    return HiddenState(layers=tuple(new_layers), g=h_prev.g, t=h_prev.t + 1)


def encode_context(
    series: np.ndarray, params: EncoderParams, g: int, batch: int | None = None
) -> HiddenState:
    """Fold ``encode_step`` over a [T, D] (or [B, T, D]) context window."""
    series = np.asarray(series, dtype=np.float64)
    batched = series.ndim == 3
    length = series.shape[1] if batched else series.shape[0]
    if length < 1:
        raise ValueError("context must contain at least one timestep")
    h = init_hidden(
        g,
        params.num_layers,
        params.hidden_size,
        batch=series.shape[0] if batched else batch,
    )
    for t in range(length):
        x_t = Tensor(series[:, t, :] if batched else series[t])
        h = encode_step(x_t, h, params)
    return h
