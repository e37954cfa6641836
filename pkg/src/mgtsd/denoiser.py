"""Shared noise-prediction network.

A residual MLP conditioned on the recurrent hidden state and a sinusoidal
encoding of the diffusion step. The network never sees a granularity
index: all level information flows through the hidden state, and one
parameter set serves every level.

The first trunk layer always consumes concat(project(x), project(h),
step embedding); in "film" mode (the default) each residual block is
additionally modulated by a scale/shift computed from the conditioning,
while "concat" mode leaves the blocks unconditioned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import LinearWeights, init_linear, linear
from .tensor import Tensor, concat, mul, silu

CONDITIONING_MODES = ("film", "concat")


def sinusoidal_embedding(n, dim: int) -> np.ndarray:
    """Raw interleaved sin/cos encoding of step ``n`` (scalar or array).

    Frequencies fall geometrically from 1 to 1/10000 across ``dim``/2
    channels; column 2k holds sin(n w_k) and column 2k+1 holds cos(n w_k).
    """
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    half = dim // 2
    exponents = np.arange(half) / max(half - 1, 1)
    freqs = np.exp(-math.log(10000.0) * exponents)
    angles = np.asarray(n, dtype=np.float64)[..., None] * freqs
    out = np.empty(angles.shape[:-1] + (dim,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


@dataclass(frozen=True)
class DenoiserConfig:
    data_dim: int
    cond_dim: int
    width: int = 128
    num_blocks: int = 4
    embedding_dim: int = 32
    conditioning: str = "film"

    def __post_init__(self):
        if self.embedding_dim % 2 != 0:
            raise ValueError("embedding_dim must be even")
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")


@dataclass
class ResidualBlock:
    fc1: LinearWeights
    fc2: LinearWeights
    film_scale: LinearWeights | None
    film_shift: LinearWeights | None

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = self.fc1.named(f"{prefix}.fc1")
        out.update(self.fc2.named(f"{prefix}.fc2"))
        if self.film_scale is not None:
            out.update(self.film_scale.named(f"{prefix}.film_scale"))
            out.update(self.film_shift.named(f"{prefix}.film_shift"))
        return out


@dataclass
class DenoiserParams:
    cfg: DenoiserConfig
    x_proj: LinearWeights
    h_proj: LinearWeights
    emb_proj: LinearWeights
    fuse: LinearWeights
    blocks: list[ResidualBlock]
    out: LinearWeights

    def named(self, prefix: str = "den") -> dict[str, Tensor]:
        out = self.x_proj.named(f"{prefix}.x_proj")
        out.update(self.h_proj.named(f"{prefix}.h_proj"))
        out.update(self.emb_proj.named(f"{prefix}.emb_proj"))
        out.update(self.fuse.named(f"{prefix}.fuse"))
        for i, blk in enumerate(self.blocks):
            out.update(blk.named(f"{prefix}.block{i}"))
        out.update(self.out.named(f"{prefix}.out"))
        return out


def init_denoiser(cfg: DenoiserConfig, stream: np.random.Generator) -> DenoiserParams:
    w = cfg.width
    film = cfg.conditioning == "film"
    blocks = []
    for _ in range(cfg.num_blocks):
        blocks.append(
            ResidualBlock(
                fc1=init_linear(stream, w, w),
                fc2=init_linear(stream, w, w),
                film_scale=init_linear(stream, w, w) if film else None,
                film_shift=init_linear(stream, w, w) if film else None,
            )
        )
    return DenoiserParams(
        cfg=cfg,
        x_proj=init_linear(stream, cfg.data_dim, w),
        h_proj=init_linear(stream, cfg.cond_dim, w),
        emb_proj=init_linear(stream, cfg.embedding_dim, w),
        fuse=init_linear(stream, 3 * w, w),
        blocks=blocks,
        out=init_linear(stream, w, cfg.data_dim, zero=True),
    )


def eps_theta(x_n, n, hidden, params: DenoiserParams) -> Tensor:
    """Predict the injected noise from (x_n, step, conditioning state).

    ``x_n``: [..., D] array or tensor; ``n``: int or int array matching the
    leading axes; ``hidden``: conditioning tensor [..., cond_dim] (a
    HiddenState's top layer, or anything exposing ``.top``).
    """
    cfg = params.cfg
    x = x_n if isinstance(x_n, Tensor) else Tensor(x_n)
    if x.shape[-1] != cfg.data_dim:
        raise ValueError(f"input width {x.shape[-1]} != data_dim {cfg.data_dim}")
    h = getattr(hidden, "top", hidden)
    if not isinstance(h, Tensor):
        h = Tensor(h)
    if h.shape[-1] != cfg.cond_dim:
        raise ValueError(f"conditioning width {h.shape[-1]} != cond_dim {cfg.cond_dim}")
    n_arr = np.asarray(n)
    emb = sinusoidal_embedding(
        np.broadcast_to(n_arr, x.shape[:-1]) if x.ndim > 1 else n_arr,
        cfg.embedding_dim,
    )
    x_p = linear(x, params.x_proj)
    h_p = linear(h, params.h_proj)
    e_p = linear(Tensor(emb), params.emb_proj)
    trunk = silu(linear(concat([x_p, h_p, e_p], axis=-1), params.fuse))
    if cfg.conditioning == "film":
        cond = silu(h_p + e_p)
    else:
        cond = None
    for blk in params.blocks:
        u = trunk
        if cond is not None:
            scale = linear(cond, blk.film_scale)
            shift = linear(cond, blk.film_shift)
            u = mul(u, Tensor(1.0) + scale) + shift
        y = linear(silu(linear(u, blk.fc1)), blk.fc2)
        trunk = trunk + y
    return linear(trunk, params.out)
