"""Training configuration and the assembled model (encoders + denoiser + schedules).

Parameter tensors are immutable, so optimizer steps produce fresh tensors;
the model keeps a name -> (holder, attribute) registry to swap updated
tensors back into the structured containers. Each parameter group draws
its initial values from its own seed stream, so adding granularity levels
never shifts the initialization of existing groups.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .denoiser import (
    CONDITIONING_MODES,
    DenoiserConfig,
    DenoiserParams,
    eps_theta,
    init_denoiser,
)
from .encoder import EncoderConfig, EncoderParams, init_encoder
from .granularity import GranularitySpec
from .nn import GRUWeights, LinearWeights
from .rng import rng_stream
from .schedule import (
    GranularitySchedule,
    ScheduleSpec,
    derive_gran_schedule,
    linear_beta_schedule,
    share_ratio_to_index,
)
from .tensor import Tensor

SCALING_MODES = ("none", "mean")
MASK_MODES = ("mask", "train-all")

# seed-stream layout: one sub-stream per consumer group
_STREAM_DENOISER = 1
_STREAM_TRAIN = 2
_STREAM_FORECAST = 3
_STREAM_ENCODER_BASE = 10


@dataclass(frozen=True)
class TrainConfig:
    """Everything needed to reproduce a training run (given data and seed)."""

    granularity_windows: tuple[int, ...] = (1,)
    loss_weights: tuple[float, ...] = (1.0,)
    share_ratios: tuple[float, ...] = (1.0,)
    diffusion_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.1
    epochs: int = 30
    batch_size: int = 32
    batches_per_epoch: int = 32
    learning_rate: float = 1e-5
    context_length: int = 24
    prediction_length: int = 24
    hidden_size: int = 64
    gru_layers: int = 2
    denoiser_width: int = 128
    denoiser_blocks: int = 4
    embedding_dim: int = 32
    conditioning: str = "film"
    share_encoder: bool = False
    scaling: str = "mean"
    mask_mode: str = "mask"
    shared_sampling_noise: bool = True
    use_covariates: bool = False
    seed: int = 0

    def __post_init__(self):
        g = len(self.granularity_windows)
        if not (len(self.loss_weights) == len(self.share_ratios) == g):
            raise ValueError(
                "granularity_windows, loss_weights and share_ratios must have "
                "equal length"
            )
        if self.granularity_windows[0] != 1:
            raise ValueError("finest granularity window must be 1")
        if any(
            b <= a
            for a, b in zip(self.granularity_windows, self.granularity_windows[1:])
        ):
            raise ValueError("granularity windows must be strictly increasing")
        if abs(sum(self.loss_weights) - 1.0) > 1e-9:
            raise ValueError(f"loss weights must sum to 1, got {sum(self.loss_weights)}")
        if any(w < 0 for w in self.loss_weights):
            raise ValueError("loss weights must be non-negative")
        if self.share_ratios[0] != 1.0:
            raise ValueError("finest granularity share ratio must be 1.0")
        starts = [
            share_ratio_to_index(r, self.diffusion_steps) for r in self.share_ratios
        ]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError(
                "share ratios must give strictly increasing start indices "
                f"(got {starts}); ties are rejected"
            )
        if self.context_length < 1 or self.prediction_length < 1:
            raise ValueError("context and prediction lengths must be >= 1")
        if self.diffusion_steps < 2:
            raise ValueError("diffusion_steps must be >= 2")
        if not (0.0 < self.beta_start <= self.beta_end < 1.0):
            raise ValueError("require 0 < beta_start <= beta_end < 1")
        if self.epochs < 1 or self.batch_size < 1 or self.batches_per_epoch < 1:
            raise ValueError("epochs, batch_size, batches_per_epoch must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.scaling not in SCALING_MODES:
            raise ValueError(f"scaling must be one of {SCALING_MODES}")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")

    @property
    def num_levels(self) -> int:
        return len(self.granularity_windows)

    @property
    def window_length(self) -> int:
        return self.context_length + self.prediction_length

    def granularity_specs(self) -> tuple[GranularitySpec, ...]:
        return tuple(
            GranularitySpec(window_size=w, loss_weight=lw)
            for w, lw in zip(self.granularity_windows, self.loss_weights)
        )

    def start_indices(self) -> list[int]:
        return [share_ratio_to_index(r, self.diffusion_steps) for r in self.share_ratios]

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("granularity_windows", "loss_weights", "share_ratios"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def covariate_features(ticks: np.ndarray) -> np.ndarray:
    """Scaled hour-of-day and day-of-week features for absolute tick indices."""
    ticks = np.asarray(ticks, dtype=np.float64)
    hour = np.mod(ticks, 24.0) / 24.0
    dow = np.mod(np.floor_divide(ticks, 24.0), 7.0) / 7.0
    return np.stack([hour, dow], axis=-1)


@dataclass
class Model:
    """Assembled parameters plus the schedules they were trained with."""

    cfg: TrainConfig
    data_dim: int
    encoders: list[EncoderParams]
    denoiser: DenoiserParams
    base_schedule: ScheduleSpec
    gran_schedules: list[GranularitySchedule]
    _registry: dict[str, tuple[object, str]] = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls, cfg: TrainConfig, data_dim: int, betas: np.ndarray | None = None
    ) -> "Model":
        input_dim = data_dim + (2 if cfg.use_covariates else 0)
        enc_cfg = EncoderConfig(
            input_dim=input_dim,
            hidden_size=cfg.hidden_size,
            num_layers=cfg.gru_layers,
        )
        n_enc = 1 if cfg.share_encoder else cfg.num_levels
        encoders = [
            init_encoder(enc_cfg, rng_stream(cfg.seed, _STREAM_ENCODER_BASE + g))
            for g in range(n_enc)
        ]
        den_cfg = DenoiserConfig(
            data_dim=data_dim,
            cond_dim=cfg.hidden_size,
            width=cfg.denoiser_width,
            num_blocks=cfg.denoiser_blocks,
            embedding_dim=cfg.embedding_dim,
            conditioning=cfg.conditioning,
        )
        denoiser = init_denoiser(den_cfg, rng_stream(cfg.seed, _STREAM_DENOISER))
        if betas is None:
            base = linear_beta_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)
        else:
            base = ScheduleSpec(np.asarray(betas, dtype=np.float64))
        gran = [derive_gran_schedule(base, idx) for idx in cfg.start_indices()]
        model = cls(
            cfg=cfg,
            data_dim=data_dim,
            encoders=encoders,
            denoiser=denoiser,
            base_schedule=base,
            gran_schedules=gran,
        )
        model._rebuild_registry()
        return model

    def encoder_for(self, g: int) -> EncoderParams:
        return self.encoders[0] if self.cfg.share_encoder else self.encoders[g]

    def encoder_name(self, i: int) -> str:
        return "enc.shared" if self.cfg.share_encoder else f"enc.g{i + 1}"

    def _rebuild_registry(self) -> None:
        reg: dict[str, tuple[object, str]] = {}

        def add_linear(prefix: str, lin: LinearWeights):
            reg[f"{prefix}.W"] = (lin, "W")
            reg[f"{prefix}.b"] = (lin, "b")

        def add_gru(prefix: str, w: GRUWeights):
            for f in w.__dataclass_fields__:
                reg[f"{prefix}.{f}"] = (w, f)

        for i, enc in enumerate(self.encoders):
            prefix = self.encoder_name(i)
            add_linear(f"{prefix}.in_proj", enc.in_proj)
            for li, layer in enumerate(enc.layers):
                add_gru(f"{prefix}.layer{li}", layer)
        den = self.denoiser
        add_linear("den.x_proj", den.x_proj)
        add_linear("den.h_proj", den.h_proj)
        add_linear("den.emb_proj", den.emb_proj)
        add_linear("den.fuse", den.fuse)
        for bi, blk in enumerate(den.blocks):
            add_linear(f"den.block{bi}.fc1", blk.fc1)
            add_linear(f"den.block{bi}.fc2", blk.fc2)
            if blk.film_scale is not None:
                add_linear(f"den.block{bi}.film_scale", blk.film_scale)
                add_linear(f"den.block{bi}.film_shift", blk.film_shift)
        add_linear("den.out", den.out)
        self._registry = reg

    def named_params(self) -> dict[str, Tensor]:
        return {name: getattr(obj, attr) for name, (obj, attr) in self._registry.items()}

    def set_params(self, flat: dict[str, Tensor]) -> None:
        for name, tensor in flat.items():
            obj, attr = self._registry[name]
            setattr(obj, attr, tensor)

    def eps_model(self):
        """Bind the current denoiser parameters into an ``eps_model`` callable."""
        den = self.denoiser
        return lambda x, n, cond: eps_theta(x, n, cond, den)
