"""Training loop: random windows, shared-draw guidance losses, Adam updates.

Per batch, each element gets a uniformly sampled context+prediction
window. For every prediction timestep one diffusion index and one noise
vector are drawn and shared across granularity levels; the final loss is
the weighted sum of per-level noise-prediction losses (masked terms
contribute zero). One Adam step runs per batch on the loss averaged over
batch elements and prediction timesteps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .granularity import MultiGranSeries, build_multigran
from .model import Model, TrainConfig, covariate_features
from .optim import adam_step, init_adam
from .rng import rng_stream
from .scaling import Scaler
from .tensor import Tensor, grad, moveaxis, reshape, stack, tsum
from .encoder import encode_step, init_hidden


class NumericalError(RuntimeError):
    """Raised when training produces a non-finite loss."""


@dataclass
class TrainResult:
    model: Model
    loss_trace: list[dict]

    def trace_header(self) -> list[str]:
        g = self.model.cfg.num_levels
        return ["epoch", "mean_loss"] + [f"loss_g{i + 1}" for i in range(g)]


def _encode_window_states(model: Model, g: int, inputs: np.ndarray) -> Tensor:
    """Hidden states conditioning each prediction timestep.

    ``inputs``: [B, L, D(+cov)] scaled window for level ``g``. Returns the
    top-layer states h_{t-1} for t in the prediction interval, as a
    [B, H, hidden] tensor on the tape.
    """
    cfg = model.cfg
    enc = model.encoder_for(g)
    B, L, _ = inputs.shape
    h = init_hidden(g, enc.num_layers, enc.hidden_size, batch=B)
    tops = []
    for t in range(L - 1):
        h = encode_step(Tensor(inputs[:, t, :]), h, enc)
        if t >= cfg.context_length - 1:
            tops.append(h.top)
    # [H, B, hidden] -> [B, H, hidden]
    return moveaxis(stack(tops, axis=0), 0, 1)


def _batch_loss(
    model: Model,
    windows: np.ndarray,
    ticks: np.ndarray,
    n_draw: np.ndarray,
    eps: np.ndarray,
):
    """Loss node plus per-level reporting floats for one batch.

    ``windows``: [G, B, L, D] raw window slices; ``ticks``: [B, L] absolute
    tick indices; ``n_draw``: [B, H] diffusion indices; ``eps``: [B, H, D].
    """
    cfg = model.cfg
    G, B, L, D = windows.shape
    H = cfg.prediction_length
    scaler = Scaler.fit(windows[0, :, : cfg.context_length, :], mode=cfg.scaling)
    scaled = scaler.scale(windows)
    if cfg.use_covariates:
        cov = covariate_features(ticks)
        enc_inputs = np.concatenate(
            [scaled, np.broadcast_to(cov, (G,) + cov.shape)], axis=-1
        )
    else:
        enc_inputs = scaled
    eps_model = model.eps_model()
    mask_on = cfg.mask_mode == "mask"
    n_flat = n_draw.reshape(B * H)
    eps_flat = eps.reshape(B * H, D)
    total = Tensor(0.0)
    per_level: list[float] = []
    masked_counts: list[int] = []
    for g in range(G):
        gs = model.gran_schedules[g]
        h_cond = reshape(_encode_window_states(model, g, enc_inputs[g]), (B * H, -1))
        x0 = scaled[g, :, cfg.context_length :, :]
        a = np.asarray(gs.a_of(n_draw))[..., None]
        b = np.asarray(gs.b_of(n_draw))[..., None]
        x_noisy = (np.sqrt(a) * x0 + np.sqrt(b) * eps).reshape(B * H, D)
        eps_hat = eps_model(x_noisy, n_flat, h_cond)
        resid = Tensor(eps_flat) - eps_hat
        sq = resid * resid
        keep = (b.reshape(B * H) > 0.0) if mask_on else np.ones(B * H, dtype=bool)
        masked = int(B * H - keep.sum())
        if masked:
            sq = sq * Tensor(keep.astype(np.float64)[:, None])
        level_node = tsum(sq) * Tensor(1.0 / (B * H * D))
        total = total + Tensor(float(cfg.loss_weights[g])) * level_node
        unmasked = B * H - masked
        per_level.append(
            float(level_node.data) * (B * H) / unmasked if unmasked else 0.0
        )
        masked_counts.append(masked)
    return total, per_level, masked_counts


def train(source, cfg: TrainConfig) -> TrainResult:
    """Train a model on a finest-grain series ([T, D] array) or a prebuilt stack."""
    if isinstance(source, MultiGranSeries):
        mg = source
        if tuple(sp.window_size for sp in mg.specs) != cfg.granularity_windows:
            raise ValueError(
                "granularity stack windows do not match the training config"
            )
    else:
        series = np.asarray(source, dtype=np.float64)
        if series.ndim == 1:
            series = series[:, None]
        mg = build_multigran(series, cfg.granularity_specs())
    T = mg.length
    L = cfg.window_length
    if T < L:
        raise ValueError(
            f"series length {T} is shorter than context+prediction {L}"
        )
    model = Model.build(cfg, mg.dim)
    params = model.named_params()
    state = init_adam(params)
    stream = rng_stream(cfg.seed, 2)
    B, H, D, N = cfg.batch_size, cfg.prediction_length, mg.dim, cfg.diffusion_steps
    offsets = np.arange(L)
    trace: list[dict] = []
    for epoch in range(cfg.epochs):
        totals = np.zeros(1 + cfg.num_levels)
        for batch in range(cfg.batches_per_epoch):
            starts = stream.integers(0, T - L + 1, size=B)
            n_draw = stream.integers(1, N + 1, size=(B, H))
            eps = stream.standard_normal(size=(B, H, D))
            ticks = starts[:, None] + offsets
            windows = mg.levels[:, ticks, :]
            loss, per_level, _ = _batch_loss(model, windows, ticks, n_draw, eps)
            if not np.isfinite(loss.data):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} batch {batch} "
                    f"(window starts {starts.tolist()})"
                )
            grads = grad(loss, params)
            params, state = adam_step(params, grads, state, lr=cfg.learning_rate)
            model.set_params(params)
            totals[0] += float(loss.data)
            totals[1:] += per_level
        totals /= cfg.batches_per_epoch
        row = {"epoch": epoch, "mean_loss": totals[0]}
        for g in range(cfg.num_levels):
            row[f"loss_g{g + 1}"] = totals[1 + g]
        trace.append(row)
    return TrainResult(model=model, loss_trace=trace)
