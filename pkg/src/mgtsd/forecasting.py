"""Autoregressive sampling over the forecast horizon and rolling evaluation.

Each future timestep runs one full reverse chain per granularity level
(one fresh starting noise shared across levels, one z per reverse index
shared across levels), then feeds every level's sample back into that
level's encoder. Sampling across forecast samples is vectorized as a
batch with a dedicated seed stream, so repeated calls are bit-identical.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diffusion import sample_chain
from .encoder import HiddenState, encode_context, encode_step
from .granularity import build_multigran, smooth
from .metrics import MetricsReport, crps_sum, nmae_sum, nrmse_sum
from .model import Model, covariate_features
from .rng import rng_stream
from .scaling import Scaler
from .tensor import Tensor


@dataclass
class ForecastSamples:
    """Sampled future paths, indexed [sample, granularity, timestep, dimension]."""

    values: np.ndarray
    scale_factors: np.ndarray
    granularity_windows: tuple[int, ...]
    collected: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def finest(self) -> np.ndarray:
        return self.values[:, 0]


def _tile_hidden(h: HiddenState, num: int) -> HiddenState:
    layers = tuple(Tensor(np.repeat(l.data, num, axis=0)) for l in h.layers)
    return HiddenState(layers=layers, g=h.g, t=h.t)


def forecast(
    model: Model,
    context: np.ndarray,
    horizon: int,
    num_samples: int,
    seed: int,
    collect_steps=None,
    context_start_tick: int = 0,
) -> ForecastSamples:
    """Sample ``num_samples`` future paths of length ``horizon``.

    ``context`` is the finest-grain history [Tc, D] with Tc at least the
    configured context length; only the trailing configured window is
    consumed. When ``collect_steps`` is given, the finest-level latents
    right after each listed reverse step are returned (mapped back to the
    data domain) under ``collected[n]`` with shape [S, horizon, D].
    """
    cfg = model.cfg
    context = np.asarray(context, dtype=np.float64)
    if context.ndim == 1:
        context = context[:, None]
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    if context.shape[0] < cfg.context_length:
        raise ValueError(
            f"context length {context.shape[0]} is shorter than the "
            f"configured {cfg.context_length}"
        )
    drop = context.shape[0] - cfg.context_length
    context = context[drop:]
    start_tick = context_start_tick + drop
    D = context.shape[1]
    S = num_samples
    G = cfg.num_levels

    scaler = Scaler.fit(context, mode=cfg.scaling)
    mg_ctx = build_multigran(context, cfg.granularity_specs())
    scaled_ctx = scaler.scale(mg_ctx.levels)

    hiddens: list[HiddenState] = []
    for g in range(G):
        inp = scaled_ctx[g]
        if cfg.use_covariates:
            ticks = start_tick + np.arange(cfg.context_length)
            inp = np.concatenate([inp, covariate_features(ticks)], axis=-1)
        h = encode_context(inp[None, :, :], model.encoder_for(g), g)
        hiddens.append(_tile_hidden(h, S))

    eps_model = model.eps_model()
    stream = rng_stream(seed, 3)
    wanted = sorted(int(s) for s in collect_steps) if collect_steps else []
    collected_steps: dict[int, list[np.ndarray]] = {n: [] for n in wanted}
    out = np.empty((S, G, horizon, D))
    factors = scaler.factors  # [1, D], broadcasts over samples
    for k in range(horizon):
        init_noise = stream.standard_normal(size=(S, D))
        xs, collected = sample_chain(
            [init_noise] * G,
            hiddens,
            model.gran_schedules,
            eps_model,
            stream,
            shared_z=cfg.shared_sampling_noise,
            collect_steps=wanted or None,
        )
        for n in wanted:
            collected_steps[n].append(scaler.unscale(collected[n]))
        for g in range(G):
            out[:, g, k, :] = scaler.unscale(xs[g])
            feed = xs[g]
            if cfg.use_covariates:
                tick = start_tick + cfg.context_length + k
                cov = np.broadcast_to(covariate_features(np.array([tick]))[0], (S, 2))
                feed = np.concatenate([feed, cov], axis=-1)
            hiddens[g] = encode_step(Tensor(feed), hiddens[g], model.encoder_for(g))
    return ForecastSamples(
        values=out,
        scale_factors=scaler.factors[0].copy(),
        granularity_windows=cfg.granularity_windows,
        collected={n: np.stack(v, axis=1) for n, v in collected_steps.items()},
    )


def _window_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((int(seed), int(index))).generate_state(1)[0])


def window_slices(
    series_length: int, context_length: int, prediction_length: int, num_windows: int
) -> list[tuple[int, int]]:
    """(context start, prediction start) per rolling window, stride = horizon."""
    needed = context_length + num_windows * prediction_length
    if series_length < needed:
        raise ValueError(
            f"need {needed} ticks for {num_windows} rolling windows, "
            f"got {series_length}"
        )
    return [
        (w * prediction_length, w * prediction_length + context_length)
        for w in range(num_windows)
    ]


def rolling_evaluate(
    model: Model,
    series: np.ndarray,
    num_windows: int,
    num_samples: int,
    seed: int = 0,
    workers: int = 1,
    point: str = "mean",
) -> MetricsReport:
    """Forecast and score ``num_windows`` non-overlapping prediction windows."""
    cfg = model.cfg
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    slices = window_slices(
        series.shape[0], cfg.context_length, cfg.prediction_length, num_windows
    )

    def score(w: int) -> dict:
        ctx_start, pred_start = slices[w]
        context = series[ctx_start:pred_start]
        truth = series[pred_start : pred_start + cfg.prediction_length]
        fc = forecast(
            model,
            context,
            cfg.prediction_length,
            num_samples,
            seed=_window_seed(seed, w),
            context_start_tick=ctx_start,
        )
        samples = fc.finest
        if point == "median":
            point_pred = np.median(samples, axis=0)
        else:
            point_pred = samples.mean(axis=0)
        return {
            "window": w,
            "crps_sum": crps_sum(samples, truth),
            "nmae_sum": nmae_sum(point_pred, truth),
            "nrmse_sum": nrmse_sum(point_pred, truth),
        }

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(score, range(num_windows)))
    else:
        rows = [score(w) for w in range(num_windows)]
    rows.sort(key=lambda r: r["window"])
    return MetricsReport.from_windows(rows, num_samples=num_samples)


def coarse_targets(
    window_fine: np.ndarray, context_length: int, window_sizes
) -> dict[int, np.ndarray]:
    """Coarse-grained truth over the prediction interval of one window.

    ``window_fine`` is the full context+prediction fine series; smoothing
    is aligned to the window start, matching the alignment the forecaster
    uses for its coarse context.
    """
    return {
        s: smooth(window_fine, s)[context_length:] for s in window_sizes
    }
