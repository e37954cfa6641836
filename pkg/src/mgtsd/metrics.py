"""Probabilistic-forecast metrics, share-ratio selection, and FFT analysis.

CRPS uses the exact integral of the squared difference between the
empirical CDF and the observation step function, computed in energy form

    CRPS(F_S, y) = mean_i |x_i - y| - (1/2) mean_{i,j} |x_i - x_j|

with the pair mean taken over all S^2 ordered pairs (self-pairs included),
which equals the CDF integral exactly. A quantile-grid approximation is
available for parity with common toolkits.

CRPS_sum / NMAE_sum / NRMSE_sum first sum the series across dimensions,
then score per timestep and average over the horizon. NRMSE follows the
convention sqrt(MSE / mean|Y|): the mean absolute magnitude normalizes
the squared error inside the root (documented, deliberately literal).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_QUANTILES = np.arange(0.05, 0.951, 0.05)


def crps_empirical(samples: np.ndarray, obs: float) -> float:
    """Exact CRPS of the empirical CDF of ``samples`` against a scalar."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    S = samples.size
    if S == 0:
        raise ValueError("need at least one sample")
    term1 = np.abs(samples - obs).mean()
    x = np.sort(samples)
    k = np.arange(S)
    term2 = float(np.sum(x * (2.0 * k - S + 1.0))) / (S * S)
    return max(0.0, float(term1 - term2))


def crps_quantile(
    samples: np.ndarray, obs: float, quantiles: np.ndarray = DEFAULT_QUANTILES
) -> float:
    """Quantile-grid CRPS approximation (mean of 2x pinball loss)."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("need at least one sample")
    q_vals = np.quantile(samples, quantiles)
    diff = obs - q_vals
    pinball = np.where(diff >= 0, quantiles * diff, (quantiles - 1.0) * diff)
    return float(2.0 * pinball.mean())


def crps_sum(samples: np.ndarray, obs: np.ndarray, estimator: str = "exact") -> float:
    """Dimension-summed CRPS averaged over the horizon.

    ``samples``: [S, H, D] forecast paths; ``obs``: [H, D] ground truth.
    """
    samples = np.asarray(samples, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if samples.ndim != 3 or obs.ndim != 2 or samples.shape[1:] != obs.shape:
        raise ValueError(
            f"shape mismatch: samples {samples.shape} vs obs {obs.shape}"
        )
    agg_samples = samples.sum(axis=2)
    agg_obs = obs.sum(axis=1)
    if estimator == "exact":
        scorer = crps_empirical
    elif estimator == "quantile":
        scorer = crps_quantile
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    per_t = [scorer(agg_samples[:, t], agg_obs[t]) for t in range(agg_obs.size)]
    return float(np.mean(per_t))


def _summed_pair(pred: np.ndarray, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs obs {obs.shape}")
    if pred.ndim == 2:
        pred, obs = pred.sum(axis=1), obs.sum(axis=1)
    denom = np.abs(obs).mean()
    if denom == 0.0:
        raise ValueError("degenerate normalizer: mean |obs| is zero")
    return pred, obs


def nmae_sum(pred: np.ndarray, obs: np.ndarray) -> float:
    """mean|pred - obs| / mean|obs| on the dimension-summed series."""
    pred, obs = _summed_pair(pred, obs)
    return float(np.abs(pred - obs).mean() / np.abs(obs).mean())


def nrmse_sum(pred: np.ndarray, obs: np.ndarray) -> float:
    """sqrt(mean((pred - obs)^2) / mean|obs|) on the dimension-summed series."""
    pred, obs = _summed_pair(pred, obs)
    return float(np.sqrt(((pred - obs) ** 2).mean() / np.abs(obs).mean()))


@dataclass
class MetricsReport:
    """Per-window scores plus mean/std aggregates."""

    windows: list[dict]
    crps_sum: float
    nmae_sum: float
    nrmse_sum: float
    crps_sum_std: float
    nmae_sum_std: float
    nrmse_sum_std: float
    num_samples: int

    @classmethod
    def from_windows(cls, rows: list[dict], num_samples: int) -> "MetricsReport":
        def agg(key):
            vals = np.array([r[key] for r in rows])
            return float(vals.mean()), float(vals.std())

        (crps_m, crps_s) = agg("crps_sum")
        (nmae_m, nmae_s) = agg("nmae_sum")
        (nrmse_m, nrmse_s) = agg("nrmse_sum")
        return cls(
            windows=rows,
            crps_sum=crps_m,
            nmae_sum=nmae_m,
            nrmse_sum=nrmse_m,
            crps_sum_std=crps_s,
            nmae_sum_std=nmae_s,
            nrmse_sum_std=nrmse_s,
            num_samples=num_samples,
        )

    def to_dict(self) -> dict:
        return {
            "crps_sum": self.crps_sum,
            "nmae_sum": self.nmae_sum,
            "nrmse_sum": self.nrmse_sum,
            "std": {
                "crps_sum": self.crps_sum_std,
                "nmae_sum": self.nmae_sum_std,
                "nrmse_sum": self.nrmse_sum_std,
            },
            "num_samples": self.num_samples,
            "num_windows": len(self.windows),
            "windows": self.windows,
        }


@dataclass
class ShareRatioCurve:
    """Score of coarse targets against sampling-path latents per grid step."""

    window_size: int
    steps: list[int]
    ratios: list[float]
    scores: list[float]
    num_diffusion_steps: int

    @property
    def argmin_step(self) -> int:
        return int(self.steps[int(np.argmin(self.scores))])

    @property
    def best_ratio(self) -> float:
        return float(self.ratios[int(np.argmin(self.scores))])

    def to_rows(self) -> list[tuple[int, float, float]]:
        return list(zip(self.steps, self.ratios, self.scores))

    def to_dict(self) -> dict:
        return {
            "window_size": self.window_size,
            "num_diffusion_steps": self.num_diffusion_steps,
            "steps": self.steps,
            "ratios": self.ratios,
            "scores": self.scores,
            "argmin_step": self.argmin_step,
            "best_ratio": self.best_ratio,
        }


def select_share_ratio(
    model,
    series: np.ndarray,
    coarse_windows,
    num_windows: int,
    num_samples: int,
    step_grid=None,
    seed: int = 0,
) -> list[ShareRatioCurve]:
    """Share-ratio selection curves from a single-granularity model.

    For each grid step n the finest-level latent right after reverse step n
    (so row n = 1 holds the final output) is scored with CRPS_sum against
    each coarse-grained target; the row's ratio 1 - (n - 1)/N is the share
    ratio that would start guidance at step n. Scores are averaged across
    rolling windows; the argmin suggests the level's share ratio.
    """
    from .forecasting import coarse_targets, forecast, window_slices, _window_seed

    if model is None:
        raise ValueError("a trained single-granularity model is required")
    cfg = model.cfg
    if cfg.num_levels != 1:
        raise ValueError(
            f"share-ratio selection needs a single-granularity model, "
            f"got {cfg.num_levels} levels"
        )
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    N = cfg.diffusion_steps
    if step_grid is None:
        step_grid = range(1, N + 1)
    steps = sorted(set(int(s) for s in step_grid))
    if steps[0] < 1 or steps[-1] > N:
        raise ValueError(f"step grid must lie within [1, {N}]")
    coarse_windows = [int(w) for w in coarse_windows]
    slices = window_slices(
        series.shape[0], cfg.context_length, cfg.prediction_length, num_windows
    )
    scores = {w: np.zeros(len(steps)) for w in coarse_windows}
    for w_idx, (ctx_start, pred_start) in enumerate(slices):
        window_fine = series[ctx_start : pred_start + cfg.prediction_length]
        context = window_fine[: cfg.context_length]
        fc = forecast(
            model,
            context,
            cfg.prediction_length,
            num_samples,
            seed=_window_seed(seed, w_idx),
            collect_steps=steps,
            context_start_tick=ctx_start,
        )
        targets = coarse_targets(window_fine, cfg.context_length, coarse_windows)
        for cw in coarse_windows:
            scores[cw] += [
                crps_sum(fc.collected[n], targets[cw]) for n in steps
            ]
    curves = []
    for cw in coarse_windows:
        curves.append(
            ShareRatioCurve(
                window_size=cw,
                steps=steps,
                ratios=[1.0 - (n - 1) / N for n in steps],
                scores=list(scores[cw] / num_windows),
                num_diffusion_steps=N,
            )
        )
    return curves


def fft_spectrum(series: np.ndarray) -> np.ndarray:
    """Magnitude of the one-sided DFT of a univariate series."""
    series = np.asarray(series, dtype=np.float64).ravel()
    if series.size < 2:
        raise ValueError("need at least two points for a spectrum")
    return np.abs(np.fft.rfft(series))
