"""Forward noising, guidance losses, and the reverse (ancestral) sampler.

The noise-prediction network enters these functions as a callable
``eps_model(x, n, cond) -> Tensor`` with its parameters already bound, so
the diffusion math stays independent of any particular architecture.

Loss terms whose schedule leaves the input completely clean (b_n^g == 0,
i.e. n below the level's start index) are masked by default: the level's
latent chain only exists from the start index onward, and training on
noiseless inputs would inject an irreducible loss floor. A config flag
("train-all") disables the masking for ablation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .schedule import GranularitySchedule
from .tensor import Tensor, mean, tsum


class _Masked:
    """Sentinel for loss terms excluded by the truncated schedule."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MASKED"


MASKED = _Masked()

EpsModel = Callable[[np.ndarray, np.ndarray | int, object], Tensor]


def forward_noise(
    x0: np.ndarray, n, gs: GranularitySchedule, eps: np.ndarray
) -> np.ndarray:
    """Closed-form forward sample sqrt(a_n) x0 + sqrt(b_n) eps.

    ``n`` may be an int or an int array broadcastable against the leading
    axes of ``x0`` (the trailing axis is the data dimension).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ValueError(f"eps shape {eps.shape} does not match x0 shape {x0.shape}")
    n_arr = np.asarray(n)
    if np.any(n_arr < 1) or np.any(n_arr > gs.num_steps):
        raise ValueError(f"diffusion index {n} outside [1, {gs.num_steps}]")
    a = np.asarray(gs.a_of(n_arr), dtype=np.float64)
    b = np.asarray(gs.b_of(n_arr), dtype=np.float64)
    if a.ndim > 0:
        a = a[..., None]
        b = b[..., None]
    return np.sqrt(a) * x0 + np.sqrt(b) * eps


def guidance_loss_term(
    x0: np.ndarray,
    n: int,
    cond,
    eps: np.ndarray,
    eps_model: EpsModel,
    gs: GranularitySchedule,
    mask: bool = True,
):
    """Per-term noise-prediction loss ||eps - eps_model(x_n, n, cond)||^2 / D.

    Returns the MASKED sentinel when the schedule leaves the input clean
    at step ``n`` (unless ``mask`` is False).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ValueError(f"eps shape {eps.shape} does not match x0 shape {x0.shape}")
    if not 1 <= n <= gs.num_steps:
        raise ValueError(f"diffusion index {n} outside [1, {gs.num_steps}]")
    if mask and gs.b_of(n) == 0.0:
        return MASKED
    x_n = forward_noise(x0, n, gs, eps)
    eps_hat = eps_model(x_n, n, cond)
    resid = Tensor(eps) - eps_hat
    return mean(resid * resid)


@dataclass
class LossReport:
    """Per-granularity losses and the weighted total for one draw or batch."""

    per_level: list[float | None]
    weights: list[float]
    masked_terms: int
    total: float
    node: Tensor

    @property
    def num_levels(self) -> int:
        return len(self.per_level)


def final_loss(
    batch: Sequence[tuple[np.ndarray, object, np.ndarray]],
    n: int,
    weights: Sequence[float],
    eps_model: EpsModel,
    schedules: Sequence[GranularitySchedule],
    mask: bool = True,
) -> LossReport:
    """Weighted sum of per-granularity loss terms for one shared draw ``n``.

    ``batch`` holds one (x0, cond, eps) triple per granularity level.
    Masked terms contribute zero without reweighting the rest.
    """
    if not (len(batch) == len(weights) == len(schedules)):
        raise ValueError("batch, weights and schedules must have equal length")
    wsum = float(np.sum(weights))
    if abs(wsum - 1.0) > 1e-9:
        raise ValueError(f"loss weights must sum to 1, got {wsum}")
    node = Tensor(0.0)
    per_level: list[float | None] = []
    masked = 0
    for (x0, cond, eps), w, gs in zip(batch, weights, schedules):
        term = guidance_loss_term(x0, n, cond, eps, eps_model, gs, mask=mask)
        if term is MASKED:
            per_level.append(None)
            masked += 1
            continue
        per_level.append(float(term.data))
        node = node + Tensor(float(w)) * term
    return LossReport(
        per_level=per_level,
        weights=[float(w) for w in weights],
        masked_terms=masked,
        total=float(node.data),
        node=node,
    )


def reverse_step(
    x_n: np.ndarray,
    n: int,
    cond,
    gs: GranularitySchedule,
    eps_model: EpsModel,
    z: np.ndarray,
) -> np.ndarray:
    """One ancestral update x_n -> x_{n-1}.

    Uses the posterior mean (x_n - beta_n / sqrt(1 - a_n) * eps_hat) / sqrt(alpha_n)
    plus sqrt(sigma_n) z with sigma_n = (1 - a_{n-1}) / (1 - a_n) * beta_n.
    Frozen steps (beta_n == 0) are the identity, which resolves the 0/0.
    """
    x_n = np.asarray(x_n, dtype=np.float64)
    if not 1 <= n <= gs.num_steps:
        raise ValueError(f"diffusion index {n} outside [1, {gs.num_steps}]")
    beta_n = float(gs.beta(n))
    if beta_n == 0.0:
        return x_n.copy()
    alpha_n = float(gs.alpha(n))
    b_n = float(gs.b_of(n))
    eps_hat = eps_model(x_n, n, cond).data
    mean_ = (x_n - beta_n / np.sqrt(b_n) * eps_hat) / np.sqrt(alpha_n)
    sigma = gs.sigma(n)
    if sigma == 0.0:
        return mean_
    z = np.asarray(z, dtype=np.float64)
    return mean_ + np.sqrt(sigma) * z


def sample_chain(
    noise: Sequence[np.ndarray],
    conds: Sequence[object],
    schedules: Sequence[GranularitySchedule],
    eps_model: EpsModel,
    stream: np.random.Generator,
    shared_z: bool = True,
    collect_steps: Sequence[int] | None = None,
) -> tuple[list[np.ndarray], dict[int, np.ndarray]]:
    """Run the full reverse chain for every granularity level.

    One z is drawn per reverse index n and reused across levels (redrawn
    per level when ``shared_z`` is False); the final step uses z = 0.
    When ``collect_steps`` is given, the finest level's state right after
    the reverse update at step n is recorded under key n.

    Returns the per-level x_0 states and the collected finest latents.
    """
    if not (len(noise) == len(conds) == len(schedules)):
        raise ValueError("noise, conds and schedules must have equal length")
    num_steps = schedules[0].num_steps
    xs = [np.asarray(x, dtype=np.float64).copy() for x in noise]
    wanted = set(int(s) for s in collect_steps) if collect_steps is not None else set()
    collected: dict[int, np.ndarray] = {}
    shape = xs[0].shape
    for n in range(num_steps, 0, -1):
        if n > 1:
            z = stream.standard_normal(size=shape)
        else:
            z = np.zeros(shape)
        for g in range(len(xs)):
            if not shared_z and n > 1 and g > 0:
                z = stream.standard_normal(size=shape)
            xs[g] = reverse_step(xs[g], n, conds[g], schedules[g], eps_model, z)
        if n in wanted:
            collected[n] = xs[0].copy()
    for g, x in enumerate(xs):
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite sample produced for level {g}")
    return xs, collected
