"""Dataset CSV ingestion and synthetic series generation.

File schema: header ``timestamp,dim_0,...,dim_{D-1}``, one row per
finest-grain tick, timestamps either integer ticks or ISO-8601 with
uniform spacing, no missing cells. Floats are written with ``repr`` so a
round trip is bit-exact and files are deterministic per seed.
"""
from __future__ import annotations

import datetime as _dt
from pathlib import Path

import numpy as np

from .rng import rng_stream

SYNTHETIC_KINDS = ("sinusoid-mixture", "static-gaussian", "trend-plus-noise")


class DataError(ValueError):
    """Raised on malformed dataset files; messages carry line numbers."""


def _parse_timestamp(cell: str, lineno: int):
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return _dt.datetime.fromisoformat(cell)
    except ValueError:
        raise DataError(
            f"line {lineno}: timestamp {cell!r} is neither an integer tick "
            "nor ISO-8601"
        ) from None


def load_dataset(path) -> tuple[np.ndarray, list[str]]:
    """Read a dataset CSV, returning ([T, D] float64 values, timestamps)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError("line 1: empty file")
    header = lines[0].split(",")
    if header[0] != "timestamp" or len(header) < 2:
        raise DataError("line 1: header must be 'timestamp,dim_0,...'")
    dim = len(header) - 1
    for i, name in enumerate(header[1:]):
        if name != f"dim_{i}":
            raise DataError(f"line 1: expected column 'dim_{i}', got {name!r}")
    values = np.empty((len(lines) - 1, dim))
    stamps: list = []
    for row_idx, line in enumerate(lines[1:]):
        lineno = row_idx + 2
        cells = line.split(",")
        if len(cells) != dim + 1:
            raise DataError(
                f"line {lineno}: expected {dim + 1} cells, got {len(cells)}"
            )
        if any(c.strip() == "" for c in cells):
            raise DataError(f"line {lineno}: missing cell")
        stamps.append(_parse_timestamp(cells[0], lineno))
        for j, cell in enumerate(cells[1:]):
            try:
                values[row_idx, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"line {lineno}: non-numeric value {cell!r} in column dim_{j}"
                ) from None
    if len(stamps) == 0:
        raise DataError("line 2: dataset has no rows")
    kinds = {type(s) for s in stamps}
    if len(kinds) > 1:
        raise DataError("line 2: mixed integer and ISO-8601 timestamps")
    if len(stamps) >= 2:
        deltas = [b - a for a, b in zip(stamps, stamps[1:])]
        if any(d != deltas[0] for d in deltas[1:]):
            bad = next(i for i, d in enumerate(deltas) if d != deltas[0])
            raise DataError(f"line {bad + 3}: non-uniform tick spacing")
        if isinstance(deltas[0], int) and deltas[0] <= 0:
            raise DataError("line 3: non-increasing integer timestamps")
    return values, [str(s) for s in stamps]


def save_dataset(path, values: np.ndarray, timestamps=None) -> None:
    """Write values with the dataset schema; default timestamps are 0..T-1."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    T, D = values.shape
    if timestamps is None:
        timestamps = range(T)
    timestamps = list(timestamps)
    if len(timestamps) != T:
        raise ValueError(f"{len(timestamps)} timestamps for {T} rows")
    header = "timestamp," + ",".join(f"dim_{i}" for i in range(D))
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for t in range(T):
            row = ",".join(repr(float(v)) for v in values[t])
            fh.write(f"{timestamps[t]},{row}\n")


def generate_synthetic(
    kind: str,
    length: int,
    dim: int,
    seed: int,
    noise: float | None = None,
    mu=None,
    sigma=None,
) -> np.ndarray:
    """Deterministic synthetic series of one of the supported kinds.

    sinusoid-mixture: per-dimension tones with 24- and 12-tick periods plus
    Gaussian noise, so 4- and 12-tick coarse levels carry real structure.
    static-gaussian: i.i.d. N(mu_d, sigma_d^2) rows.
    trend-plus-noise: linear drift per dimension plus Gaussian noise.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if length < 1 or dim < 1:
        raise ValueError("length and dim must be >= 1")
    stream = rng_stream(seed, 0)
    t = np.arange(length, dtype=np.float64)
    if kind == "sinusoid-mixture":
        amp = 0.35 if noise is None else float(noise)
        a1 = stream.uniform(0.7, 1.3, size=dim)
        a2 = stream.uniform(0.7, 1.3, size=dim)
        phi = stream.uniform(0.0, 2.0 * np.pi, size=dim)
        psi = stream.uniform(0.0, 2.0 * np.pi, size=dim)
        base = a1 * np.sin(2.0 * np.pi * t[:, None] / 24.0 + phi) + a2 * np.sin(
            2.0 * np.pi * t[:, None] / 12.0 + psi
        )
        return base + amp * stream.standard_normal((length, dim))
    if kind == "static-gaussian":
        mu = np.linspace(1.0, 2.5, dim) if mu is None else np.broadcast_to(
            np.asarray(mu, dtype=np.float64), (dim,)
        )
        sigma = (
            np.full(dim, 0.25)
            if sigma is None
            else np.broadcast_to(np.asarray(sigma, dtype=np.float64), (dim,))
        )
        return mu + sigma * stream.standard_normal((length, dim))
    # trend-plus-noise
    amp = 0.1 if noise is None else float(noise)
    base = stream.uniform(-1.0, 1.0, size=dim)
    slope = stream.uniform(-2.0, 2.0, size=dim)
    return base + slope * (t[:, None] / length) + amp * stream.standard_normal(
        (length, dim)
    )

STATIC_GAUSSIAN_DEFAULT_MU = lambda dim: np.linspace(1.0, 2.5, dim)
STATIC_GAUSSIAN_DEFAULT_SIGMA = lambda dim: np.full(dim, 0.25)
