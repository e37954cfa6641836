"""Deterministic, splittable random streams.

Streams are derived from a base seed plus a stream index through numpy's
SeedSequence, so adding a consumer (for example one more granularity
level) never shifts the draws seen by existing consumers.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream index)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.default_rng(ss)


def rng_normal(stream: np.random.Generator, shape) -> Tensor:
    """Standard-normal leaf tensor drawn from ``stream``."""
    return Tensor(stream.standard_normal(size=shape))
