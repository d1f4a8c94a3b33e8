"""Small Monte Carlo helpers shared by the estimators."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Estimate(NamedTuple):
    """A Monte Carlo estimate with its standard error."""

    value: float
    se: float


def mean_se(samples) -> Estimate:
    """Sample mean and its standard error (ddof=1)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        return Estimate(float("nan"), float("nan"))
    if x.size == 1:
        return Estimate(float(x[0]), 0.0)
    return Estimate(float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size)))


def within(a: float, b: float, se: float, k: float = 3.0) -> bool:
    """True when |a - b| <= k * se (an exact tie passes even at se = 0)."""
    return bool(abs(a - b) <= k * se)


def make_rng(seed=None) -> np.random.Generator:
    """Normalize ``seed`` (int, SeedSequence, Generator or None) to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Independent child streams, reproducible given the parent state."""
    return rng.spawn(n)
