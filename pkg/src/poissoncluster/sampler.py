"""Samplers for Poisson configurations and Poisson cluster configurations.

The cluster sampler follows the projection construction: draw centres
from a Poisson process, attach an independent cluster to each, shift it
by its centre, and keep the clusters that put a point in the target
window K. Centres are drawn on K inflated by the truncation radius; the
probability mass lost by that truncation is recorded in the metadata.

Counts use numpy's Poisson generator. Every function takes an explicit
random generator (or seed), so identical seeds give identical output.
"""

from __future__ import annotations

import numpy as np

from .configspace import ClusterVector, Configuration, LiftedBatch, LiftedConfiguration, Window
from .errors import DivergenceError, DivergenceReport
from .measures import ClusterProcessModel, IntensityModel
from .stats import make_rng


def _checked_mass(lam: IntensityModel, window: Window, limit: float = 1e7) -> float:
    m = lam.mass(window)
    if not np.isfinite(m) or m > limit:
        raise DivergenceError(DivergenceReport("intensity mass of the sampling window", [], [float(m)],
                                               f"lambda(window) = {m:.3g}"))
    return float(m)


def sample_poisson_batch(lam: IntensityModel, window: Window, n_draws: int, rng=None):
    """Many independent Poisson configurations on one window.

    Returns:
        (points, draw_index): all points stacked, and which draw each belongs to.
    """
    rng = make_rng(rng)
    mass = _checked_mass(lam, window)
    counts = rng.poisson(mass, n_draws) if mass > 0 else np.zeros(n_draws, dtype=np.int64)
    pts = lam.sample(window, int(counts.sum()), rng)
    return pts, np.repeat(np.arange(n_draws), counts)


def sample_poisson(lam: IntensityModel, window: Window, rng=None) -> Configuration:
    """One Poisson configuration: N ~ Poisson(lambda(window)), then N i.i.d. points."""
    pts, _ = sample_poisson_batch(lam, window, 1, rng)
    return Configuration.from_points(pts, window)


def sample_marked(model: ClusterProcessModel, window: Window, rng=None) -> list:
    """Centres on ``window`` each paired with its shifted cluster."""
    rng = make_rng(rng)
    centres = sample_poisson(model.lam, window, rng).expanded()
    sizes = model.eta.sample_sizes(centres.shape[0], rng)
    offsets = model.eta.sample_offsets(sizes, rng)
    parts = np.split(offsets, np.cumsum(sizes)[:-1]) if sizes.size else []
    return [(c, ClusterVector(y + c, model.dim)) for c, y in zip(centres, parts)]


def sample_lifted_batch(model: ClusterProcessModel, K: Window, n_draws: int, rng=None) -> LiftedBatch:
    """Clusters hitting K for ``n_draws`` independent realizations.

    Centres are drawn on K inflated by ``model.r_trunc``; clusters without
    a point in K are dropped, as are empty clusters.
    """
    rng = make_rng(rng)
    W = model.enlarged(K)
    mass = model.centre_mass(K)
    counts = rng.poisson(mass, n_draws) if mass > 0 else np.zeros(n_draws, dtype=np.int64)
    total = int(counts.sum())
    centres = model.lam.sample(W, total, rng)
    draw = np.repeat(np.arange(n_draws), counts)
    sizes = model.eta.sample_sizes(total, rng)
    owner = np.repeat(np.arange(total), sizes)
    points = model.eta.sample_offsets(sizes, rng) + centres[owner]
    hit = np.bincount(owner, weights=K.contains(points), minlength=total) > 0
    keep_point = hit[owner]
    new_index = np.cumsum(hit) - 1
    meta = {
        "window": K.as_dict(),
        "centre_window": W.as_dict(),
        "r_trunc": model.r_trunc,
        "eps_trunc": model.eps_trunc,
        # expected number of K-hitting clusters whose centre lies outside the sampled region
        "truncation_bias_bound": model.eps_trunc * mass,
    }
    return LiftedBatch(points[keep_point], new_index[owner[keep_point]], draw[hit], sizes[hit], n_draws,
                       centres[hit], meta)


def sample_lifted(model: ClusterProcessModel, K: Window, rng=None) -> LiftedConfiguration:
    return sample_lifted_batch(model, K, 1, rng).lifted(0)


def sample_mucl(model: ClusterProcessModel, K: Window, rng=None) -> Configuration:
    """One Poisson cluster configuration restricted to K."""
    return sample_lifted_batch(model, K, 1, rng).projected(0, K)


def sample_mucl_batch(model: ClusterProcessModel, K: Window, n_draws: int, rng=None):
    """Projected points inside K for many draws: ``(points, draw_index)``."""
    batch = sample_lifted_batch(model, K, n_draws, rng)
    inside = K.contains(batch.points)
    return batch.points[inside], batch.draw_of_point[inside]


def counts_in(draw_index, n_draws: int, points=None, B: Window | None = None) -> np.ndarray:
    """Per-draw point counts, optionally restricted to a sub-window B."""
    draw_index = np.asarray(draw_index)
    if B is not None:
        draw_index = draw_index[B.contains(points)]
    return np.bincount(draw_index, minlength=n_draws)
