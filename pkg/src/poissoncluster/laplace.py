"""Laplace functionals ``L[f] = E exp(-<f, gamma>)`` in closed form and
from samples.

For a Poisson process with intensity lambda,
``L[f] = exp(-integral (1 - exp(-f)) d lambda)``. For the Poisson cluster
process, the integrand becomes ``E_eta[1 - exp(-sum_i f(y_i + x))]``
integrated over centres x. That expectation is estimated with a common
batch of cluster draws; for each drawn cluster the centre integral is
computed by Gauss-Legendre quadrature on the cells cut out by the shifted
support boxes, so the only error left is Monte Carlo error over clusters.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import integrate

from .configspace import Configuration, Window
from .measures import ClusterProcessModel, IntensityModel
from .stats import Estimate, make_rng, mean_se
from .testfunctions import Plateau, SmoothTestFunction


def support_window(f: SmoothTestFunction) -> Window:
    lo, hi = f.support()
    return Window(lo, hi)


def _require_nonnegative(f: SmoothTestFunction):
    if not f.is_nonnegative():
        raise ValueError("Laplace functionals here need a nonnegative test function")


def _panel_rule(lo, hi, panels: int, nodes: int):
    """Composite Gauss-Legendre nodes/weights on a box."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    axes, wts = [], []
    for a, b in zip(lo, hi):
        edges = np.linspace(a, b, panels + 1)
        h = np.diff(edges)
        axes.append((edges[:-1, None] + 0.5 * h[:, None] * (t + 1)).ravel())
        wts.append((0.5 * h[:, None] * w).ravel())
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    W = np.prod(np.stack(np.meshgrid(*wts, indexing="ij"), axis=-1).reshape(-1, len(lo)), axis=1)
    return X, W


def integrate_over_support(lam: IntensityModel, g, lo, hi) -> float:
    """``integral of g d lambda`` over the box [lo, hi] for smooth g."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        return 0.0
    if lo.size == 1:
        val, _ = integrate.quad(lambda x: float(g(np.array([[x]]))[0] * lam.density(np.array([[x]]))[0]),
                                lo[0], hi[0], epsabs=1e-13, epsrel=1e-11, limit=400)
        return float(val)
    X, W = _panel_rule(lo, hi, 8, 16)
    return float(W @ (g(X) * lam.density(X)))


def laplace_poisson_closed(lam: IntensityModel, f: SmoothTestFunction) -> float:
    """``exp(-integral (1 - exp(-f)) d lambda)``."""
    _require_nonnegative(f)
    lo, hi = f.support()
    return float(np.exp(-integrate_over_support(lam, lambda X: -np.expm1(-f.value(X)), lo, hi)))


def indicator_bracket(lam: IntensityModel, f: Plateau) -> tuple[float, float]:
    """Poisson Laplace values of the exact indicators that sandwich a plateau.

    ``a 1_[lower - width, upper + width] >= f >= a 1_[lower, upper]``, so the
    Laplace functional of f lies between the two returned values.
    """
    c = -np.expm1(-f.amplitude)
    outer = np.exp(-c * lam.box_mass(f.lower - f.width, f.upper + f.width))
    inner = np.exp(-c * lam.box_mass(f.lower, f.upper))
    return float(outer), float(inner)


def _cell_integrals(model: ClusterProcessModel, f: SmoothTestFunction, Y: np.ndarray, nodes: int) -> np.ndarray:
    """For each cluster in the (m, n, d) stack, integral over centres x of
    ``1 - exp(-sum_i f(y_i + x))`` against lambda."""
    m, n, d = Y.shape
    S_lo, S_hi = f.support()
    lo = S_lo - Y
    hi = S_hi - Y
    J = 2 * n - 1
    edges = np.sort(np.concatenate([lo, hi], axis=1), axis=1)
    grids = np.meshgrid(*[np.arange(J)] * d, indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    ax = np.arange(d)
    c_lo = edges[:, idx, ax]  # (m, C, d)
    c_hi = edges[:, idx + 1, ax]
    t, w = np.polynomial.legendre.leggauss(nodes)
    tg = np.stack(np.meshgrid(*[t] * d, indexing="ij"), axis=-1).reshape(-1, d)  # (Q, d)
    wg = np.prod(np.stack(np.meshgrid(*[w] * d, indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    half = 0.5 * (c_hi - c_lo)
    X = c_lo[:, :, None, :] + half[:, :, None, :] * (tg + 1.0)  # (m, C, Q, d)
    vol = np.prod(half, axis=-1)  # (m, C)
    P = X[:, :, :, None, :] + Y[:, None, None, :, :]  # (m, C, Q, n, d)
    fsum = f.value(P.reshape(-1, d)).reshape(m, -1, wg.size, n).sum(axis=3)
    dens = model.lam.density(X.reshape(-1, d)).reshape(m, -1, wg.size)
    vals = -np.expm1(-fsum) * dens
    return np.einsum("mcq,q,mc->m", vals, wg, vol)


def laplace_mucl_closed(model: ClusterProcessModel, f: SmoothTestFunction, clusters: int | None = None,
                        nodes: int | None = None, rng=None) -> Estimate:
    """Cluster-process Laplace functional with Monte Carlo SE over cluster draws.

    Args:
        clusters: number of cluster draws (default ``model.laplace_clusters``).
        nodes: Gauss-Legendre nodes per axis on each centre cell
            (default ``model.laplace_nodes``).
    """
    _require_nonnegative(f)
    rng = make_rng(rng)
    M = model.laplace_clusters if clusters is None else clusters
    q = model.laplace_nodes if nodes is None else nodes
    model.centre_mass(support_window(f))  # raises on a divergent centre region
    sizes = model.eta.sample_sizes(M, rng)
    offsets = model.eta.sample_offsets(sizes, rng)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
    Z = np.zeros(M)
    for n in np.unique(sizes):
        if n == 0:
            continue
        rows = np.flatnonzero(sizes == n)
        Y = offsets[starts[rows][:, None] + np.arange(n)]
        chunk = max(1, 2_000_000 // (n * (2 * n - 1) ** model.dim * q**model.dim))
        for a in range(0, rows.size, chunk):
            Z[rows[a : a + chunk]] = _cell_integrals(model, f, Y[a : a + chunk], q)
    inner = mean_se(Z)
    value = float(np.exp(-inner.value))
    return Estimate(value, value * inner.se)


def laplace_mucl_lifted(model: ClusterProcessModel, f: SmoothTestFunction, N: int, rng=None) -> Estimate:
    """The same functional written over cluster vectors,
    ``exp(-integral (1 - exp(-sum f)) d lambda*)``, by plain Monte Carlo over
    centres (drawn from lambda on the support inflated by r_trunc) and clusters."""
    _require_nonnegative(f)
    rng = make_rng(rng)
    W = model.enlarged(support_window(f))
    mass = model.centre_mass(support_window(f))
    x = model.lam.sample(W, N, rng)
    sizes = model.eta.sample_sizes(N, rng)
    owner = np.repeat(np.arange(N), sizes)
    pts = model.eta.sample_offsets(sizes, rng) + x[owner]
    fsum = np.bincount(owner, weights=f.value(pts), minlength=N)
    inner = mean_se(-np.expm1(-fsum))
    value = float(np.exp(-mass * inner.value))
    return Estimate(value, value * mass * inner.se)


def laplace_empirical(samples: Sequence[Configuration], f: SmoothTestFunction) -> Estimate:
    """Sample mean of ``exp(-<f, gamma>)``; each window must cover supp f."""
    samples = list(samples)
    if not samples:
        return Estimate(1.0, 0.0)
    lo, hi = f.support()
    vals = np.empty(len(samples))
    for i, g in enumerate(samples):
        if not g.window.covers(lo, hi):
            raise ValueError("observation window does not cover the support of f")
        vals[i] = np.exp(-np.dot(g.multiplicities, f.value(g.atoms))) if g.n_atoms else 1.0
    return mean_se(vals)


def laplace_empirical_batch(points, draw_index, n_draws: int, f: SmoothTestFunction,
                            window: Window | None = None) -> Estimate:
    """Vectorized ``laplace_empirical`` for stacked sample points."""
    if window is not None:
        lo, hi = f.support()
        if not window.covers(lo, hi):
            raise ValueError("observation window does not cover the support of f")
    points = np.asarray(points, dtype=float)
    pair = np.bincount(draw_index, weights=f.value(points) if points.size else None, minlength=n_draws)
    return mean_se(np.exp(-pair))
