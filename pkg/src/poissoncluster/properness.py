"""Droplet sets, local-finiteness and simplicity checks, and the
probability generating functional of cluster counts.

The droplet of a cluster ``y`` over a window B is the set of centre
positions x for which the shifted cluster ``y + x`` puts at least one
point in B, i.e. the union of the boxes ``B - y_i``. Its layer ``l``
collects the centres for which exactly ``l`` points land in B.

Layers are computed exactly: the box edges split space into cells on
which the layer count is constant, and each cell's lambda-mass comes from
the intensity's box masses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .configspace import ClusterVector, Configuration, LiftedBatch, LiftedConfiguration, Window, count
from .errors import DivergenceError, DivergenceReport
from .measures import ClusterProcessModel, doubling_integral, _gauss_legendre_box
from .stats import Estimate, make_rng, mean_se

_CHUNK_ELEMENTS = 4_000_000


@dataclass(eq=False)
class DropletSet:
    """``D_B(y) = union over points y_i of (B - y_i)``."""

    base: Window
    cluster: ClusterVector

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.base.dim)
        if self.cluster.size == 0:
            return np.zeros(x.shape[0], dtype=bool)
        shifted = x[:, None, :] + self.cluster.points[None, :, :]
        inside = np.all((shifted >= self.base.lower) & (shifted <= self.base.upper), axis=2)
        return np.any(inside, axis=1)

    def layer(self, x) -> np.ndarray:
        """Number of cluster points landing in B for each centre x."""
        x = np.asarray(x, dtype=float).reshape(-1, self.base.dim)
        shifted = x[:, None, :] + self.cluster.points[None, :, :]
        return np.sum(np.all((shifted >= self.base.lower) & (shifted <= self.base.upper), axis=2), axis=1)

    def bounding_box(self) -> Window:
        p = self.cluster.points
        return Window(self.base.lower - p.max(axis=0), self.base.upper - p.min(axis=0))


def _layers_fixed_size(lam, B: Window, Y: np.ndarray) -> np.ndarray:
    """Layer masses for an (m, n, d) stack of clusters; returns (m, n + 1)."""
    m, n, d = Y.shape
    lo = B.lower - Y  # (m, n, d) boxes B - y_i
    hi = B.upper - Y
    J = 2 * n - 1
    edges = np.sort(np.concatenate([lo, hi], axis=1), axis=1)  # (m, 2n, d)
    mid = 0.5 * (edges[:, 1:, :] + edges[:, :-1, :])  # (m, J, d)
    # cover[k]: (m, n, J) whether box i covers cell j along axis k
    cover = [(lo[:, :, None, k] <= mid[:, None, :, k]) & (mid[:, None, :, k] <= hi[:, :, None, k]) for k in range(d)]
    counts = cover[0]
    for k in range(1, d):
        counts = counts[..., None] & cover[k].reshape((m, n) + (1,) * k + (J,))
    counts = counts.reshape(m, n, -1).sum(axis=1)  # (m, J^d)
    grids = np.meshgrid(*[np.arange(J)] * d, indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)  # (J^d, d)
    ax = np.arange(d)
    cell_lo = edges[:, idx, ax]
    cell_hi = edges[:, idx + 1, ax]
    mass = lam.box_mass(cell_lo, cell_hi)  # (m, J^d)
    flat = (np.arange(m)[:, None] * (n + 1) + counts).ravel()
    return np.bincount(flat, weights=mass.ravel(), minlength=m * (n + 1)).reshape(m, n + 1)


def droplet_layers_batch(model: ClusterProcessModel, B: Window, offsets, sizes) -> np.ndarray:
    """Layer masses for many clusters at once.

    Args:
        offsets: flat (sum(sizes), d) cluster points, cluster by cluster.
        sizes: cluster sizes.

    Returns:
        (m, n_max + 1) array; column l is lambda of the l-th layer (column 0
        is unused and set to 0).
    """
    sizes = np.asarray(sizes, dtype=np.intp)
    offsets = np.asarray(offsets, dtype=float).reshape(-1, model.dim)
    m = sizes.size
    width = max(int(sizes.max()) if m else 0, model.eta.n_max) + 1
    out = np.zeros((m, width))
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
    for n in np.unique(sizes):
        if n == 0:
            continue
        rows = np.flatnonzero(sizes == n)
        Y = offsets[starts[rows][:, None] + np.arange(n)]
        chunk = max(1, _CHUNK_ELEMENTS // (n * (2 * n - 1) ** model.dim))
        for a in range(0, rows.size, chunk):
            L = _layers_fixed_size(model.lam, B, Y[a : a + chunk])
            out[rows[a : a + chunk], : n + 1] = L
    out[:, 0] = 0.0
    if not np.all(np.isfinite(out)):
        raise DivergenceError(DivergenceReport("droplet measure", [], [], "infinite lambda-mass on a bounded box"))
    return out


def droplet_measure_batch(model: ClusterProcessModel, B: Window, offsets, sizes) -> np.ndarray:
    return droplet_layers_batch(model, B, offsets, sizes).sum(axis=1)


def _single(ybar, dim):
    return ybar if isinstance(ybar, ClusterVector) else ClusterVector(ybar, dim)


def droplet_measure(model: ClusterProcessModel, B: Window, ybar) -> float:
    """lambda(D_B(y)), exact for any intensity with box masses."""
    y = _single(ybar, model.dim)
    if y.size == 0:
        return 0.0
    return float(_layers_fixed_size(model.lam, B, y.points[None])[0, 1:].sum())


def droplet_layer_measure(model: ClusterProcessModel, B: Window, ybar, layer: int) -> float:
    """lambda of the centres for which exactly ``layer`` points of y + x lie in B."""
    if layer < 1:
        raise ValueError("layer index must be positive")
    y = _single(ybar, model.dim)
    if layer > y.size:
        return 0.0
    return float(_layers_fixed_size(model.lam, B, y.points[None])[0, layer])


def mean_droplet_fubini(model: ClusterProcessModel, K: Window, extent: float, nodes: int = 64) -> float:
    """``integral over x in K inflated by extent of P(y + x hits K) lambda(dx)``.

    Exact hit probabilities are used when the law provides them; other laws
    fall back to a fixed batch of 4096 cluster draws.
    """
    lo, hi = K.lower - extent, K.upper + extent
    eta = model.eta
    probe = eta.hit_probability(K.lower, K.upper)
    if probe is None:
        rng = np.random.default_rng(0)
        sizes = eta.sample_sizes(4096, rng)
        offsets = eta.sample_offsets(sizes, rng)
        owner = np.repeat(np.arange(sizes.size), sizes)

        def hit(X):
            out = np.empty(X.shape[0])
            for j, x in enumerate(X):
                inside = K.contains(offsets + x)
                out[j] = np.bincount(owner, weights=inside, minlength=sizes.size).astype(bool).mean()
            return out
    else:
        def hit(X):
            return eta.hit_probability(K.lower - X, K.upper - X)

    if model.dim == 1:
        def g(x):
            X = np.array([[x]])
            with np.errstate(over="ignore", invalid="ignore"):
                return float(model.lam.density(X)[0] * hit(X)[0])

        pts = [float(K.lower[0]), float(K.upper[0])]
        total = 0.0
        for a, b in zip([lo[0]] + pts, pts + [hi[0]]):
            if b > a:
                v, _ = integrate.quad(g, a, b, limit=400, epsabs=1e-13, epsrel=1e-10)
                total += v
        return float(total)
    X, W = _gauss_legendre_box(lo, hi, nodes)
    return float(W @ (model.lam.density(X) * hit(X)))


def mean_droplet_mass(model: ClusterProcessModel, K: Window, N: int, rng=None) -> Estimate:
    """Monte Carlo mean of lambda(D_K(y)) over cluster draws.

    Models whose intensity is not translation-bounded are first screened by
    the doubling detector on the centre-space form of the same mean; a
    divergent verdict raises ``DivergenceError``.
    """
    if N < 1:
        raise ValueError("N must be positive")
    if not np.isfinite(model.lam.sup_translate_mass(K)) and not model.eta.points.bounded_support:
        L0 = 1.0 + float(np.max(K.upper - K.lower))
        doubling_integral(lambda L: mean_droplet_fubini(model, K, L), L0, "mean droplet mass",
                          max_doublings=12, rel_tol=1e-6)
    rng = make_rng(rng)
    sizes = model.eta.sample_sizes(N, rng)
    offsets = model.eta.sample_offsets(sizes, rng)
    return mean_se(droplet_measure_batch(model, K, offsets, sizes))


class SufficientReport(NamedTuple):
    C_K: float
    mean_size: float
    verdicts: dict

    def as_dict(self):
        return {"C_K": self.C_K, "mean_size": self.mean_size, "verdicts": dict(self.verdicts)}


def check_sufficient(model: ClusterProcessModel, K: Window) -> SufficientReport:
    """Metadata-driven sufficient conditions for local finiteness and simplicity.

    Verdicts are "pass", "fail" or "unknown"; "unknown" means the sufficient
    condition does not apply, not that the property fails.

      - ``translation_bounded``: ``C_K = sup_x lambda(K + x)`` finite with finite mean cluster size.
      - ``bounded_clusters``: cluster offsets have bounded support.
      - ``non_atomic``: the intensity has no atoms.
      - ``no_fixed_points``: the offset law puts no mass on fixed locations.
      - ``simple_clusters``: points within a cluster are a.s. distinct.
    """
    C_K = float(model.lam.sup_translate_mass(K))
    pts = model.eta.points
    v = {}
    v["translation_bounded"] = "pass" if np.isfinite(C_K) and np.isfinite(model.eta.mean_size) else "fail"
    v["bounded_clusters"] = "pass" if pts.bounded_support else "unknown"
    v["non_atomic"] = "pass" if model.lam.non_atomic else "fail"
    v["no_fixed_points"] = "unknown" if pts.has_fixed_points else "pass"
    if pts.absolutely_continuous:
        v["simple_clusters"] = "pass"
    else:
        rows = getattr(pts, "offsets", np.zeros((0, model.dim)))
        dup = any(len(np.unique(rows[:n], axis=0)) < n for n in model.eta.sizes_present())
        v["simple_clusters"] = "fail" if dup else "pass"
    return SufficientReport(C_K, model.eta.mean_size, v)


def pgf_closed(model: ClusterProcessModel, K: Window, q: float, N: int, rng=None) -> Estimate:
    """``exp(-E_eta sum_l (1 - q^l) lambda(D_K^l(y)))`` with delta-method SE."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    rng = make_rng(rng)
    sizes = model.eta.sample_sizes(N, rng)
    offsets = model.eta.sample_offsets(sizes, rng)
    layers = droplet_layers_batch(model, K, offsets, sizes)
    weights = 1.0 - q ** np.arange(layers.shape[1])
    inner = mean_se(layers @ weights)
    value = float(np.exp(-inner.value))
    return Estimate(value, value * inner.se)


def pgf_empirical(samples, K: Window, q: float) -> Estimate:
    """Mean of ``q^count(gamma, K)`` over configurations (or raw count arrays)."""
    if isinstance(samples, np.ndarray):
        counts = samples
    else:
        samples = list(samples)
        if not samples:
            return Estimate(1.0, 0.0)
        counts = np.array([count(g, K) for g in samples])
    if counts.size == 0:
        return Estimate(1.0, 0.0)
    if q == 1:
        return Estimate(1.0, 0.0)
    return mean_se(np.power(float(q), counts))


@dataclass
class SimplicityReport:
    max_multiplicity: int
    offending_pairs: list = field(default_factory=list)

    @property
    def simple(self) -> bool:
        return self.max_multiplicity <= 1


def simplicity_scan(samples, tolerance: float = 1e-12, max_pairs: int = 100) -> SimplicityReport:
    """Look for points closer than ``tolerance`` within the same draw.

    Accepts a ``LiftedBatch`` or a sequence of lifted configurations; all
    cluster coordinates are scanned, within and across clusters.
    """
    if isinstance(samples, LiftedBatch):
        pts, draw = samples.points, samples.draw_of_point
    else:
        samples = list(samples)
        if not samples:
            return SimplicityReport(0)
        parts = [g.flat()[0] if isinstance(g, LiftedConfiguration) else np.asarray(g).reshape(-1, samples[0].dim)
                 for g in samples]
        pts = np.concatenate(parts) if parts else np.zeros((0, 1))
        draw = np.repeat(np.arange(len(parts)), [p.shape[0] for p in parts])
    if pts.shape[0] == 0:
        return SimplicityReport(0)
    pairs = cKDTree(pts).query_pairs(tolerance, output_type="ndarray")
    pairs = pairs[draw[pairs[:, 0]] == draw[pairs[:, 1]]] if pairs.size else pairs
    if pairs.size == 0:
        return SimplicityReport(1)
    n = pts.shape[0]
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    mult = int(np.bincount(labels).max())
    offending = [(int(draw[i]), pts[i].tolist(), pts[j].tolist()) for i, j in pairs[:max_pairs]]
    return SimplicityReport(mult, offending)
