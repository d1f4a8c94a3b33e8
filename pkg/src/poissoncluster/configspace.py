"""Points, cluster vectors, configurations and the maps between them.

A cluster vector is an ordered tuple of points (one cluster). A lifted
configuration is a finite collection of cluster vectors; projecting it
unpacks every cluster into a point configuration with multiplicities.

Besides the per-object types there is ``LiftedBatch``, a flat array
representation of many lifted configurations at once. Monte Carlo code
works on batches; the object types are for the single-sample API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .testfunctions import CylinderFunction, SmoothTestFunction

DEFAULT_MERGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Window:
    """Axis-aligned box ``[lower, upper]``; infinite bounds are allowed."""

    lower: np.ndarray
    upper: np.ndarray
    merge_tol: float = DEFAULT_MERGE_TOL

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("window bounds must be vectors of equal length")
        if not np.all(lo <= hi):
            raise ValueError("window needs lower <= upper")
        if not self.merge_tol > 0:
            raise ValueError("merge tolerance must be positive")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def everywhere(cls, dim: int) -> "Window":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @classmethod
    def around(cls, points, pad: float = 0.0) -> "Window":
        p = np.atleast_2d(points)
        return cls(p.min(axis=0) - pad, p.max(axis=0) + pad)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.all((p >= self.lower) & (p <= self.upper), axis=1)

    def inflate(self, r) -> "Window":
        return Window(self.lower - r, self.upper + r, self.merge_tol)

    def hull(self, other: "Window") -> "Window":
        return Window(np.minimum(self.lower, other.lower), np.maximum(self.upper, other.upper), self.merge_tol)

    def covers(self, lower, upper) -> bool:
        return bool(np.all(self.lower <= lower) and np.all(self.upper >= upper))

    def as_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


class ClusterVector:
    """Ordered tuple of ``n >= 0`` points in R^d, stored as an (n, d) array."""

    __slots__ = ("points",)

    def __init__(self, points, dim: int | None = None):
        p = np.asarray(points, dtype=float)
        if p.size == 0:
            if dim is None:
                dim = p.shape[-1] if p.ndim == 2 else 1
            p = np.zeros((0, dim))
        elif p.ndim == 1:
            p = p.reshape(-1, 1) if dim in (None, 1) else p.reshape(-1, dim)
        if dim is not None and p.shape[1] != dim:
            raise ValueError(f"cluster points have dimension {p.shape[1]}, expected {dim}")
        if not np.all(np.isfinite(p)):
            raise ValueError("cluster points must be finite")
        p = p.copy()
        p.setflags(write=False)
        self.points = p

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, ClusterVector) and np.array_equal(self.points, other.points)

    def __repr__(self):
        return f"ClusterVector({self.points.tolist()})"


class Configuration:
    """Finite multiset of points observed in a window.

    Atoms closer than the window's merge tolerance are merged into one
    atom carrying the summed multiplicity.
    """

    __slots__ = ("atoms", "multiplicities", "window")

    def __init__(self, atoms, multiplicities, window: Window):
        a = np.asarray(atoms, dtype=float).reshape(-1, window.dim)
        m = np.asarray(multiplicities, dtype=np.int64).reshape(-1)
        if a.shape[0] != m.size:
            raise ValueError("one multiplicity per atom required")
        if np.any(m < 1):
            raise ValueError("multiplicities must be positive")
        a.setflags(write=False)
        m.setflags(write=False)
        self.atoms, self.multiplicities, self.window = a, m, window

    @classmethod
    def from_points(cls, points, window: Window, multiplicities=None) -> "Configuration":
        """Merge a raw point list (with optional weights) into atoms."""
        p = np.asarray(points, dtype=float).reshape(-1, window.dim)
        w = np.ones(p.shape[0], dtype=np.int64) if multiplicities is None else np.asarray(multiplicities)
        atoms, mult = merge_points(p, w, window.merge_tol)
        return cls(atoms, mult, window)

    @classmethod
    def empty(cls, window: Window) -> "Configuration":
        return cls(np.zeros((0, window.dim)), np.zeros(0, dtype=np.int64), window)

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def total(self) -> int:
        return int(self.multiplicities.sum())

    def expanded(self) -> np.ndarray:
        """Points repeated according to multiplicity."""
        return np.repeat(self.atoms, self.multiplicities, axis=0)

    def as_dict(self) -> dict:
        return dict(zip(map(tuple, self.atoms.tolist()), self.multiplicities.tolist()))

    def __repr__(self):
        return f"Configuration({self.as_dict()})"


def merge_points(points: np.ndarray, weights: np.ndarray, tol: float):
    """Group points whose pairwise distance is below ``tol`` (transitively).

    Returns atom locations (weighted centroid of each group) and summed
    integer multiplicities, ordered by first occurrence.
    """
    n = points.shape[0]
    weights = np.asarray(weights, dtype=np.int64)
    if n <= 1:
        return points.copy(), weights.copy()
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if pairs.size == 0:
        return points.copy(), weights.copy()
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    group = rank[inverse]
    k = order.size
    mult = np.bincount(group, weights=weights, minlength=k).astype(np.int64)
    loc = np.stack([np.bincount(group, weights=weights * points[:, j], minlength=k) for j in range(points.shape[1])], axis=1)
    return loc / mult[:, None], mult


class LiftedConfiguration:
    """Finite collection of non-empty cluster vectors.

    Vacuous clusters are dropped on construction since they carry no
    points. ``metadata`` holds sampler notes such as the truncation radius.
    """

    __slots__ = ("clusters", "metadata", "dim")

    def __init__(self, clusters: Sequence[ClusterVector], dim: int | None = None, metadata: dict | None = None):
        cl = [c if isinstance(c, ClusterVector) else ClusterVector(c, dim) for c in clusters]
        if dim is None:
            dim = cl[0].dim if cl else 1
        if any(c.dim != dim for c in cl):
            raise ValueError("all clusters must share the dimension")
        self.clusters = tuple(c for c in cl if c.size > 0)
        self.dim = dim
        self.metadata = dict(metadata or {})

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """All points stacked, plus the cluster index of each point."""
        if not self.clusters:
            return np.zeros((0, self.dim)), np.zeros(0, dtype=np.intp)
        pts = np.concatenate([c.points for c in self.clusters])
        idx = np.repeat(np.arange(len(self.clusters)), [c.size for c in self.clusters])
        return pts, idx


def project_vector(xbar: ClusterVector, window: Window | None = None) -> Configuration:
    """Unpack one cluster into a configuration (duplicates become multiplicity)."""
    window = Window.everywhere(xbar.dim) if window is None else window
    return Configuration.from_points(xbar.points, window)


def project_lifted(gbar: LiftedConfiguration, window: Window | None = None) -> Configuration:
    """Multiset union of the projections of all clusters."""
    window = Window.everywhere(gbar.dim) if window is None else window
    pts, _ = gbar.flat()
    return Configuration.from_points(pts, window)


def pair(f: SmoothTestFunction, gamma: Configuration) -> float:
    """``<f, gamma>``: sum of multiplicity times f over atoms."""
    if gamma.n_atoms == 0:
        return 0.0
    return float(np.dot(gamma.multiplicities, f.value(gamma.atoms)))


def count(gamma: Configuration, B: Window) -> int:
    """Number of points of gamma in B, with multiplicity."""
    if gamma.n_atoms == 0:
        return 0
    return int(gamma.multiplicities[B.contains(gamma.atoms)].sum())


def shift_cluster(ybar: ClusterVector, x) -> ClusterVector:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != ybar.dim:
        raise ValueError(f"shift of dimension {x.size} applied to a cluster in dimension {ybar.dim}")
    return ClusterVector(ybar.points + x, ybar.dim)


def lift_diffeo(phi, xbar: ClusterVector) -> ClusterVector:
    """Apply a diffeomorphism to every coordinate of a cluster."""
    if xbar.size == 0:
        return xbar
    return ClusterVector(phi.value(xbar.points), xbar.dim)


def apply_diffeo_config(phi, gamma: Configuration) -> Configuration:
    if gamma.n_atoms == 0:
        return gamma
    return Configuration.from_points(phi.value(gamma.atoms), gamma.window, gamma.multiplicities)


def _pairings(F: CylinderFunction, gamma: Configuration) -> np.ndarray:
    return F.pairings(gamma.atoms, weights=gamma.multiplicities.astype(float))


def cylinder_eval(F: CylinderFunction, gamma: Configuration) -> float:
    return float(F.values(_pairings(F, gamma))[0])


def _atom_index(gamma: Configuration, x) -> int:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if gamma.n_atoms:
        dist = np.linalg.norm(gamma.atoms - x, axis=1)
        i = int(np.argmin(dist))
        if dist[i] <= gamma.window.merge_tol:
            return i
    raise ValueError(f"{x.tolist()} is not an atom of the configuration")


def cylinder_gradient(F: CylinderFunction, gamma: Configuration, x) -> np.ndarray:
    """Gradient of F when one copy of the atom at x is moved."""
    i = _atom_index(gamma, x)
    T = _pairings(F, gamma)
    return F.point_gradients(gamma.atoms[i : i + 1], T)[0]


def cylinder_laplacian(F: CylinderFunction, gamma: Configuration, x) -> float:
    i = _atom_index(gamma, x)
    T = _pairings(F, gamma)
    return float(F.point_laplacians(gamma.atoms[i : i + 1], T)[0])


@dataclass
class LiftedBatch:
    """Many lifted configurations stored as flat arrays.

    Attributes:
        points: (M, d) all cluster coordinates, grouped cluster by cluster.
        cluster_of_point: (M,) index into the cluster arrays.
        draw_of_cluster: (C,) which configuration each cluster belongs to.
        sizes: (C,) number of points of each cluster.
        n_draws: number of configurations.
        centres: (C, d) centre each cluster was attached to, if known.
        metadata: sampler notes (truncation radius, window, bias bound).
    """

    points: np.ndarray
    cluster_of_point: np.ndarray
    draw_of_cluster: np.ndarray
    sizes: np.ndarray
    n_draws: int
    centres: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_clusters(self) -> int:
        return self.sizes.size

    @property
    def draw_of_point(self) -> np.ndarray:
        return self.draw_of_cluster[self.cluster_of_point]

    def clusters_per_draw(self) -> np.ndarray:
        return np.bincount(self.draw_of_cluster, minlength=self.n_draws)

    def sum_per_draw(self, point_values) -> np.ndarray:
        """Sum a per-point quantity within each configuration."""
        return np.bincount(self.draw_of_point, weights=point_values, minlength=self.n_draws)

    def sum_per_cluster(self, point_values) -> np.ndarray:
        return np.bincount(self.cluster_of_point, weights=point_values, minlength=self.n_clusters)

    def with_points(self, points) -> "LiftedBatch":
        """Same cluster structure with moved coordinates."""
        return LiftedBatch(np.asarray(points, dtype=float), self.cluster_of_point, self.draw_of_cluster,
                           self.sizes, self.n_draws, self.centres, dict(self.metadata))

    def cluster_arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Clusters of size n as an (m, n, d) array, plus their cluster indices."""
        idx = np.flatnonzero(self.sizes == n)
        starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])[idx]
        sel = starts[:, None] + np.arange(n)
        return self.points[sel], idx

    def point_slots(self, n: int) -> np.ndarray:
        """Flat point indices of the size-n clusters, shape (m, n)."""
        idx = np.flatnonzero(self.sizes == n)
        starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])[idx]
        return starts[:, None] + np.arange(n)

    def lifted(self, i: int) -> LiftedConfiguration:
        clusters = np.flatnonzero(self.draw_of_cluster == i)
        mask = np.isin(self.cluster_of_point, clusters)
        pts, owner = self.points[mask], self.cluster_of_point[mask]
        groups = np.split(pts, np.flatnonzero(np.diff(owner)) + 1) if pts.size else []
        return LiftedConfiguration([ClusterVector(g, self.dim) for g in groups], self.dim, self.metadata)

    def projected(self, i: int, window: Window) -> Configuration:
        """Projection of draw i restricted to ``window``."""
        mask = self.draw_of_point == i
        pts = self.points[mask]
        return Configuration.from_points(pts[window.contains(pts)], window)

    @classmethod
    def from_lifted(cls, configs: Sequence[LiftedConfiguration], dim: int) -> "LiftedBatch":
        pts, cop, doc, sizes = [], [], [], []
        c = 0
        for i, g in enumerate(configs):
            for cl in g.clusters:
                pts.append(cl.points)
                cop.append(np.full(cl.size, c))
                doc.append(i)
                sizes.append(cl.size)
                c += 1
        if not pts:
            return cls(np.zeros((0, dim)), np.zeros(0, np.intp), np.zeros(0, np.intp), np.zeros(0, np.intp), len(configs))
        return cls(np.concatenate(pts), np.concatenate(cop), np.asarray(doc, np.intp),
                   np.asarray(sizes, np.intp), len(configs))
