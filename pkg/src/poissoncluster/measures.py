"""Intensity measures, cluster laws and the convolution intensity lambda*.

The convolution intensity of a cluster model with centre intensity
``lambda`` and cluster law ``eta`` lives on the space of cluster vectors.
On clusters of size n it has density ``p_n * s_n`` with

    s_n(y_1, ..., y_n) = integral of h_n(y_1 - x, ..., y_n - x) lambda(dx),

where ``h_n`` is the joint density of the in-cluster offsets. For the
Gaussian laws and Lebesgue intensity this integral has a closed form,
which doubles as the oracle for the quadrature path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize, special

from .configspace import ClusterVector, Window
from .errors import DivergenceError, DivergenceReport, ModelError
from .stats import Estimate, make_rng, mean_se

LOG_2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------- intensities


class IntensityModel:
    """Centre intensity lambda on R^d.

    Subclasses provide ``density``, ``box_mass`` (vectorized over boxes)
    and ``sample_box``.
    """

    dim: int
    translation_invariant: bool = False
    non_atomic: bool = True
    total_mass: float = np.inf

    def density(self, x) -> np.ndarray:
        raise NotImplementedError

    def box_mass(self, lo, hi) -> np.ndarray:
        raise NotImplementedError

    def sample_box(self, lo, hi, m: int, rng) -> np.ndarray:
        raise NotImplementedError

    def mass(self, window: Window) -> float:
        return float(self.box_mass(window.lower, window.upper))

    def sample(self, window: Window, m: int, rng) -> np.ndarray:
        """m i.i.d. points from lambda restricted to the window, normalized."""
        return self.sample_box(window.lower, window.upper, m, rng)

    def sup_translate_mass(self, window: Window) -> float:
        """``sup_x lambda(window + x)``; infinite when unbounded."""
        return np.inf

    def as_dict(self) -> dict:
        raise NotImplementedError


@dataclass(eq=False)
class Lebesgue(IntensityModel):
    """``scale`` times Lebesgue measure on R^d."""

    dim: int = 1
    scale: float = 1.0

    translation_invariant = True

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Lebesgue scale must be positive")

    def density(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return np.full(x.shape[0], self.scale)

    def box_mass(self, lo, hi):
        side = np.clip(np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float), 0.0, None)
        return self.scale * np.prod(side, axis=-1)

    def sample_box(self, lo, hi, m, rng):
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        return lo + (hi - lo) * rng.random((m, self.dim))

    def sup_translate_mass(self, window):
        return self.mass(window)

    def as_dict(self):
        return {"kind": "lebesgue", "dim": self.dim, "scale": self.scale}


@dataclass(eq=False)
class ExpWeight(IntensityModel):
    """Density ``exp(|x|)`` on the real line: locally finite, unbounded growth."""

    dim: int = 1

    def __post_init__(self):
        if self.dim != 1:
            raise ValueError("ExpWeight intensity is defined in dimension 1 only")

    @staticmethod
    def _cdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return np.sign(x) * np.expm1(np.abs(x))

    def density(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        with np.errstate(over="ignore"):
            return np.exp(np.abs(x))

    def box_mass(self, lo, hi):
        lo = np.asarray(lo, dtype=float)[..., 0]
        hi = np.asarray(hi, dtype=float)[..., 0]
        with np.errstate(invalid="ignore"):
            out = self._cdf(hi) - self._cdf(lo)
        return np.where(hi > lo, out, 0.0)

    def sample_box(self, lo, hi, m, rng):
        a, b = self._cdf(np.atleast_1d(lo)[0]), self._cdf(np.atleast_1d(hi)[0])
        u = a + (b - a) * rng.random(m)
        return (np.sign(u) * np.log1p(np.abs(u)))[:, None]

    def as_dict(self):
        return {"kind": "expweight", "dim": 1}


def _bump_profile_table(n: int = 20001):
    t = np.linspace(-1.0, 1.0, n)
    inner = np.abs(t) < 1
    b = np.zeros_like(t)
    b[inner] = np.exp(-1.0 / (1.0 - t[inner] ** 2))
    cdf = integrate.cumulative_simpson(b, x=t, initial=0.0)
    return t, b / cdf[-1], cdf / cdf[-1], cdf[-1]


@dataclass(eq=False)
class BumpDensity(IntensityModel):
    """Finite intensity with separable bump density and total mass ``total``.

    ``density(x) = total * prod_k b((x_k - c_k) / r) / (r * Z)`` with
    ``b(t) = exp(-1 / (1 - t^2))`` on (-1, 1). Masses and sampling use a
    tabulated profile CDF (relative error around 1e-12).
    """

    center: np.ndarray = field(default_factory=lambda: np.zeros(1))
    radius: float = 1.0
    total: float = 1.0

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        self.dim = self.center.size
        self.total_mass = float(self.total)
        self._t, _, self._cdf_tab, self._z = _bump_profile_table()

    def _profile(self, t):
        out = np.zeros_like(t)
        inner = np.abs(t) < 1
        out[inner] = np.exp(-1.0 / (1.0 - t[inner] ** 2)) / self._z
        return out

    def density(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        t = (x - self.center) / self.radius
        return self.total * np.prod(self._profile(t), axis=1) / self.radius**self.dim

    def _G(self, x):
        t = (np.asarray(x, dtype=float) - self.center) / self.radius
        return np.interp(t, self._t, self._cdf_tab, left=0.0, right=1.0)

    def box_mass(self, lo, hi):
        return self.total * np.prod(np.clip(self._G(hi) - self._G(lo), 0.0, None), axis=-1)

    def sample_box(self, lo, hi, m, rng):
        a, b = self._G(np.atleast_1d(lo)), self._G(np.atleast_1d(hi))
        u = a + (b - a) * rng.random((m, self.dim))
        t = np.empty_like(u)
        for k in range(self.dim):
            t[:, k] = np.interp(u[:, k], self._cdf_tab, self._t)
        return self.center + self.radius * t

    def sup_translate_mass(self, window):
        # translating the window onto the centre maximizes its mass
        half = 0.5 * (window.upper - window.lower)
        return float(self.box_mass(self.center - half, self.center + half))

    def as_dict(self):
        return {"kind": "bump", "center": self.center.tolist(), "radius": self.radius, "total": self.total}


# ---------------------------------------------------------------- cluster laws


class PointLaw:
    """Joint law of the offsets of a size-n cluster relative to its centre.

    ``Y`` arrays have shape (m, n, d). Laws are exchangeable: the density
    is invariant under permutation of the n points.
    """

    dim: int
    absolutely_continuous: bool = True
    has_fixed_points: bool = False
    bounded_support: bool = False

    def sample(self, n: int, m: int, rng) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, Y) -> np.ndarray:
        raise NotImplementedError

    def grad_log_density(self, Y) -> np.ndarray:
        raise NotImplementedError

    def tail(self, n: int, R: float) -> float:
        """Upper bound on P(some point has a coordinate beyond R in absolute value)."""
        raise NotImplementedError

    def cutoff_radius(self) -> float:
        """Offsets beyond this sup-norm radius have negligible density."""
        return np.inf

    def hit_probability(self, n: int, lo, hi):
        """P(some point of a size-n cluster lies in each box), or None if unknown."""
        return None

    def lebesgue_log_convolution(self, Y):
        """Closed-form ``(log s_n, grad log s_n)`` for unit Lebesgue intensity, or None."""
        return None

    def as_dict(self) -> dict:
        raise NotImplementedError


@dataclass(eq=False)
class GaussianPoints(PointLaw):
    """Independent N(0, diag(sigma^2)) offsets; sigma may differ per coordinate."""

    sigma: np.ndarray | float = 1.0
    dim: int = 1

    def __post_init__(self):
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), (self.dim,)).copy()
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")

    def sample(self, n, m, rng):
        return rng.standard_normal((m, n, self.dim)) * self.sigma

    def log_density(self, Y):
        Y = np.asarray(Y, dtype=float)
        z = Y / self.sigma
        n = Y.shape[1]
        return -0.5 * np.sum(z * z, axis=(1, 2)) - n * (0.5 * self.dim * LOG_2PI + np.sum(np.log(self.sigma)))

    def grad_log_density(self, Y):
        return -np.asarray(Y, dtype=float) / self.sigma**2

    def tail(self, n, R):
        return float(min(1.0, n * np.sum(special.erfc(R / (self.sigma * np.sqrt(2.0))))))

    def cutoff_radius(self):
        return 8.0 * float(self.sigma.max())

    def hit_probability(self, n, lo, hi):
        s2 = self.sigma * np.sqrt(2.0)
        q = np.prod(0.5 * (special.erf(np.asarray(hi) / s2) - special.erf(np.asarray(lo) / s2)), axis=-1)
        return -np.expm1(n * np.log1p(-np.clip(q, 0.0, 1.0 - 1e-300)))

    def lebesgue_log_convolution(self, Y):
        return _gaussian_convolution(np.asarray(Y, dtype=float), self.sigma**2)

    def as_dict(self):
        return {"kind": "gaussian", "sigma": self.sigma.tolist()}


def _gaussian_convolution(Y, var):
    """log s_n and its gradient for i.i.d. N(0, var) coordinates convolved with Lebesgue."""
    n = Y.shape[1]
    mean = Y.mean(axis=1, keepdims=True)
    dev = Y - mean
    quad = np.sum(dev * dev / var, axis=(1, 2))
    logs = -0.5 * quad - 0.5 * (n - 1) * np.sum(np.log(2.0 * np.pi * var)) - 0.5 * Y.shape[2] * np.log(n)
    return logs, -dev / var


@dataclass(eq=False)
class ExchangeableGaussian(PointLaw):
    """Per coordinate, offsets are jointly N(0, sigma^2 ((1 - r) I + r 11^T)).

    A genuinely size-dependent joint density (not i.i.d. unless r = 0),
    valid for ``-1/(n_max - 1) < r < 1``.
    """

    sigma: float = 1.0
    corr: float = 0.5
    dim: int = 1
    n_max: int = 8

    def __post_init__(self):
        if not (-1.0 / max(self.n_max - 1, 1) < self.corr < 1.0) or not self.sigma > 0:
            raise ValueError("exchangeable Gaussian needs sigma > 0 and -1/(n_max-1) < r < 1")

    def sample(self, n, m, rng):
        xi = rng.standard_normal((m, n, self.dim))
        mean = xi.mean(axis=1, keepdims=True)
        r = self.corr
        return self.sigma * (np.sqrt(1 - r) * (xi - mean) + np.sqrt(1 - r + n * r) * mean)

    def _parts(self, Y):
        Y = np.asarray(Y, dtype=float)
        n, r, s2 = Y.shape[1], self.corr, self.sigma**2
        S = Y.sum(axis=1, keepdims=True)
        a = 1.0 / (s2 * (1 - r))
        b = r / (1 - r + n * r)
        return Y, n, r, s2, S, a, b

    def log_density(self, Y):
        Y, n, r, s2, S, a, b = self._parts(Y)
        quad = a * (np.sum(Y * Y, axis=(1, 2)) - b * np.sum(S * S, axis=(1, 2)))
        logdet = n * np.log(s2) + (n - 1) * np.log(1 - r) + np.log(1 - r + n * r)
        return -0.5 * quad - 0.5 * self.dim * (n * LOG_2PI + logdet)

    def grad_log_density(self, Y):
        Y, n, r, s2, S, a, b = self._parts(Y)
        return -a * (Y - b * S)

    def tail(self, n, R):
        return float(min(1.0, n * self.dim * special.erfc(R / (self.sigma * np.sqrt(2.0)))))

    def cutoff_radius(self):
        return 8.0 * self.sigma

    def lebesgue_log_convolution(self, Y):
        # the centre direction integrates out, leaving i.i.d. form with variance sigma^2 (1 - r)
        return _gaussian_convolution(np.asarray(Y, dtype=float), np.full(self.dim, self.sigma**2 * (1 - self.corr)))

    def as_dict(self):
        return {"kind": "exchangeable_gaussian", "sigma": self.sigma, "corr": self.corr}


@dataclass(eq=False)
class HeavyTailPoints(PointLaw):
    """I.i.d. offsets on the line with density ``|y| / (y^2 + 1)^2``.

    ``P(|Y| > t) = 1 / (t^2 + 1)``: enough tail to make the convolution
    with an exponentially growing intensity infinite.
    """

    dim: int = 1

    def __post_init__(self):
        if self.dim != 1:
            raise ValueError("heavy-tailed law is defined in dimension 1 only")

    def sample(self, n, m, rng):
        u = 1.0 - rng.random((m, n, 1))
        mag = np.sqrt(1.0 / u - 1.0)
        sign = np.where(rng.random((m, n, 1)) < 0.5, -1.0, 1.0)
        return sign * mag

    def log_density(self, Y):
        Y = np.asarray(Y, dtype=float)
        with np.errstate(divide="ignore"):
            return np.sum(np.log(np.abs(Y)) - 2.0 * np.log1p(Y * Y), axis=(1, 2))

    def grad_log_density(self, Y):
        Y = np.asarray(Y, dtype=float)
        with np.errstate(divide="ignore"):
            return 1.0 / Y - 4.0 * Y / (1.0 + Y * Y)

    def tail(self, n, R):
        return float(min(1.0, n / (R * R + 1.0)))

    @staticmethod
    def _cdf(y):
        y = np.asarray(y, dtype=float)
        half = 0.5 / (y * y + 1.0)
        return np.where(y >= 0, 1.0 - half, half)

    def hit_probability(self, n, lo, hi):
        q = self._cdf(np.asarray(hi)[..., 0]) - self._cdf(np.asarray(lo)[..., 0])
        return -np.expm1(n * np.log1p(-np.clip(q, 0.0, 1.0 - 1e-300)))

    def as_dict(self):
        return {"kind": "heavy_tail"}


@dataclass(eq=False)
class FixedOffsets(PointLaw):
    """Deterministic offsets: a size-n cluster uses the first n rows of
    ``offsets``, in random order.

    All-zero offsets give single-point clusters at the centre; repeated
    rows produce coincident points (a non-simple projection).
    """

    offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))

    absolutely_continuous = False
    has_fixed_points = True
    bounded_support = True

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=float)
        self.offsets = off.reshape(off.shape[0], -1)
        self.dim = self.offsets.shape[1]

    def _rows(self, n):
        if n > self.offsets.shape[0]:
            raise ModelError(f"fixed-offset law has no offsets for cluster size {n}")
        return self.offsets[:n]

    def sample(self, n, m, rng):
        rows = self._rows(n)
        perm = np.argsort(rng.random((m, n)), axis=1)
        return rows[perm]

    def log_density(self, Y):
        raise ModelError("fixed-offset clusters have no density")

    def grad_log_density(self, Y):
        raise ModelError("fixed-offset clusters have no density")

    def tail(self, n, R):
        return float(np.any(np.abs(self._rows(n)) > R))

    def cutoff_radius(self):
        return float(np.abs(self.offsets).max()) if self.offsets.size else 0.0

    def hit_probability(self, n, lo, hi):
        rows = self._rows(n)
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        inside = np.all((rows >= lo[..., None, :]) & (rows <= hi[..., None, :]), axis=-1)
        return np.any(inside, axis=-1).astype(float)

    def as_dict(self):
        return {"kind": "fixed", "offsets": self.offsets.tolist()}


@dataclass(eq=False)
class ClusterLaw:
    """Cluster size law ``(p_0, ..., p_nmax)`` plus the offset law."""

    size_probs: np.ndarray
    points: PointLaw

    def __post_init__(self):
        p = np.asarray(self.size_probs, dtype=float)
        if p.ndim != 1 or p.size < 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("size_probs must be a probability vector")
        self.size_probs = p / p.sum()

    @property
    def dim(self) -> int:
        return self.points.dim

    @property
    def n_max(self) -> int:
        return self.size_probs.size - 1

    @property
    def mean_size(self) -> float:
        return float(np.dot(np.arange(self.size_probs.size), self.size_probs))

    def sizes_present(self):
        return [n for n in range(1, self.size_probs.size) if self.size_probs[n] > 0]

    def sample_sizes(self, m: int, rng) -> np.ndarray:
        return rng.choice(self.size_probs.size, size=m, p=self.size_probs)

    def sample_offsets(self, sizes, rng) -> np.ndarray:
        """Flat (sum(sizes), d) offsets, cluster by cluster."""
        sizes = np.asarray(sizes, dtype=np.intp)
        out = np.empty((int(sizes.sum()), self.dim))
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
        for n in np.unique(sizes):
            if n == 0:
                continue
            idx = np.flatnonzero(sizes == n)
            Y = self.points.sample(int(n), idx.size, rng)
            out[(starts[idx][:, None] + np.arange(n)).ravel()] = Y.reshape(-1, self.dim)
        return out

    def sample(self, rng) -> ClusterVector:
        n = int(self.sample_sizes(1, rng)[0])
        return ClusterVector(self.points.sample(n, 1, rng)[0] if n else np.zeros((0, self.dim)), self.dim)

    def density(self, ybar: ClusterVector) -> float:
        """``p_n h_n(ybar)``."""
        n = ybar.size
        if n == 0 or n > self.n_max:
            return float(self.size_probs[0]) if n == 0 else 0.0
        return float(self.size_probs[n] * np.exp(self.points.log_density(ybar.points[None])[0]))

    def tail(self, R: float) -> float:
        return float(sum(self.size_probs[n] * self.points.tail(n, R) for n in self.sizes_present()))

    def hit_probability(self, lo, hi):
        parts = [self.points.hit_probability(n, lo, hi) for n in self.sizes_present()]
        if any(p is None for p in parts):
            return None
        return sum(self.size_probs[n] * p for n, p in zip(self.sizes_present(), parts)) if parts else 0.0

    def as_dict(self):
        return {"size_probs": self.size_probs.tolist(), "points": self.points.as_dict()}


# ---------------------------------------------------------------- the model


@dataclass(eq=False)
class ClusterProcessModel:
    """Bundle of intensity, cluster law and numerical parameters.

    Attributes:
        lam: centre intensity.
        eta: cluster law.
        eps_trunc: bound on the probability that a cluster reaches beyond
            ``r_trunc`` from its centre (sup-norm).
        quad_rel_tol, quad_abs_tol: targets for the density quadrature.
        max_centres: enlarged windows with more expected centres than this
            are treated as divergent.
        laplace_nodes, laplace_clusters: defaults for the cluster Laplace
            functional evaluator.
        merge_tol: coincidence tolerance for projected atoms.
    """

    lam: IntensityModel
    eta: ClusterLaw
    eps_trunc: float = 1e-4
    quad_rel_tol: float = 1e-11
    quad_abs_tol: float = 1e-300
    max_centres: float = 1e7
    laplace_nodes: int = 64
    laplace_clusters: int = 4096
    merge_tol: float = 1e-12
    r_trunc: float = field(init=False)

    def __post_init__(self):
        if self.lam.dim != self.eta.dim:
            raise ModelError("intensity and cluster law dimensions differ")
        self.r_trunc = truncation_radius(self.eta, self.eps_trunc)

    @property
    def dim(self) -> int:
        return self.lam.dim

    @property
    def absolutely_continuous(self) -> bool:
        return self.eta.points.absolutely_continuous

    def enlarged(self, K: Window) -> Window:
        return K.inflate(self.r_trunc)

    def centre_mass(self, K: Window) -> float:
        """lambda(K inflated by r_trunc); raises when infinite or absurdly large."""
        W = self.enlarged(K)
        m = self.lam.mass(W)
        if not np.isfinite(m) or m > self.max_centres:
            raise DivergenceError(DivergenceReport(
                "centre mass of the enlarged window", [float(self.r_trunc)], [float(m)],
                f"lambda(K + r_trunc) = {m:.3g} exceeds {self.max_centres:.3g}"))
        return float(m)

    def metadata(self) -> dict:
        return {
            "dim": self.dim,
            "intensity": self.lam.as_dict(),
            "cluster_law": self.eta.as_dict(),
            "n_max": self.eta.n_max,
            "r_trunc": self.r_trunc,
            "eps_trunc": self.eps_trunc,
        }


def truncation_radius(eta: ClusterLaw, eps: float) -> float:
    """Smallest R with ``P(cluster reaches beyond R) <= eps``, from analytic tails."""
    if not eta.sizes_present():
        return 0.0
    if eta.points.bounded_support:
        return eta.points.cutoff_radius()
    f = lambda R: eta.tail(R) - eps
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            return np.inf
    return float(optimize.brentq(f, 0.0, hi, xtol=1e-10))


# ---------------------------------------------------------------- lambda* densities


def lambda_star_gaussian_closed(n: int, ybar, model: ClusterProcessModel | None = None) -> float:
    """Closed-form s_n for standard Gaussian offsets on the line with unit Lebesgue centres:
    ``(2 pi)^(-(n-1)/2) n^(-1/2) exp(-(|y|^2 - (sum y)^2 / n) / 2)``.
    """
    if model is not None:
        lam, pts = model.lam, model.eta.points
        ok = (isinstance(lam, Lebesgue) and lam.scale == 1.0 and lam.dim == 1
              and isinstance(pts, GaussianPoints) and np.all(pts.sigma == 1.0))
        if not ok:
            raise ModelError("closed form needs d=1, unit Lebesgue intensity and standard Gaussian offsets")
    y = np.asarray(ybar.points if isinstance(ybar, ClusterVector) else ybar, dtype=float).ravel()
    if n < 1 or y.size != n:
        raise ModelError(f"closed form needs n >= 1 and {n} coordinates, got {y.size}")
    return float((2 * np.pi) ** (-(n - 1) / 2) / np.sqrt(n) * np.exp(-0.5 * (y @ y - y.sum() ** 2 / n)))


def has_closed_form(model: ClusterProcessModel) -> bool:
    return isinstance(model.lam, Lebesgue) and model.eta.points.lebesgue_log_convolution(
        np.zeros((1, 1, model.dim))) is not None


def closed_log_s(model: ClusterProcessModel, Y):
    """Vectorized closed-form ``(log s_n, grad log s_n)`` for Y of shape (m, n, d)."""
    if not has_closed_form(model):
        raise ModelError("no closed-form convolution for this model")
    logs, grad = model.eta.points.lebesgue_log_convolution(Y)
    return logs + np.log(model.lam.scale), grad


def _gauss_legendre_box(lo, hi, m):
    t, w = np.polynomial.legendre.leggauss(m)
    d = lo.size
    grids = [0.5 * (hi[k] - lo[k]) * (t + 1) + lo[k] for k in range(d)]
    wts = [0.5 * (hi[k] - lo[k]) * w for k in range(d)]
    X = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, d)
    W = np.prod(np.stack(np.meshgrid(*wts, indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    return X, W


def _integrand_factory(model: ClusterProcessModel, Y: np.ndarray, with_grad: bool):
    law, lam = model.eta.points, model.lam
    n, d = Y.shape

    def many(X):
        # rows of X are centre positions; returns (len(X), 1 + n*d)
        D = Y[None, :, :] - X[:, None, :]
        logh = law.log_density(D)
        w = lam.density(X).reshape(-1)
        with np.errstate(invalid="ignore", over="ignore"):
            val = np.where(w > 0, w * np.exp(logh), 0.0)
        if not with_grad:
            return val[:, None]
        with np.errstate(invalid="ignore"):
            g = law.grad_log_density(D).reshape(len(X), n * d) * val[:, None]
        g[val == 0] = 0.0
        return np.concatenate([val[:, None], g], axis=1)

    return many


def _integrate_box(many, lo, hi, rel, abs_tol, width):
    """Integral of ``many`` over the box; returns (values, error estimate)."""
    if lo.size == 1:
        res, err = integrate.quad_vec(lambda x: many(np.array([[x]]))[0], lo[0], hi[0],
                                      epsabs=abs_tol, epsrel=rel, limit=400)
        return np.atleast_1d(res), float(err)
    prev = None
    for m in (16, 32, 64, 128):
        X, W = _gauss_legendre_box(lo, hi, m)
        cur = W @ many(X)
        if prev is not None:
            err = float(np.max(np.abs(cur - prev)))
            if err <= max(abs_tol, rel * np.max(np.abs(cur))):
                return cur, err
        prev = cur
    return cur, err


DIVERGENCE_DOUBLINGS = 4
DIVERGENCE_GROWTH = 0.10


def doubling_integral(fn, L0: float, quantity: str, max_doublings: int = 40, rel_tol: float = 1e-10):
    """Evaluate ``lim_{L -> inf} fn(L)`` for a nondecreasing truncated integral.

    The extent is doubled until the estimate settles; if
    ``DIVERGENCE_DOUBLINGS`` consecutive doublings each grow the estimate
    by more than ``DIVERGENCE_GROWTH`` (relative), the integral is declared
    divergent and a ``DivergenceError`` carries the extent/estimate trail.
    """
    extents, estimates = [L0], [fn(L0)]
    streak = 0
    L = L0
    for _ in range(max_doublings):
        L *= 2.0
        v = fn(L)
        extents.append(L)
        estimates.append(v)
        prev = estimates[-2]
        if not np.isfinite(v) or (prev > 0 and v > prev * (1 + DIVERGENCE_GROWTH)) or (prev == 0 and v > 0 and streak):
            streak += 1
        else:
            streak = 0
        if streak >= DIVERGENCE_DOUBLINGS or not np.isfinite(v):
            raise DivergenceError(DivergenceReport(
                quantity, extents, estimates,
                f"{DIVERGENCE_DOUBLINGS} consecutive doublings each grew the estimate by more than "
                f"{DIVERGENCE_GROWTH:.0%}"))
        if abs(v - prev) <= rel_tol * abs(v) or (v == 0 and prev == 0 and len(estimates) > 3):
            return float(v), float(abs(v - prev)), extents, estimates
    return float(estimates[-1]), float(abs(estimates[-1] - estimates[-2])), extents, estimates


def convolution_integrals(model: ClusterProcessModel, ybar, with_grad: bool = False):
    """Quadrature of ``s_n(ybar)`` and optionally ``grad s_n(ybar)``.

    Returns ``(s, grad_s, error)`` with grad_s of shape (n, d) or None. The
    centre region is cut where the offset density is negligible; laws with
    unbounded support use the doubling detector instead.
    """
    Y = np.asarray(ybar.points if isinstance(ybar, ClusterVector) else ybar, dtype=float)
    Y = Y.reshape(Y.shape[0], -1)
    n, d = Y.shape
    if not model.absolutely_continuous:
        raise ModelError("lambda* has no density for clusters with fixed offsets")
    many = _integrand_factory(model, Y, with_grad)
    rc = model.eta.points.cutoff_radius()
    rel, abs_tol = model.quad_rel_tol, model.quad_abs_tol
    if np.isfinite(rc):
        lo, hi = Y.max(axis=0) - rc, Y.min(axis=0) + rc
        if np.any(lo >= hi):
            return 0.0, (np.zeros((n, d)) if with_grad else None), 0.0
        vals, err = _integrate_box(many, lo, hi, rel, abs_tol, rc)
    else:
        centre = Y.mean(axis=0)
        L0 = 1.0 + float(np.ptp(Y, axis=0).max() if n > 1 else 0.0)
        cache = {}

        def trunc(L):
            v, e = _integrate_box(many, centre - L, centre + L, rel, abs_tol, L)
            cache[L] = (v, e)
            return float(v[0])

        _, err, extents, _ = doubling_integral(trunc, L0, f"s_{n} at {Y.ravel().tolist()}")
        vals, qerr = cache[extents[-1]]
        err = max(err, qerr)
    s = float(vals[0])
    grad = vals[1:].reshape(n, d) if with_grad else None
    return s, grad, err


def lambda_star_density(model: ClusterProcessModel, ybar, method: str = "quadrature") -> Estimate:
    """``p_n s_n(ybar)`` with its quadrature error estimate.

    Args:
        method: "quadrature" (adaptive, any a.c. model), "closed" (Gaussian
            laws with Lebesgue intensity) or "auto" (closed when available).
    """
    Y = np.asarray(ybar.points if isinstance(ybar, ClusterVector) else ybar, dtype=float)
    Y = Y.reshape(Y.shape[0], -1) if Y.size else np.zeros((0, model.dim))
    n = Y.shape[0]
    if n == 0:
        if not np.isfinite(model.lam.total_mass):
            raise ModelError("lambda_star mass at X^0 is infinite")
        raise ModelError("lambda_star has an atom of mass p_0 * lambda(X) at the empty cluster, not a density")
    p_n = model.eta.size_probs[n] if n <= model.eta.n_max else 0.0
    if method == "auto":
        method = "closed" if has_closed_form(model) else "quadrature"
    if method == "closed":
        logs, _ = closed_log_s(model, Y[None])
        return Estimate(float(p_n * np.exp(logs[0])), 0.0)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    s, _, err = convolution_integrals(model, Y)
    return Estimate(float(p_n * s), float(p_n * err))


def log_lambda_star_batch(model: ClusterProcessModel, Y, method: str = "auto"):
    """``(log s_n, grad log s_n)`` for an (m, n, d) stack of clusters of one size.

    Uses the closed form when available (or requested), quadrature otherwise.
    """
    Y = np.asarray(Y, dtype=float)
    if method == "auto":
        method = "closed" if has_closed_form(model) else "quadrature"
    if method == "closed":
        return closed_log_s(model, Y)
    logs = np.empty(Y.shape[0])
    grad = np.empty_like(Y)
    for i in range(Y.shape[0]):
        s, g, _ = convolution_integrals(model, Y[i], with_grad=True)
        with np.errstate(divide="ignore"):
            logs[i] = np.log(s) if s > 0 else -np.inf
        grad[i] = g / s if s > 0 else 0.0
    return logs, grad


# ---------------------------------------------------------------- region masses


def lambda_star_region_mass(model: ClusterProcessModel, B: Window, N: int, rng=None) -> Estimate:
    """Monte Carlo estimate of lambda*(clusters hitting B) = E_eta[lambda(D_B(y))]."""
    from .properness import droplet_measure_batch

    if N < 1:
        raise ValueError("N must be positive")
    rng = make_rng(rng)
    sizes = model.eta.sample_sizes(N, rng)
    offsets = model.eta.sample_offsets(sizes, rng)
    return mean_se(droplet_measure_batch(model, B, offsets, sizes))


def helmert(n: int) -> np.ndarray:
    """Orthogonal n x n matrix whose first column is 1/sqrt(n)."""
    U = np.zeros((n, n))
    U[:, 0] = 1.0 / np.sqrt(n)
    for k in range(1, n):
        U[:k, k] = 1.0
        U[k, k] = -float(k)
        U[:, k] /= np.sqrt(k * (k + 1.0))
    return U


class DecompositionCheck(NamedTuple):
    direct: Estimate
    product: Estimate
    residual: float
    se: float


def orthogonal_decomposition_check(model: ClusterProcessModel, n: int, B1: Window, B_rest: Window | None,
                                   N: int = 200_000, rng=None, nodes: int = 48) -> DecompositionCheck:
    """Compare two evaluations of lambda*_n(B1 x B') in rotated coordinates.

    Coordinates ``z = y U_n`` per spatial axis, with ``z_1`` the scaled
    centroid and ``z'`` the remaining n - 1 relative coordinates. Direct:
    integrate ``p_n s_n`` over the box. Product: ``p_n n^(-d/2) lambda(B1)
    eta'_n(B')`` where ``eta'_n`` is the law of ``z'`` estimated from
    cluster samples.
    """
    if not model.lam.translation_invariant:
        raise ModelError("the product form needs a translation-invariant intensity")
    rng = make_rng(rng)
    d = model.dim
    U = helmert(n)
    p_n = model.eta.size_probs[n] if n <= model.eta.n_max else 0.0
    lam_B1 = model.lam.mass(B1)
    if n == 1:
        eta_rest = Estimate(1.0, 0.0)
    else:
        Y = model.eta.points.sample(n, N, rng)
        Z = np.einsum("mnd,nk->mkd", Y, U)[:, 1:, :].reshape(N, -1)
        inside = np.all((Z >= B_rest.lower) & (Z <= B_rest.upper), axis=1)
        eta_rest = mean_se(inside.astype(float))
    scale = p_n * n ** (-d / 2) * lam_B1
    product = Estimate(scale * eta_rest.value, scale * eta_rest.se)

    lo = B1.lower if n == 1 else np.concatenate([B1.lower, B_rest.lower])
    hi = B1.upper if n == 1 else np.concatenate([B1.upper, B_rest.upper])
    if np.any(hi <= lo) or p_n == 0:
        direct = Estimate(0.0, 0.0)
    else:
        def dens(zflat):
            # zflat columns: z_1 (d entries) then z' ((n-1) d entries); rebuild y = z U^T
            Zm = np.concatenate([zflat[:, :d][:, None, :], zflat[:, d:].reshape(-1, n - 1, d)], axis=1)
            Yc = np.einsum("mkd,nk->mnd", Zm, U)
            logs, _ = log_lambda_star_batch(model, Yc)
            return p_n * np.exp(logs)

        if n * d <= 3:
            X, W = _gauss_legendre_box(lo, hi, nodes)
            direct = Estimate(float(W @ dens(X)), 0.0)
        else:
            X = lo + (hi - lo) * rng.random((N, lo.size))
            est = mean_se(dens(X))
            vol = float(np.prod(hi - lo))
            direct = Estimate(vol * est.value, vol * est.se)
    se = float(np.hypot(direct.se, product.se))
    return DecompositionCheck(direct, product, abs(direct.value - product.value), se)
