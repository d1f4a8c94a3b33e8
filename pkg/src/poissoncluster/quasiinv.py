"""Quasi-invariance of the lifted Poisson measure under diagonal
diffeomorphisms, checked through its Radon-Nikodym density.

For a compactly supported diffeomorphism phi of R^d acting coordinatewise
on cluster vectors, the image of lambda* has density

    rho(x) = s(phi^-1 x) / (s(x) * prod_i J_phi(phi^-1 x_i))

with respect to lambda*, and the image of the Poisson measure has density
``R = exp(integral (1 - rho) d lambda*) * prod_{clusters} rho``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .configspace import ClusterVector, LiftedBatch, LiftedConfiguration, Window
from .errors import ModelError
from .laplace import integrate_over_support
from .measures import ClusterProcessModel, IntensityModel, log_lambda_star_batch
from .sampler import sample_lifted_batch, sample_poisson_batch
from .stats import Estimate, make_rng, mean_se
from .testfunctions import Bump, CylinderFunction

log = logging.getLogger(__name__)

ZERO_DENSITY_FLOOR = 1e-300
NORMALISER_DRAWS = 10**6


@dataclass(eq=False)
class CompactDiffeo:
    """``phi(x) = x + eps * b(x) * u`` for a bump b and unit vector u.

    Invertible whenever ``|eps| * Lip(b) < 1``; the inverse is computed by
    the contraction ``x <- y - eps * b(x) * u``.
    """

    bump: Bump
    eps: float
    u: np.ndarray = None
    inverse_tol: float = 1e-14

    def __post_init__(self):
        d = self.bump.dim
        self.u = np.eye(d)[0] if self.u is None else np.atleast_1d(np.asarray(self.u, dtype=float))
        if self.u.size != d or not np.isclose(np.linalg.norm(self.u), 1.0):
            raise ValueError("u must be a unit vector in the bump's dimension")
        self.contraction = abs(self.eps) * self.bump.lipschitz()
        if self.contraction >= 1.0:
            raise ValueError(f"|eps| * Lip(b) = {self.contraction:.3g} must be below 1")
        self.dim = d

    @classmethod
    def identity(cls, dim: int = 1) -> "CompactDiffeo":
        return cls(Bump(np.zeros(dim), 1.0), 0.0)

    def _flat(self, x):
        x = np.asarray(x, dtype=float)
        return x.reshape(-1, self.dim), x.shape

    def value(self, x) -> np.ndarray:
        p, shape = self._flat(x)
        return (p + self.eps * self.bump._value(p)[:, None] * self.u).reshape(shape)

    __call__ = value

    def jacobian_det(self, x) -> np.ndarray:
        """``det(I + eps u grad b^T) = 1 + eps grad b . u``."""
        p, shape = self._flat(x)
        return (1.0 + self.eps * self.bump._grad(p) @ self.u).reshape(shape[:-1] if len(shape) > 1 else ())

    def inverse(self, y) -> np.ndarray:
        q, shape = self._flat(y)
        x = q.copy()
        if self.eps == 0:
            return x.reshape(shape)
        for _ in range(500):
            new = q - self.eps * self.bump._value(x)[:, None] * self.u
            step = np.max(np.abs(new - x)) if x.size else 0.0
            x = new
            if step <= self.inverse_tol:
                break
        return x.reshape(shape)

    def support(self):
        return self.bump.support()

    def inverted(self) -> "InverseDiffeo":
        return InverseDiffeo(self)


@dataclass(eq=False)
class InverseDiffeo:
    """The inverse of a ``CompactDiffeo`` with the same interface."""

    base: CompactDiffeo

    @property
    def dim(self) -> int:
        return self.base.dim

    def value(self, x):
        return self.base.inverse(x)

    __call__ = value

    def inverse(self, y):
        return self.base.value(y)

    def jacobian_det(self, x):
        return 1.0 / self.base.jacobian_det(self.base.inverse(x))

    def support(self):
        return self.base.support()

    def inverted(self):
        return self.base


def _require_ac(model: ClusterProcessModel):
    if not model.absolutely_continuous:
        raise ModelError("lambda* is not absolutely continuous for this cluster law")


def _support_window(phi) -> Window:
    lo, hi = phi.support()
    return Window(lo, hi)


def log_rho_batch(model: ClusterProcessModel, phi, Y: np.ndarray) -> np.ndarray:
    """``log rho`` for an (m, n, d) stack of clusters (n >= 1)."""
    _require_ac(model)
    Y = np.asarray(Y, dtype=float)
    m, n, d = Y.shape
    out = np.zeros(m)
    S = _support_window(phi)
    touched = S.contains(Y.reshape(-1, d)).reshape(m, n).any(axis=1)
    if not touched.any():
        return out
    Yt = Y[touched]
    X = phi.inverse(Yt.reshape(-1, d)).reshape(Yt.shape)
    logJ = np.log(phi.jacobian_det(X.reshape(-1, d))).reshape(-1, n).sum(axis=1)
    log_inv, _ = log_lambda_star_batch(model, X)
    log_s, _ = log_lambda_star_batch(model, Yt)
    floor = np.log(ZERO_DENSITY_FLOOR)
    low = (log_inv < floor) | (log_s < floor)
    if low.any():
        log.warning("zero-density floor hit for %d clusters; rho set to 1 there", int(low.sum()))
    out[touched] = np.where(low, 0.0, log_inv - log_s - logJ)
    return out


def rho_lambda_star(model: ClusterProcessModel, phi, ybar: ClusterVector) -> float:
    """Density of the image of lambda* under phi, at the cluster vector ybar."""
    Y = np.asarray(ybar.points if isinstance(ybar, ClusterVector) else ybar, dtype=float)
    Y = Y.reshape(Y.shape[0], -1) if Y.size else np.zeros((0, model.dim))
    if Y.shape[0] == 0:
        raise ModelError("rho needs a nonempty cluster")
    return float(np.exp(log_rho_batch(model, phi, Y[None])[0]))


def log_rho_lifted(model: ClusterProcessModel, phi, batch: LiftedBatch) -> np.ndarray:
    """``log rho`` of every cluster in a batch."""
    out = np.zeros(batch.n_clusters)
    for n in np.unique(batch.sizes):
        if n == 0:
            continue
        Y, idx = batch.cluster_arrays(int(n))
        out[idx] = log_rho_batch(model, phi, Y)
    return out


_NORMALISERS: dict = {}


def normaliser(model: ClusterProcessModel, phi, N: int = NORMALISER_DRAWS, rng=None) -> Estimate:
    """Monte Carlo ``integral (1 - rho) d lambda*`` over clusters meeting supp phi.

    The value is cached per (model, phi, N); later calls reuse it.
    """
    key = (id(model), id(phi), N)
    if key in _NORMALISERS:
        return _NORMALISERS[key]
    rng = make_rng(12345 if rng is None else rng)
    S = _support_window(phi)
    W = model.enlarged(S)
    mass = model.centre_mass(S)
    x = model.lam.sample(W, N, rng)
    sizes = model.eta.sample_sizes(N, rng)
    owner = np.repeat(np.arange(N), sizes)
    pts = model.eta.sample_offsets(sizes, rng) + x[owner]
    batch = LiftedBatch(pts, owner, np.zeros(N, dtype=np.intp), sizes, 1)
    vals = -np.expm1(log_rho_lifted(model, phi, batch))
    est = mean_se(vals)
    out = Estimate(mass * est.value, mass * est.se)
    _NORMALISERS[key] = out
    return out


def rn_density_batch(model: ClusterProcessModel, phi, batch: LiftedBatch, norm: float | None = None) -> np.ndarray:
    """Radon-Nikodym density R for every configuration of a batch."""
    c = normaliser(model, phi).value if norm is None else norm
    return np.exp(c + np.bincount(batch.draw_of_cluster, weights=log_rho_lifted(model, phi, batch),
                                  minlength=batch.n_draws))


def rn_density_lifted(model: ClusterProcessModel, phi, gbar: LiftedConfiguration, norm: float | None = None) -> float:
    """``exp(integral (1 - rho) d lambda*) * prod over clusters of rho``."""
    batch = LiftedBatch.from_lifted([gbar], gbar.dim)
    return float(rn_density_batch(model, phi, batch, norm)[0])


def _cylinder_per_draw(F: CylinderFunction, points, draw, n_draws):
    return F.values(F.pairings(points, draw, n_draws))


class QuasiInvarianceResult(NamedTuple):
    lhs: Estimate
    rhs: Estimate
    residual: float
    se: float
    mean_R: Estimate
    normaliser: Estimate


def quasi_invariance_residual(model: ClusterProcessModel, phi, F: CylinderFunction, N: int, rng=None,
                              K: Window | None = None) -> QuasiInvarianceResult:
    """Compare ``E[F(phi gamma)]`` with ``E[F(gamma) R(gamma)]`` on one sample stream.

    Both sides use the same lifted draws; the SE of the residual is the
    paired SE plus the normaliser uncertainty.
    """
    rng = make_rng(rng)
    if K is None:
        K = _support_window(phi).hull(Window(*F.support()))
    batch = sample_lifted_batch(model, K, N, rng)
    norm = normaliser(model, phi)
    draw = batch.draw_of_point
    moved = phi.value(batch.points)
    lhs = _cylinder_per_draw(F, moved, draw, N)
    R = rn_density_batch(model, phi, batch, norm.value)
    rhs = _cylinder_per_draw(F, batch.points, draw, N) * R
    diff = mean_se(lhs - rhs)
    rhs_est = mean_se(rhs)
    se = float(np.hypot(diff.se, rhs_est.value * norm.se))
    mR = mean_se(R)
    return QuasiInvarianceResult(mean_se(lhs), rhs_est, diff.value, se,
                                 Estimate(mR.value, float(np.hypot(mR.se, mR.value * norm.se))), norm)


def rho_base(lam: IntensityModel, phi, x) -> np.ndarray:
    """Density of the image of lambda under phi: ``lam(phi^-1 x) / (lam(x) J(phi^-1 x))``."""
    x = np.asarray(x, dtype=float).reshape(-1, phi.dim)
    xi = phi.inverse(x)
    num = lam.density(xi)
    den = lam.density(x) * phi.jacobian_det(xi)
    ok = (num > ZERO_DENSITY_FLOOR) & (den > ZERO_DENSITY_FLOOR)
    return np.where(ok, num / np.where(ok, den, 1.0), 1.0)


class L2Check(NamedTuple):
    empirical: Estimate
    closed: float
    quadrature_error: float
    mean_R: Estimate


def rn_l2_check(lam: IntensityModel, phi, N: int, rng=None) -> L2Check:
    """Second moment of the Poisson Radon-Nikodym density on the base space.

    The closed form is ``exp(integral (rho^2 - rho) d lambda)``.
    """
    rng = make_rng(rng)
    lo, hi = phi.support()
    W = Window(lo, hi)
    c = integrate_over_support(lam, lambda X: 1.0 - rho_base(lam, phi, X), lo, hi)
    closed = float(np.exp(integrate_over_support(lam, lambda X: rho_base(lam, phi, X) ** 2 - rho_base(lam, phi, X),
                                                 lo, hi)))
    pts, draw = sample_poisson_batch(lam, W, N, rng)
    logr = np.log(rho_base(lam, phi, pts)) if pts.size else np.zeros(0)
    R = np.exp(c + np.bincount(draw, weights=logr, minlength=N))
    # the two integrals are computed to ~1e-11 relative
    return L2Check(mean_se(R**2), closed, 1e-10 * closed, mean_se(R))
