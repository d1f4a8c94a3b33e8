"""Differential calculus on configuration space.

Gradients of cylinder functions, the logarithmic derivative ``beta`` of
lambda*, integration-by-parts residuals under lambda* and under the
Poisson cluster measure, and the Dirichlet form against its generator.

Functions of the projected configuration are evaluated on lifted
samples: moving one cluster coordinate moves exactly one point of the
projection, so the gradient with respect to that coordinate is the point
gradient of F at it (this also covers coinciding points).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .configspace import ClusterVector, Configuration, LiftedBatch, LiftedConfiguration, Window
from .measures import (ClusterProcessModel, convolution_integrals, has_closed_form, closed_log_s,
                       log_lambda_star_batch)
from .quasiinv import ZERO_DENSITY_FLOOR
from .sampler import sample_lifted_batch
from .stats import Estimate, make_rng, mean_se
from .testfunctions import CylinderFunction, SmoothTestFunction, SmoothVectorField


@dataclass(eq=False)
class CylinderVectorField:
    """``V(gamma)_x = sum_i A_i(gamma) v_i(x)``."""

    terms: Sequence[tuple[CylinderFunction, SmoothVectorField]]

    def __post_init__(self):
        self.terms = list(self.terms)

    def support(self):
        boxes = [A.support() for A, _ in self.terms] + [v.support() for _, v in self.terms]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


# ------------------------------------------------------------ single configurations


def _pairing_row(F: CylinderFunction, gamma: Configuration) -> np.ndarray:
    return F.pairings(gamma.atoms, weights=gamma.multiplicities.astype(float))


def gamma_gradient(F: CylinderFunction, gamma: Configuration) -> list:
    """Nonzero per-atom gradients ``[(atom, grad_x F(gamma)), ...]``."""
    if gamma.n_atoms == 0:
        return []
    T = _pairing_row(F, gamma)
    G = F.point_gradients(gamma.atoms, np.repeat(T, gamma.n_atoms, axis=0))
    return [(x, g) for x, g in zip(gamma.atoms, G) if np.any(g != 0)]


def directional_derivative(F: CylinderFunction, gamma: Configuration, v: SmoothVectorField) -> float:
    """``sum over points x of grad_x F . v(x)``, counting multiplicity."""
    if gamma.n_atoms == 0:
        return 0.0
    T = _pairing_row(F, gamma)
    G = F.point_gradients(gamma.atoms, np.repeat(T, gamma.n_atoms, axis=0))
    return float(np.sum(gamma.multiplicities * np.sum(G * v.value(gamma.atoms), axis=1)))


def _as_array(model: ClusterProcessModel, ybar) -> np.ndarray:
    Y = np.asarray(ybar.points if isinstance(ybar, ClusterVector) else ybar, dtype=float)
    return Y.reshape(-1, model.dim)


def beta_vector(model: ClusterProcessModel, ybar, method: str = "quadrature") -> np.ndarray:
    """Logarithmic derivative ``grad s_n / s_n`` as a flat vector of length n*d.

    The quadrature ratio shares nodes between numerator and denominator.
    Returns zeros where ``s_n`` is below the zero-density floor.
    """
    Y = _as_array(model, ybar)
    if Y.shape[0] == 0:
        return np.zeros(0)
    if method == "auto":
        method = "closed" if has_closed_form(model) else "quadrature"
    if method == "closed":
        return closed_log_s(model, Y[None])[1][0].ravel()
    s, gs, _ = convolution_integrals(model, Y, with_grad=True)
    if s < ZERO_DENSITY_FLOOR:
        return np.zeros(Y.size)
    return (gs / s).ravel()


def beta_along(model: ClusterProcessModel, ybar, v: SmoothVectorField, method: str = "quadrature") -> float:
    """``sum_i (beta_i . v(x_i) + div v(x_i))``."""
    Y = _as_array(model, ybar)
    if Y.shape[0] == 0:
        return 0.0
    V = v.value(Y)
    if not np.any(V) and not np.any(v.divergence(Y)):
        return 0.0
    beta = beta_vector(model, Y, method).reshape(Y.shape)
    return float(np.sum(beta * V) + np.sum(v.divergence(Y)))


def B_pi(model: ClusterProcessModel, gbar: LiftedConfiguration, v: SmoothVectorField, method: str = "quadrature") -> float:
    """Sum of ``beta_along`` over the clusters of a lifted configuration."""
    return float(sum(beta_along(model, c, v, method) for c in gbar))


# ------------------------------------------------------------ batched evaluation


def beta_points(model: ClusterProcessModel, points: np.ndarray, sizes: np.ndarray, method: str = "auto",
                active: np.ndarray | None = None) -> np.ndarray:
    """Per-point ``beta`` for flat cluster-grouped points.

    Args:
        active: optional per-cluster mask; beta is only computed (and
            nonzero) for active clusters.
    """
    batch = LiftedBatch(points, np.repeat(np.arange(sizes.size), sizes), np.zeros(sizes.size, np.intp), sizes, 1)
    out = np.zeros_like(points)
    for n in np.unique(sizes):
        if n == 0:
            continue
        slots = batch.point_slots(int(n))
        if active is not None:
            slots = slots[active[sizes == n]]
        if slots.size == 0:
            continue
        logs, grad = log_lambda_star_batch(model, points[slots], method)
        grad[logs < np.log(ZERO_DENSITY_FLOOR)] = 0.0
        out[slots] = grad
    return out


def _touches(batch_points, sizes, window: Window) -> np.ndarray:
    owner = np.repeat(np.arange(sizes.size), sizes)
    return np.bincount(owner, weights=window.contains(batch_points), minlength=sizes.size) > 0


class DrawQuantities(NamedTuple):
    value: np.ndarray  # (N,) F(gamma)
    grad: np.ndarray  # (M, d) grad_x F at every lifted point
    lap: np.ndarray  # (M,) Laplacian in x


def _cylinder_on_batch(F: CylinderFunction, batch: LiftedBatch, with_lap: bool = False) -> DrawQuantities:
    draw = batch.draw_of_point
    T = F.pairings(batch.points, draw, batch.n_draws)
    Tp = T[draw]
    lap = F.point_laplacians(batch.points, Tp) if with_lap else None
    return DrawQuantities(F.values(T), F.point_gradients(batch.points, Tp), lap)


def _hull(*boxes) -> Window:
    lo = np.min([np.atleast_1d(b[0]) for b in boxes], axis=0)
    hi = np.max([np.atleast_1d(b[1]) for b in boxes], axis=0)
    return Window(lo, hi)


class IBPResult(NamedTuple):
    terms: tuple[Estimate, ...]
    residual: float
    se: float


def _residual(parts: Sequence[np.ndarray], scale: float = 1.0) -> IBPResult:
    terms = tuple(Estimate(scale * e.value, scale * e.se) for e in map(mean_se, parts))
    r = mean_se(np.sum(parts, axis=0))
    return IBPResult(terms, scale * r.value, scale * r.se)


def ibp_residual_lambda_star(model: ClusterProcessModel, f: SmoothTestFunction, g: SmoothTestFunction,
                             v: SmoothVectorField, N: int, rng=None, method: str = "auto") -> IBPResult:
    """Integration by parts under lambda* for lifted sums ``f~(x) = sum_i f(x_i)``.

    Terms ``int f~ grad_v g~``, ``int g~ grad_v f~`` and ``int f~ g~ beta^v``
    are estimated by Monte Carlo over centres (from lambda on the support
    inflated by r_trunc) and clusters; their sum should vanish.
    """
    rng = make_rng(rng)
    S = _hull(f.support(), g.support(), v.support())
    W = model.enlarged(S)
    mass = model.centre_mass(S)
    x = model.lam.sample(W, N, rng)
    sizes = model.eta.sample_sizes(N, rng)
    owner = np.repeat(np.arange(N), sizes)
    pts = model.eta.sample_offsets(sizes, rng) + x[owner]
    V = v.value(pts)
    per = lambda a: np.bincount(owner, weights=a, minlength=N)
    fs, gs = per(f.value(pts)), per(g.value(pts))
    dvf, dvg = per(np.sum(f.grad(pts) * V, axis=1)), per(np.sum(g.grad(pts) * V, axis=1))
    active = (fs != 0) & (gs != 0)
    beta = beta_points(model, pts, sizes, method, active)
    bv = per(np.sum(beta * V, axis=1) + v.divergence(pts))
    return _residual([fs * dvg, gs * dvf, fs * gs * bv], mass)


def _lifted_sample(model, K, N, rng) -> LiftedBatch:
    return sample_lifted_batch(model, K, N, rng)


def _B_per_draw(model, batch: LiftedBatch, beta: np.ndarray, v: SmoothVectorField) -> np.ndarray:
    return batch.sum_per_draw(np.sum(beta * v.value(batch.points), axis=1) + v.divergence(batch.points))


def _deriv_per_draw(batch: LiftedBatch, grad: np.ndarray, v: SmoothVectorField) -> np.ndarray:
    return batch.sum_per_draw(np.sum(grad * v.value(batch.points), axis=1))


def ibp_residual_mucl(model: ClusterProcessModel, F: CylinderFunction, G: CylinderFunction,
                      v: SmoothVectorField, N: int, rng=None, method: str = "auto") -> IBPResult:
    """``E[F grad_v G] + E[G grad_v F] + E[F G B^v]`` under the cluster measure,
    evaluated on lifted samples. Expect 0 within SE."""
    rng = make_rng(rng)
    K = _hull(F.support(), G.support(), v.support())
    batch = _lifted_sample(model, K, N, rng)
    qF, qG = _cylinder_on_batch(F, batch), _cylinder_on_batch(G, batch)
    beta = beta_points(model, batch.points, batch.sizes, method)
    B = _B_per_draw(model, batch, beta, v)
    return _residual([qF.value * _deriv_per_draw(batch, qG.grad, v),
                      qG.value * _deriv_per_draw(batch, qF.grad, v),
                      qF.value * qG.value * B])


def ibp_general(model: ClusterProcessModel, F: CylinderFunction, G: CylinderFunction, V: CylinderVectorField,
                N: int, rng=None, method: str = "auto") -> IBPResult:
    """Integration by parts along ``V = sum_i A_i v_i`` with
    ``B^V = sum_i (A_i B^{v_i} + grad_{v_i} A_i)``."""
    rng = make_rng(rng)
    K = _hull(F.support(), G.support(), V.support())
    batch = _lifted_sample(model, K, N, rng)
    qF, qG = _cylinder_on_batch(F, batch), _cylinder_on_batch(G, batch)
    beta = beta_points(model, batch.points, batch.sizes, method)
    dF = np.zeros(N)
    dG = np.zeros(N)
    BV = np.zeros(N)
    for A, v in V.terms:
        qA = _cylinder_on_batch(A, batch)
        dF += qA.value * _deriv_per_draw(batch, qF.grad, v)
        dG += qA.value * _deriv_per_draw(batch, qG.grad, v)
        BV += qA.value * _B_per_draw(model, batch, beta, v) + _deriv_per_draw(batch, qA.grad, v)
    return _residual([qF.value * dG, qG.value * dF, qF.value * qG.value * BV])


# ------------------------------------------------------------ Dirichlet form and generator


def dirichlet_per_draw(F: CylinderFunction, G: CylinderFunction, batch: LiftedBatch) -> np.ndarray:
    """``sum over points of grad F . grad G`` for each draw."""
    gF = _cylinder_on_batch(F, batch).grad
    gG = gF if G is F else _cylinder_on_batch(G, batch).grad
    return batch.sum_per_draw(np.sum(gF * gG, axis=1))


def generator_parts(model: ClusterProcessModel, F: CylinderFunction, batch: LiftedBatch,
                    method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Diffusive ``-sum Laplacian F`` and drift ``-sum grad F . beta`` per draw."""
    q = _cylinder_on_batch(F, batch, with_lap=True)
    active = batch.sum_per_cluster(np.any(q.grad != 0, axis=1)) > 0
    beta = beta_points(model, batch.points, batch.sizes, method, active)
    return -batch.sum_per_draw(q.lap), -batch.sum_per_draw(np.sum(q.grad * beta, axis=1))


def generator_apply(model: ClusterProcessModel, F: CylinderFunction, gbar: LiftedConfiguration,
                    method: str = "auto") -> float:
    """``-sum over clusters (Laplacian of I F + grad I F . beta)`` at one lifted configuration."""
    batch = LiftedBatch.from_lifted([gbar], gbar.dim)
    if batch.points.shape[0] == 0:
        return 0.0
    diff, drift = generator_parts(model, F, batch, method)
    return float(diff[0] + drift[0])


def dirichlet_form(model: ClusterProcessModel, F: CylinderFunction, G: CylinderFunction, N: int, rng=None,
                   K: Window | None = None) -> tuple[Estimate, np.ndarray]:
    """Monte Carlo Dirichlet form with the per-draw summands."""
    rng = make_rng(rng)
    K = _hull(F.support(), G.support()) if K is None else K
    batch = _lifted_sample(model, K, N, rng)
    per = dirichlet_per_draw(F, G, batch)
    return mean_se(per), per


class DirichletGeneratorResult(NamedTuple):
    lhs: Estimate
    rhs: Estimate
    diffusive: Estimate
    drift: Estimate
    residual: float
    se: float
    min_form_FF: float


def dirichlet_vs_generator(model: ClusterProcessModel, F: CylinderFunction, G: CylinderFunction, N: int,
                           rng=None, method: str = "auto") -> DirichletGeneratorResult:
    """Compare ``E(F, G)`` with ``E[(H F) G]`` on one lifted sample stream."""
    rng = make_rng(rng)
    K = _hull(F.support(), G.support())
    batch = _lifted_sample(model, K, N, rng)
    lhs = dirichlet_per_draw(F, G, batch)
    diff, drift = generator_parts(model, F, batch, method)
    Gv = _cylinder_on_batch(G, batch).value
    rhs = (diff + drift) * Gv
    r = mean_se(lhs - rhs)
    ff = dirichlet_per_draw(F, F, batch)
    return DirichletGeneratorResult(mean_se(lhs), mean_se(rhs), mean_se(diff * Gv), mean_se(drift * Gv),
                                    r.value, r.se, float(ff.min()) if ff.size else 0.0)
