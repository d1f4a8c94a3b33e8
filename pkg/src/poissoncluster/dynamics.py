"""Equilibrium diffusion of the cluster process.

Each cluster vector moves as an independent distorted Brownian motion on
R^{nd}:

    dX = beta(X) dt + sqrt(2) dW,

whose generator ``Laplacian + beta . grad`` is minus the Dirichlet
operator, so the lifted Poisson measure (and its projection) is
stationary. The SDE is integrated by Euler-Maruyama.

Paths start from the stationary law: clusters hitting ``K`` inflated by
``R_drift = 4 sqrt(2 T)`` are sampled, which keeps clusters that could
reach K by time T. Clusters that wander off are kept and evolved;
observables only see points through their compactly supported test
functions inside K.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

from .calculus import beta_points
from .configspace import LiftedBatch, Window
from .measures import ClusterProcessModel
from .sampler import sample_lifted_batch
from .stats import Estimate, make_rng, mean_se
from .testfunctions import CylinderFunction

MAX_HALVINGS = 10


def drift_radius(T: float) -> float:
    return 4.0 * np.sqrt(2.0 * T)


@dataclass
class DynamicsState:
    """Positions of every path's clusters at one time.

    ``paths`` stores all paths as one batch (one draw per path).
    """

    paths: LiftedBatch
    time: float
    buffer: Window
    notes: dict = field(default_factory=dict)


def _drift(model, batch: LiftedBatch, method: str) -> np.ndarray:
    with np.errstate(all="ignore"):
        return beta_points(model, batch.points, batch.sizes, method)


def em_step(model: ClusterProcessModel, state: DynamicsState, dt: float, rng=None, method: str = "auto") -> DynamicsState:
    """One Euler-Maruyama step of length dt.

    A non-finite drift rejects the step; dt is halved and the interval is
    covered by substeps, up to ``MAX_HALVINGS`` times.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    rng = make_rng(rng)
    x = state.paths.points
    for k in range(MAX_HALVINGS + 1):
        h = dt / 2**k
        y = x.copy()
        ok = True
        for _ in range(2**k):
            b = _drift(model, state.paths.with_points(y), method)
            if not np.all(np.isfinite(b)):
                ok = False
                break
            y = y + b * h + np.sqrt(2.0 * h) * rng.standard_normal(y.shape)
        if ok:
            notes = dict(state.notes)
            if k:
                notes["halvings"] = notes.get("halvings", 0) + k
            return DynamicsState(state.paths.with_points(y), state.time + dt, state.buffer, notes)
    raise FloatingPointError(f"drift not finite after {MAX_HALVINGS} step halvings at t={state.time}")


def initial_state(model: ClusterProcessModel, K: Window, T: float, n_paths: int, rng=None) -> DynamicsState:
    rng = make_rng(rng)
    K_drift = K.inflate(drift_radius(T))
    batch = sample_lifted_batch(model, K_drift, n_paths, rng)
    buffer = K_drift.inflate(model.r_trunc)
    return DynamicsState(batch, 0.0, buffer, {"r_drift": drift_radius(T), "r_trunc": model.r_trunc})


def observe(obs, batch: LiftedBatch) -> np.ndarray:
    """Per-path value of a test function pairing or a cylinder function."""
    draw = batch.draw_of_point
    if isinstance(obs, CylinderFunction):
        return obs.values(obs.pairings(batch.points, draw, batch.n_draws))
    vals = obs.value(batch.points) if batch.points.size else np.zeros(0)
    return np.bincount(draw, weights=vals, minlength=batch.n_draws)


@dataclass
class Trajectory:
    """Observable values ``values[j, c, p]`` for observable j, checkpoint c, path p."""

    times: np.ndarray
    values: np.ndarray
    metadata: dict

    def rows(self):
        """(path, time, observable id, value) rows."""
        J, C, P = self.values.shape
        for p in range(P):
            for c in range(C):
                for j in range(J):
                    yield p, float(self.times[c]), j, float(self.values[j, c, p])


def simulate(model: ClusterProcessModel, K: Window, T: float, dt: float, n_paths: int,
             observables: Sequence, rng=None, checkpoints: Sequence[float] | None = None,
             method: str = "auto") -> Trajectory:
    """Run stationary-start paths to time T, recording observables at checkpoints."""
    if T < 0 or not dt > 0:
        raise ValueError("need T >= 0 and dt > 0")
    rng = make_rng(rng)
    checkpoints = sorted(set([0.0] + list(checkpoints if checkpoints is not None else [T])))
    state = initial_state(model, K, T, n_paths, rng)
    steps = {int(round(c / dt)): c for c in checkpoints}
    n_steps = int(round(T / dt))
    values = np.zeros((len(observables), len(checkpoints), n_paths))
    col = {c: i for i, c in enumerate(checkpoints)}
    size0 = state.paths.sizes.copy()
    for s in range(n_steps + 1):
        if s in steps:
            for j, ob in enumerate(observables):
                values[j, col[steps[s]]] = observe(ob, state.paths)
        if s < n_steps:
            state = em_step(model, state, dt, rng, method)
    owner = state.paths.cluster_of_point
    centroid = np.zeros((state.paths.n_clusters, model.dim))
    if owner.size:
        np.add.at(centroid, owner, state.paths.points)
        centroid /= np.maximum(state.paths.sizes, 1)[:, None]
    escaped = int(np.sum(~state.buffer.contains(centroid[state.paths.sizes > 0])))
    meta = {
        "dt": dt, "T": T, "n_paths": n_paths, "window": K.as_dict(), "buffer": state.buffer.as_dict(),
        "clusters": int(state.paths.n_clusters), "escaped_buffer": escaped,
        "sizes_conserved": bool(np.array_equal(size0, state.paths.sizes)),
        "truncation_bias_bound": state.paths.metadata.get("truncation_bias_bound"),
        "boundary_note": "clusters starting farther than r_drift from K are not simulated",
        **state.notes,
    }
    return Trajectory(np.asarray(checkpoints), values, meta)


def paired_mean_drift(a: np.ndarray, b: np.ndarray) -> Estimate:
    """Mean of b minus mean of a over paired paths."""
    return mean_se(b - a)


def paired_variance_drift(a: np.ndarray, b: np.ndarray) -> Estimate:
    """Variance of b minus variance of a, from per-path centred squares."""
    n = a.size
    d = (b - b.mean()) ** 2 - (a - a.mean()) ** 2
    est = mean_se(d)
    return Estimate(est.value * n / max(n - 1, 1), est.se * n / max(n - 1, 1))


class StationarityRow(NamedTuple):
    observable: int
    time: float
    mean_drift: Estimate
    var_drift: Estimate
    ks_pvalue: float
    flagged: bool


def stationarity_report(traj: Trajectory, direct: np.ndarray | None = None, level: float = 0.01,
                        k: float = 3.0) -> list[StationarityRow]:
    """Time slices against t = 0 (paired mean and variance drift) and against a
    direct ensemble ``direct[j, :]`` (two-sample KS, Bonferroni corrected).

    A row is flagged when a drift exceeds k SE or the corrected KS p-value
    falls below ``level``.
    """
    J, C, _ = traj.values.shape
    later = [c for c in range(C) if traj.times[c] > 0] or [0]
    n_tests = J * len(later)
    rows = []
    for j in range(J):
        base = traj.values[j, 0]
        for c in later:
            cur = traj.values[j, c]
            md, vd = paired_mean_drift(base, cur), paired_variance_drift(base, cur)
            p = 1.0
            if direct is not None and np.ptp(np.concatenate([cur, direct[j]])) > 0:
                p = float(sps.ks_2samp(cur, direct[j]).pvalue)
            bad = (abs(md.value) > k * md.se if md.se > 0 else md.value != 0) or \
                  (abs(vd.value) > k * vd.se if vd.se > 0 else vd.value != 0) or \
                  min(1.0, p * n_tests) < level
            rows.append(StationarityRow(j, float(traj.times[c]), md, vd, p, bool(bad)))
    return rows


def direct_ensemble(model: ClusterProcessModel, K: Window, observables: Sequence, n: int, rng=None) -> np.ndarray:
    """Observable values on fresh direct samples of the cluster process on K."""
    rng = make_rng(rng)
    batch = sample_lifted_batch(model, K, n, rng)
    return np.stack([observe(ob, batch) for ob in observables]) if observables else np.zeros((0, n))


def symmetry_from_trajectory(traj: Trajectory, i: int, j: int, c: int) -> Estimate:
    """``E[F_0 G_t] - E[G_0 F_t]`` for observables i (F) and j (G) at checkpoint c."""
    F0, G0 = traj.values[i, 0], traj.values[j, 0]
    Ft, Gt = traj.values[i, c], traj.values[j, c]
    return mean_se(F0 * Gt - G0 * Ft)


def symmetry_residual(model: ClusterProcessModel, F, G, t: float, n_paths: int, K: Window | None = None,
                      dt: float = 1e-3, rng=None) -> Estimate:
    """Time-reversal check ``E[F(gamma_0) G(gamma_t)] - E[G(gamma_0) F(gamma_t)]``."""
    if not t > 0:
        raise ValueError("t must be positive")
    if K is None:
        boxes = [F.support(), G.support()]
        K = Window(np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0))
    traj = simulate(model, K, t, dt, n_paths, [F, G], rng)
    return symmetry_from_trajectory(traj, 0, 1, 1)


def autocorrelation(traj: Trajectory, j: int) -> list[tuple[float, float]]:
    """Correlation of observable j between t = 0 and each checkpoint (reported only)."""
    base = traj.values[j, 0]
    out = []
    for c, t in enumerate(traj.times):
        cur = traj.values[j, c]
        sd = base.std() * cur.std()
        out.append((float(t), float(np.mean((base - base.mean()) * (cur - cur.mean())) / sd) if sd > 0 else np.nan))
    return out


class PairDiffusionCheck(NamedTuple):
    diff_variance: Estimate  # Var(y1 - y2) at time T; stationary value 2
    z2_variance: Estimate  # Var((y1 - y2)/sqrt 2); stationary value 1
    sum_drift: Estimate  # mean increment of (y1 + y2)/sqrt 2; 0 for driftless motion
    sum_increment_variance: Estimate  # Var of that increment; 2 T


def pair_diffusion_check(model: ClusterProcessModel, T: float = 5.0, dt: float = 1e-3, n_paths: int = 20000,
                         rng=None, method: str = "auto") -> PairDiffusionCheck:
    """Evolve a single 2-point cluster per path, started at the origin.

    For Gaussian offsets the difference coordinate is an Ornstein-Uhlenbeck
    process relaxing to its stationary law, and the sum coordinate is a
    Brownian motion with variance 2t.
    """
    rng = make_rng(rng)
    d = model.dim
    pts = np.zeros((2 * n_paths, d))
    batch = LiftedBatch(pts, np.repeat(np.arange(n_paths), 2), np.arange(n_paths), np.full(n_paths, 2), n_paths)
    state = DynamicsState(batch, 0.0, Window.everywhere(d))
    for _ in range(int(round(T / dt))):
        state = em_step(model, state, dt, rng, method)
    Y = state.paths.points.reshape(n_paths, 2, d)[:, :, 0]
    diff = Y[:, 0] - Y[:, 1]
    z1 = (Y[:, 0] + Y[:, 1]) / np.sqrt(2.0)

    def var_est(a):
        c = (a - a.mean()) ** 2
        e = mean_se(c)
        return Estimate(e.value * a.size / (a.size - 1), e.se)

    return PairDiffusionCheck(var_est(diff), var_est(diff / np.sqrt(2.0)), mean_se(z1), var_est(z1))
