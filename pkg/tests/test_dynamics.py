import numpy as np
import pytest

from poissoncluster import catalog, dynamics
from poissoncluster.configspace import LiftedBatch, Window
from poissoncluster.dynamics import (DynamicsState, Trajectory, em_step, pair_diffusion_check, simulate,
                                     stationarity_report, symmetry_from_trajectory)
from poissoncluster.stats import mean_se
from poissoncluster.testfunctions import Bump


def test_single_points_are_brownian(rng):
    model = catalog.gaussian_pairs_model(size_probs=[0.0, 1.0])
    n = 20_000
    b = LiftedBatch(np.zeros((n, 1)), np.arange(n), np.arange(n), np.ones(n, dtype=int), n)
    state = DynamicsState(b, 0.0, Window.everywhere(1))
    for _ in range(10):
        state = em_step(model, state, 0.05, rng)
    x = state.paths.points[:, 0]
    assert state.time == pytest.approx(0.5)
    assert abs(x.var() - 1.0) <= 4 * np.sqrt(2.0 / n)


def test_non_positive_dt_rejected(pairs_model):
    with pytest.raises(ValueError):
        simulate(pairs_model, Window([0.0], [1.0]), 1.0, 0.0, 10, [Bump([0.5], 1.0)])


def test_zero_horizon_keeps_initial_values(pairs_model, rng):
    traj = simulate(pairs_model, Window([0.0], [1.0]), 0.0, 1e-2, 50, [Bump([0.5], 1.0)], rng)
    assert traj.times.tolist() == [0.0]
    assert traj.metadata["sizes_conserved"]


def test_sizes_conserved_and_rows(pairs_model, rng):
    traj = simulate(pairs_model, Window([0.0], [1.0]), 0.1, 1e-2, 20, catalog.observables(), rng,
                    checkpoints=[0.05, 0.1])
    assert traj.metadata["sizes_conserved"]
    assert traj.values.shape == (3, 3, 20)
    assert len(list(traj.rows())) == 3 * 3 * 20


def test_empty_model_observables_vanish(rng):
    model = catalog.gaussian_pairs_model(size_probs=[1.0])
    traj = simulate(model, Window([0.0], [1.0]), 0.05, 1e-2, 10, [Bump([0.5], 1.0)], rng)
    assert np.all(traj.values == 0.0)


def test_symmetry_of_identical_observables_is_zero(pairs_model, rng):
    f = Bump([0.5], 1.0)
    traj = simulate(pairs_model, Window([0.0], [1.0]), 0.05, 1e-2, 30, [f, f], rng)
    assert symmetry_from_trajectory(traj, 0, 1, 1).value == 0.0


def test_shifted_slice_is_flagged():
    rng = np.random.default_rng(0)
    a = rng.normal(size=2000)
    values = np.stack([np.stack([a, a + 0.5])])
    rows = stationarity_report(Trajectory(np.array([0.0, 1.0]), values, {}), direct=a[None])
    assert rows[0].flagged
    rows = stationarity_report(Trajectory(np.array([0.0, 1.0]), np.stack([np.stack([a, a])]), {}))
    assert not rows[0].flagged


def test_pair_difference_relaxes(pairs_model, rng):
    chk = pair_diffusion_check(pairs_model, T=1.0, dt=1e-2, n_paths=10_000, rng=rng)
    expect = 2.0 * (1.0 - np.exp(-2.0))
    assert abs(chk.diff_variance.value - expect) <= 0.1
    assert abs(chk.sum_increment_variance.value - 2.0) <= 0.15


def test_negated_drift_is_detected(pairs_model, rng, monkeypatch):
    orig = dynamics._drift
    monkeypatch.setattr(dynamics, "_drift", lambda m, b, meth: -orig(m, b, meth))
    chk = pair_diffusion_check(pairs_model, T=1.0, dt=1e-2, n_paths=5000, rng=rng)
    assert chk.diff_variance.value > 2.0 * (1.0 - np.exp(-2.0)) + 1.0
