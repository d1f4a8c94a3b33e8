import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissoncluster import catalog
from poissoncluster.configspace import LiftedBatch, Window
from poissoncluster.errors import ModelError
from poissoncluster.measures import ClusterLaw, ClusterProcessModel, ExpWeight, FixedOffsets, Lebesgue
from poissoncluster.quasiinv import (CompactDiffeo, log_rho_batch, normaliser, quasi_invariance_residual,
                                     rho_base, rho_lambda_star, rn_density_batch, rn_l2_check)
from poissoncluster.sampler import sample_lifted_batch
from poissoncluster.testfunctions import Bump


@pytest.fixture(scope="module")
def phi():
    return CompactDiffeo(Bump([0.5], 1.0), 0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3))
def test_inverse_round_trip(x):
    phi = CompactDiffeo(Bump([0.5], 1.0), 0.5)
    assert phi.inverse(phi.value(np.array([[x]])))[0, 0] == pytest.approx(x, abs=1e-12)


def test_contraction_bound_enforced():
    with pytest.raises(ValueError):
        CompactDiffeo(Bump([0.0], 0.5), 5.0)


def test_jacobian_matches_finite_difference(phi):
    x = np.linspace(-0.4, 1.4, 13)[:, None]
    h = 1e-6
    fd = (phi.value(x + h) - phi.value(x - h))[:, 0] / (2 * h)
    assert np.allclose(phi.jacobian_det(x), fd, atol=1e-7)


def test_identity_gives_unit_density(pairs_model):
    ident = CompactDiffeo.identity()
    assert rho_lambda_star(pairs_model, ident, np.array([[0.2], [0.9]])) == pytest.approx(1.0)


def test_clusters_outside_support_have_unit_density(pairs_model, phi):
    assert rho_lambda_star(pairs_model, phi, np.array([[5.0], [6.0]])) == 1.0


def test_single_point_density_is_inverse_jacobian(pairs_model, phi):
    for y in (0.1, 0.5, 1.2):
        x = phi.inverse(np.array([[y]]))
        expect = 1.0 / phi.jacobian_det(x)[0]
        assert rho_lambda_star(pairs_model, phi, np.array([[y]])) == pytest.approx(expect, rel=1e-9)
        assert rho_base(Lebesgue(1), phi, [[y]])[0] == pytest.approx(expect, rel=1e-12)


def test_composition_with_inverse(pairs_model, phi):
    Y = np.array([[0.3], [0.8]])
    a = rho_lambda_star(pairs_model, phi.inverted(), Y)
    b = rho_lambda_star(pairs_model, phi, phi.value(Y))
    assert a * b == pytest.approx(1.0, rel=1e-9)


def test_density_only_depends_on_clusters_near_support(pairs_model, phi):
    Y = np.array([[[0.3], [0.8]], [[9.0], [10.0]]])
    lr = log_rho_batch(pairs_model, phi, Y)
    assert lr[1] == 0.0
    assert lr[0] != 0.0


def test_non_absolutely_continuous_law_rejected(phi):
    m = ClusterProcessModel(Lebesgue(1), ClusterLaw(np.array([0.0, 0.0, 1.0]), FixedOffsets(np.array([[0.0], [1.0]]))))
    with pytest.raises(ModelError):
        rho_lambda_star(m, phi, np.array([[0.0], [1.0]]))


def test_normaliser_vanishes(pairs_model, phi):
    est = normaliser(pairs_model, phi, N=100_000, rng=3)
    assert abs(est.value) <= 4 * est.se


def test_identity_density_is_one_per_draw(pairs_model, rng):
    b = sample_lifted_batch(pairs_model, Window([0.0], [1.0]), 100, rng)
    assert np.allclose(rn_density_batch(pairs_model, CompactDiffeo.identity(), b, norm=0.0), 1.0)


def test_quasi_invariance_small_sample(pairs_model, phi, rng):
    F = catalog.cylinder_functions()[0]
    r = quasi_invariance_residual(pairs_model, phi, F, 20_000, rng)
    assert abs(r.residual) <= 4 * r.se
    assert abs(r.mean_R.value - 1.0) <= 4 * r.mean_R.se


def test_l2_check_identity_and_shift(rng):
    chk = rn_l2_check(Lebesgue(1), CompactDiffeo.identity(), 1000, rng)
    assert chk.closed == pytest.approx(1.0)
    assert chk.empirical.value == pytest.approx(1.0)
    phi = CompactDiffeo(Bump([0.0], 1.5), -0.6)
    chk = rn_l2_check(ExpWeight(), phi, 100_000, rng)
    assert chk.closed > 1.0
    assert abs(chk.empirical.value - chk.closed) <= 4 * chk.empirical.se
