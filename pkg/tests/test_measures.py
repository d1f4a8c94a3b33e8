import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from poissoncluster.configspace import Window
from poissoncluster.errors import DivergenceError, ModelError
from poissoncluster.measures import (BumpDensity, ClusterLaw, ClusterProcessModel, ExchangeableGaussian, ExpWeight,
                                     GaussianPoints, HeavyTailPoints, Lebesgue, closed_log_s, convolution_integrals,
                                     doubling_integral, lambda_star_density, lambda_star_gaussian_closed,
                                     lambda_star_region_mass, log_lambda_star_batch, orthogonal_decomposition_check)
from poissoncluster.properness import mean_droplet_fubini


def test_s2_at_origin(pairs_model):
    s, _, _ = convolution_integrals(pairs_model, np.zeros((2, 1)))
    assert s == pytest.approx(1.0 / (2.0 * np.sqrt(np.pi)), rel=1e-10)


def test_s1_is_constant(pairs_model):
    for y in (-3.0, 0.0, 2.5):
        assert convolution_integrals(pairs_model, np.array([[y]]))[0] == pytest.approx(1.0, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2.5, 2.5), min_size=2, max_size=3))
def test_quadrature_matches_gaussian_closed_form(pairs_model, ys):
    n = len(ys)
    y = np.array(ys)
    q = lambda_star_density(pairs_model, y[:, None]).value / pairs_model.eta.size_probs[n]
    assert q == pytest.approx(lambda_star_gaussian_closed(n, y), rel=1e-8)


def test_closed_form_rejects_other_models():
    m = ClusterProcessModel(Lebesgue(1), ClusterLaw(np.array([0.0, 0.5, 0.5]), GaussianPoints(2.0, 1)))
    with pytest.raises(ModelError):
        lambda_star_gaussian_closed(2, [0.0, 1.0], m)


def test_empty_cluster_density_is_an_error(pairs_model):
    with pytest.raises(ModelError, match="infinite"):
        lambda_star_density(pairs_model, np.zeros((0, 1)))


def test_two_dimensional_quadrature_matches_closed():
    m = ClusterProcessModel(Lebesgue(2), ClusterLaw(np.array([0.0, 0.0, 1.0]), GaussianPoints(0.8, 2)))
    Y = np.array([[0.1, -0.3], [0.6, 0.2]])
    logs, grad = closed_log_s(m, Y[None])
    s, gs, _ = convolution_integrals(m, Y, with_grad=True)
    assert s == pytest.approx(np.exp(logs[0]), rel=1e-9)
    assert np.allclose(gs / s, grad[0], atol=1e-8)


def test_exchangeable_gaussian_closed_matches_quadrature():
    m = ClusterProcessModel(Lebesgue(1), ClusterLaw(np.array([0.0, 0.2, 0.4, 0.4]), ExchangeableGaussian(1.2, 0.4, 1, 3)))
    for Y in (np.array([[0.0], [0.7]]), np.array([[0.3], [-0.4], [1.1]])):
        logs, grad = closed_log_s(m, Y[None])
        q, _ = log_lambda_star_batch(m, Y[None], method="quadrature")
        assert logs[0] == pytest.approx(q[0], abs=1e-9)


def test_expweight_box_mass_matches_integral():
    lam = ExpWeight()
    for a, b in ((-1.0, 2.0), (0.5, 1.5), (-3.0, -1.0)):
        ref, _ = integrate.quad(lambda x: np.exp(abs(x)), a, b)
        assert lam.box_mass(np.array([a]), np.array([b])) == pytest.approx(ref, rel=1e-12)


def test_bump_density_total_mass_and_sampler(rng):
    lam = BumpDensity(np.array([0.5]), 1.0, 3.0)
    assert lam.mass(Window([-5.0], [5.0])) == pytest.approx(3.0, rel=1e-6)
    x = lam.sample(Window([0.0], [1.5]), 20000, rng)
    assert np.all((x >= 0.0) & (x <= 1.5))


def test_truncation_radius_bounds_the_tail(pairs_model):
    assert pairs_model.eta.tail(pairs_model.r_trunc) == pytest.approx(pairs_model.eps_trunc, rel=1e-6)


def test_doubling_detector_flags_growth():
    with pytest.raises(DivergenceError) as info:
        doubling_integral(lambda L: L**2, 1.0, "quadratic growth")
    rep = info.value.report
    assert len(rep.estimates) >= 5
    v, err, _, _ = doubling_integral(lambda L: 1.0 - np.exp(-L), 1.0, "saturating")
    assert v == pytest.approx(1.0, abs=1e-9)


def test_heavy_tail_with_exponential_intensity_diverges():
    m = ClusterProcessModel(ExpWeight(), ClusterLaw(np.array([0.0, 1.0]), HeavyTailPoints()))
    with pytest.raises(DivergenceError):
        convolution_integrals(m, np.array([[0.3]]))


def test_region_mass_matches_fubini(pairs_model, rng):
    K = Window([0.0], [1.0])
    est = lambda_star_region_mass(pairs_model, K, 100_000, rng)
    ref = mean_droplet_fubini(pairs_model, K, 12.0)
    assert abs(est.value - ref) <= 3 * est.se + 1e-9


def test_orthogonal_decomposition(pairs_model, rng):
    chk = orthogonal_decomposition_check(pairs_model, 2, Window([0.0], [1.0]), Window([-0.5], [1.0]),
                                         N=200_000, rng=rng)
    assert abs(chk.residual) <= 3 * chk.se + 1e-9
