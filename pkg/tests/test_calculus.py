import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissoncluster import catalog
from poissoncluster.calculus import (B_pi, CylinderVectorField, beta_along, beta_vector, dirichlet_form,
                                     directional_derivative, gamma_gradient, generator_apply, ibp_general,
                                     ibp_residual_lambda_star, ibp_residual_mucl)
from poissoncluster.configspace import (ClusterVector, Configuration, LiftedConfiguration, Window, cylinder_eval)
from poissoncluster.testfunctions import Bump, CylinderFunction, OuterFunction, SmoothVectorField

W = Window([-5.0], [5.0])


def _gamma(xs):
    return Configuration.from_points(np.asarray(xs, dtype=float)[:, None], W)


def test_gradient_matches_moving_one_point():
    F = catalog.cylinder_functions()[1]
    xs = [0.1, 0.7, 1.3]
    h = 1e-6
    grads = dict((float(x[0]), g[0]) for x, g in gamma_gradient(F, _gamma(xs)))
    for k, x in enumerate(xs):
        up, dn = list(xs), list(xs)
        up[k] += h
        dn[k] -= h
        fd = (cylinder_eval(F, _gamma(up)) - cylinder_eval(F, _gamma(dn))) / (2 * h)
        assert grads.get(x, 0.0) == pytest.approx(fd, abs=1e-7 * max(1.0, abs(fd)))


def test_directional_derivative_matches_flow():
    F = catalog.cylinder_functions()[0]
    v = catalog.vector_fields()[0]
    xs = np.array([0.2, 0.5, 1.1])
    h = 1e-6
    flow = lambda t: _gamma(xs + t * v.value(xs[:, None])[:, 0])
    fd = (cylinder_eval(F, flow(h)) - cylinder_eval(F, flow(-h))) / (2 * h)
    assert directional_derivative(F, _gamma(xs), v) == pytest.approx(fd, abs=1e-7)


def test_singleton_clusters_have_zero_beta(pairs_model):
    assert np.allclose(beta_vector(pairs_model, np.array([[0.4]])), 0.0, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_pair_beta_closed_form(pairs_model, a, b):
    y = np.array([a, b])
    beta = beta_vector(pairs_model, y[:, None])
    assert np.allclose(beta, -(y - y.mean()), atol=1e-8)
    assert beta[0] == pytest.approx(-beta[1], abs=1e-8)


def test_beta_along_and_B_pi(pairs_model):
    v = catalog.vector_fields()[0]
    Y = np.array([[0.1], [0.9]])
    beta = -(Y - Y.mean())
    expect = float(np.sum(beta * v.value(Y)) + np.sum(v.divergence(Y)))
    assert beta_along(pairs_model, Y, v) == pytest.approx(expect, abs=1e-8)
    g = LiftedConfiguration([ClusterVector(Y), ClusterVector([[3.0]])])
    single = beta_along(pairs_model, [[3.0]], v)
    assert B_pi(pairs_model, g, v) == pytest.approx(expect + single, abs=1e-8)


def test_generator_by_hand(pairs_model):
    f = Bump([0.5], 1.0, 2.0)
    F = CylinderFunction(OuterFunction.tanh([1.0]), [f])
    Y = np.array([[0.2], [0.7]])
    g = LiftedConfiguration([ClusterVector(Y)])
    t = f.value(Y).sum()
    d1 = 1 - np.tanh(t) ** 2
    d2 = -2 * np.tanh(t) * d1
    grads = f.grad(Y)[:, 0]
    lap = np.sum(d2 * grads**2 + d1 * f.laplacian(Y))
    beta = -(Y[:, 0] - Y.mean())
    expect = -(lap + np.sum(d1 * grads * beta))
    assert generator_apply(pairs_model, F, g) == pytest.approx(expect, abs=1e-8)


def test_constant_functions_have_zero_energy(pairs_model, rng):
    C = CylinderFunction.constant(2.0)
    F = catalog.cylinder_functions()[0]
    est, per = dirichlet_form(pairs_model, C, F, 500, rng, K=Window([0.0], [1.0]))
    assert np.all(per == 0.0)


def test_dirichlet_form_is_symmetric(pairs_model):
    F, G = catalog.cylinder_functions()[:2]
    a, pa = dirichlet_form(pairs_model, F, G, 500, 1)
    b, pb = dirichlet_form(pairs_model, G, F, 500, 1)
    assert np.allclose(pa, pb)


def test_ibp_under_lambda_star(pairs_model, rng):
    f, g = catalog.bumps()[:2]
    v = catalog.vector_fields()[0]
    r = ibp_residual_lambda_star(pairs_model, f, g, v, 50_000, rng)
    assert abs(r.residual) <= 4 * r.se


def test_ibp_under_cluster_measure(pairs_model, rng):
    F, G = catalog.cylinder_functions()[:2]
    r = ibp_residual_mucl(pairs_model, F, G, catalog.vector_fields()[1], 20_000, rng)
    assert abs(r.residual) <= 4 * r.se
    V = CylinderVectorField([(catalog.cylinder_functions()[2], catalog.vector_fields()[0])])
    r = ibp_general(pairs_model, F, G, V, 20_000, rng)
    assert abs(r.residual) <= 4 * r.se
