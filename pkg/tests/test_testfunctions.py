import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissoncluster.testfunctions import (Bump, CylinderFunction, OuterFunction, Plateau, SmoothVectorField,
                                          SumFunction)


def _fd_grad(f, x, h=1e-6):
    e = np.eye(x.size)
    return np.array([(f.value(x + h * v) - f.value(x - h * v)) / (2 * h) for v in e]).ravel()


def _fd_lap(f, x, h=1e-4):
    e = np.eye(x.size)
    return sum((f.value(x + h * v) - 2 * f.value(x) + f.value(x - h * v)) / h**2 for v in e)


@pytest.mark.parametrize("f", [
    Bump([0.3], 1.0, 2.0),
    Bump([0.0, 1.0], 1.5, 1.0),
    Plateau([0.0], [1.0], 0.3, 1.5),
    SumFunction([Bump([0.0], 1.0), Bump([0.5], 0.7)], [1.0, -2.0]),
])
def test_derivatives_match_finite_differences(f):
    rng = np.random.default_rng(0)
    lo, hi = f.support()
    for _ in range(20):
        x = rng.uniform(lo, hi)
        g = f.grad(x[None])[0]
        assert np.allclose(g, _fd_grad(f, x[None]), atol=1e-6 * max(1.0, np.abs(g).max()))
        lap = f.laplacian(x[None])[0]
        assert abs(lap - _fd_lap(f, x[None])[0]) <= 1e-3 * max(1.0, abs(lap))


def test_bump_support_and_peak():
    b = Bump([1.0], 0.5, 3.0)
    assert b.value(np.array([[1.6]]))[0] == 0.0
    assert b.value(np.array([[1.0]]))[0] == pytest.approx(3.0 / np.e)
    assert b.sup_abs() == pytest.approx(3.0 / np.e)


def test_bump_lipschitz_bounds_gradient():
    b = Bump([0.0], 0.8, 2.0)
    x = np.linspace(-0.8, 0.8, 4001)[:, None]
    assert np.abs(b.grad(x)).max() <= b.lipschitz()


def test_plateau_brackets_indicator():
    p = Plateau([0.0], [1.0], 0.1, 2.0)
    assert p.value(np.array([[0.5]]))[0] == pytest.approx(2.0)
    assert p.value(np.array([[-0.2]]))[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_outer_function_gradient(t0, t1):
    for f in (OuterFunction.tanh([1.0, -0.5], 0.2), OuterFunction.gaussian([0.5, -0.5], 1.3),
              OuterFunction.squashed_quadratic([0.3, 0.1], [[0.2, 0.1], [0.1, -0.3]])):
        t = np.array([[t0, t1]])
        h = 1e-6
        fd = [(f.value(t + h * e) - f.value(t - h * e))[0] / (2 * h) for e in np.eye(2)]
        assert np.allclose(f.grad(t)[0], fd, atol=1e-6)
        H = f.hessian(t)[0]
        fdH = np.array([(f.grad(t + h * e) - f.grad(t - h * e))[0] / (2 * h) for e in np.eye(2)])
        assert np.allclose(H, fdH, atol=1e-5)


def test_constant_cylinder_has_zero_gradient():
    F = CylinderFunction.constant(2.5)
    pts = np.array([[0.1], [0.4]])
    T = F.pairings(pts)
    assert F.values(T)[0] == 2.5
    assert np.all(F.point_gradients(pts, np.repeat(T, 2, axis=0)) == 0)


def test_vector_field_divergence():
    v = SmoothVectorField([Bump([0.0, 0.0], 1.0), Bump([0.2, 0.1], 1.0, 2.0)])
    x = np.array([[0.1, -0.2]])
    h = 1e-6
    fd = sum((v.value(x + h * e)[0, k] - v.value(x - h * e)[0, k]) / (2 * h) for k, e in enumerate(np.eye(2)))
    assert v.divergence(x)[0] == pytest.approx(fd, abs=1e-6)
    assert np.all(SmoothVectorField.zero(2).value(x) == 0)
