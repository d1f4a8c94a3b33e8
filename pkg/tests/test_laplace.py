import numpy as np
import pytest

from poissoncluster import catalog
from poissoncluster.configspace import Configuration, Window
from poissoncluster.laplace import (indicator_bracket, laplace_empirical, laplace_empirical_batch,
                                    laplace_mucl_closed, laplace_mucl_lifted, laplace_poisson_closed)
from poissoncluster.measures import ClusterLaw, ClusterProcessModel, GaussianPoints, Lebesgue
from poissoncluster.sampler import sample_mucl_batch, sample_poisson_batch
from poissoncluster.testfunctions import Bump, Plateau, ZeroFunction


def test_zero_function_gives_one(pairs_model):
    assert laplace_poisson_closed(Lebesgue(1), ZeroFunction(1)) == 1.0


def test_negative_function_rejected():
    with pytest.raises(ValueError):
        laplace_poisson_closed(Lebesgue(1), Bump([0.0], 1.0, -1.0))


def test_indicator_plateau_brackets_exact_value():
    lam = Lebesgue(1)
    p = catalog.indicator_plateau()
    lo, hi = indicator_bracket(lam, p)
    v = laplace_poisson_closed(lam, p)
    assert lo <= v <= hi
    # the exact indicator value exp(-(1 - 1/2) * 1)
    assert hi == pytest.approx(np.exp(-0.5), rel=1e-12)


def test_poisson_closed_matches_sampler(rng):
    lam = Lebesgue(1, 1.5)
    f = Bump([0.2], 0.9, 2.0)
    W = Window(*f.support())
    N = 50_000
    pts, draw = sample_poisson_batch(lam, W, N, rng)
    emp = laplace_empirical_batch(pts, draw, N, f, W)
    assert abs(emp.value - laplace_poisson_closed(lam, f)) <= 3 * emp.se


def test_delta_clusters_match_poisson(delta_model):
    f = Bump([0.0], 1.0, 2.0)
    c = laplace_mucl_closed(delta_model, f, clusters=256)
    assert c.value == pytest.approx(laplace_poisson_closed(delta_model.lam, f), rel=1e-10)
    assert c.se == 0.0


def test_vacuous_clusters_give_one():
    m = ClusterProcessModel(Lebesgue(1), ClusterLaw(np.array([1.0]), GaussianPoints(1.0, 1)))
    assert laplace_mucl_closed(m, Bump([0.0], 1.0, 2.0), clusters=64).value == 1.0


def test_monotone_in_f(pairs_model):
    small, big = Bump([0.0], 1.0, 1.0), Bump([0.0], 1.0, 3.0)
    assert laplace_poisson_closed(Lebesgue(1), big) < laplace_poisson_closed(Lebesgue(1), small)
    a = laplace_mucl_closed(pairs_model, small, clusters=2048, rng=1)
    b = laplace_mucl_closed(pairs_model, big, clusters=2048, rng=1)
    assert 0 < b.value < a.value <= 1


def test_cluster_formula_vs_lifted_form(pairs_model, rng):
    f = Bump([0.5], 1.0, 2.0)
    a = laplace_mucl_closed(pairs_model, f, clusters=16384, rng=rng)
    b = laplace_mucl_lifted(pairs_model, f, 200_000, rng)
    assert abs(a.value - b.value) <= 3 * np.hypot(a.se, b.se)


def test_cluster_formula_vs_sampler(pairs_model, rng):
    f = Bump([0.0], 0.5, 3.0)
    K = Window(*f.support())
    N = 50_000
    pts, draw = sample_mucl_batch(pairs_model, K, N, rng)
    emp = laplace_empirical_batch(pts, draw, N, f, K)
    c = laplace_mucl_closed(pairs_model, f, clusters=16384, rng=rng)
    assert abs(emp.value - c.value) <= 3 * np.hypot(emp.se, c.se)


def test_empirical_requires_covering_window():
    f = Bump([0.0], 1.0)
    g = Configuration.empty(Window([0.0], [0.5]))
    with pytest.raises(ValueError):
        laplace_empirical([g], f)


def test_empty_configurations_give_one():
    f = Bump([0.0], 1.0)
    g = Configuration.empty(Window([-2.0], [2.0]))
    assert laplace_empirical([g, g], f).value == 1.0
