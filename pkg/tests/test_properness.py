import numpy as np
import pytest

from poissoncluster.config import build_model, load_config
from poissoncluster.configspace import ClusterVector, Window
from poissoncluster.errors import DivergenceError
from poissoncluster.measures import ClusterLaw, ClusterProcessModel, ExpWeight, FixedOffsets, Lebesgue
from poissoncluster.properness import (DropletSet, check_sufficient, droplet_layer_measure, droplet_measure,
                                       mean_droplet_mass, pgf_closed, pgf_empirical, simplicity_scan)
from poissoncluster.sampler import counts_in, sample_lifted_batch, sample_mucl_batch


def test_droplet_of_two_points(pairs_model):
    K = Window([0.0], [1.0])
    y = ClusterVector([[0.0], [0.5]])
    assert droplet_measure(pairs_model, K, y) == pytest.approx(1.5)
    assert droplet_layer_measure(pairs_model, K, y, 2) == pytest.approx(0.5)
    assert droplet_layer_measure(pairs_model, K, y, 1) == pytest.approx(1.0)
    D = DropletSet(K, y)
    assert D.contains([[0.25], [-0.6]]).tolist() == [True, False]
    assert D.layer([[0.25]])[0] == 2


def test_far_apart_points_give_disjoint_droplets(pairs_model):
    assert droplet_measure(pairs_model, Window([0.0], [1.0]), ClusterVector([[0.0], [3.0]])) == pytest.approx(2.0)


def test_delta_clusters_mean_droplet_is_window_mass(delta_model, rng):
    K = Window([0.0], [1.0])
    est = mean_droplet_mass(delta_model, K, 1000, rng)
    assert est.value == pytest.approx(1.0)
    assert est.se == 0.0


def test_blowup_config_diverges(rng):
    m = build_model(load_config("blowup"))
    with pytest.raises(DivergenceError) as info:
        mean_droplet_mass(m, Window([0.0], [1.0]), 1000, rng)
    est = info.value.report.estimates
    assert all(b > 1.1 * a for a, b in zip(est[-5:-1], est[-4:]))


def test_sufficient_conditions():
    ok = check_sufficient(build_model(load_config("gaussian-ex1")), Window([0.0], [1.0]))
    assert ok.verdicts["translation_bounded"] == "pass"
    assert ok.C_K == pytest.approx(1.0)
    bad = check_sufficient(build_model(load_config("blowup")), Window([0.0], [1.0]))
    assert bad.verdicts["translation_bounded"] == "fail"
    fixed = ClusterProcessModel(Lebesgue(1), ClusterLaw(np.array([0.0, 0.0, 1.0]), FixedOffsets(np.zeros((2, 1)))))
    rep = check_sufficient(fixed, Window([0.0], [1.0]))
    assert rep.verdicts["no_fixed_points"] == "unknown"
    assert rep.verdicts["simple_clusters"] == "fail"


def test_pgf_of_poisson_process(delta_model, rng):
    K = Window([0.0], [1.0])
    for q in (0.2, 0.7):
        c = pgf_closed(delta_model, K, q, 1000, rng)
        assert c.value == pytest.approx(np.exp(-(1 - q)), rel=1e-12)


def test_pgf_formula_vs_sampler(pairs_model, rng):
    K = Window([0.0], [1.0])
    N = 50_000
    _, draw = sample_mucl_batch(pairs_model, K, N, rng)
    counts = counts_in(draw, N)
    c = pgf_closed(pairs_model, K, 0.5, N, rng)
    e = pgf_empirical(counts, K, 0.5)
    assert abs(c.value - e.value) <= 3 * np.hypot(c.se, e.se)


def test_pgf_rejects_q_outside_unit_interval(pairs_model):
    with pytest.raises(ValueError):
        pgf_closed(pairs_model, Window([0.0], [1.0]), 1.5, 10)


def test_simplicity_scan(pairs_model, rng):
    b = sample_lifted_batch(pairs_model, Window([0.0], [1.0]), 200, rng)
    assert simplicity_scan(b).simple
    dup = ClusterProcessModel(Lebesgue(1), ClusterLaw(np.array([0.0, 0.0, 1.0]), FixedOffsets(np.zeros((2, 1)))))
    rep = simplicity_scan(sample_lifted_batch(dup, Window([0.0], [1.0]), 50, rng))
    assert rep.max_multiplicity == 2
    assert not rep.simple
