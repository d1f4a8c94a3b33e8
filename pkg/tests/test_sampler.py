import numpy as np
import pytest
from scipy import stats

from poissoncluster.configspace import Window
from poissoncluster.measures import Lebesgue
from poissoncluster.sampler import (counts_in, sample_lifted, sample_lifted_batch, sample_marked, sample_mucl,
                                    sample_mucl_batch, sample_poisson, sample_poisson_batch)


def test_same_seed_same_sample(pairs_model):
    K = Window([0.0], [1.0])
    a = sample_lifted_batch(pairs_model, K, 50, 7)
    b = sample_lifted_batch(pairs_model, K, 50, 7)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.sizes, b.sizes)


def test_poisson_counts_have_poisson_mean_and_variance(rng):
    N = 50_000
    pts, draw = sample_poisson_batch(Lebesgue(1, 3.0), Window([0.0], [1.0]), N, rng)
    c = counts_in(draw, N)
    assert abs(c.mean() - 3.0) <= 3 * np.sqrt(3.0 / N)
    assert abs(c.var() - 3.0) <= 3 * 3.0 * np.sqrt(2.0 / N) + 3 * np.sqrt(3.0 / N)
    assert np.all((pts >= 0) & (pts <= 1))


def test_delta_clusters_reduce_to_poisson(delta_model, rng):
    N = 40_000
    K = Window([0.0], [2.0])
    _, draw = sample_mucl_batch(delta_model, K, N, rng)
    c = counts_in(draw, N)
    top = 8
    obs = np.bincount(np.minimum(c, top), minlength=top + 1)
    p = stats.poisson.pmf(np.arange(top), 2.0)
    p = np.append(p, 1 - p.sum())
    assert stats.chisquare(obs, p * N).pvalue > 0.001


def test_projected_points_lie_in_window(pairs_model, rng):
    K = Window([0.0], [1.0])
    g = sample_mucl(pairs_model, K, rng)
    assert np.all(K.contains(g.atoms))
    lifted = sample_lifted(pairs_model, K, rng)
    for c in lifted:
        assert K.contains(c.points).any()


def test_sampler_metadata_records_truncation(pairs_model, rng):
    b = sample_lifted_batch(pairs_model, Window([0.0], [1.0]), 10, rng)
    assert b.metadata["r_trunc"] == pairs_model.r_trunc
    assert b.metadata["truncation_bias_bound"] > 0


def test_mean_count_is_mean_cluster_size_times_intensity(pairs_model, rng):
    N = 40_000
    _, draw = sample_mucl_batch(pairs_model, Window([0.0], [1.0]), N, rng)
    c = counts_in(draw, N)
    assert abs(c.mean() - pairs_model.eta.mean_size) <= 3 * c.std(ddof=1) / np.sqrt(N)


def test_marked_and_single_poisson(pairs_model, rng):
    marks = sample_marked(pairs_model, Window([0.0], [5.0]), rng)
    for centre, cl in marks:
        assert cl.dim == 1
    g = sample_poisson(Lebesgue(1), Window([0.0], [0.0]), rng)
    assert g.total == 0
