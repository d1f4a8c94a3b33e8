import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissoncluster.configspace import (ClusterVector, Configuration, LiftedBatch, LiftedConfiguration, Window,
                                        apply_diffeo_config, count, cylinder_eval, cylinder_gradient,
                                        cylinder_laplacian, lift_diffeo, merge_points, pair, project_lifted,
                                        project_vector, shift_cluster)
from poissoncluster.quasiinv import CompactDiffeo
from poissoncluster.testfunctions import Bump, CylinderFunction, OuterFunction


def test_window_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Window([1.0], [0.0])


def test_window_contains_is_closed():
    W = Window([0.0, 0.0], [1.0, 2.0])
    assert W.contains([[0.0, 0.0], [1.0, 2.0], [0.5, 2.1]]).tolist() == [True, True, False]
    assert W.volume == 2.0


def test_project_vector_merges_duplicates():
    g = project_vector(ClusterVector([[0.2], [0.2], [0.7]]))
    assert g.n_atoms == 2
    assert sorted(g.multiplicities.tolist()) == [1, 2]
    assert g.total == 3


def test_merge_is_transitive():
    atoms, mult = merge_points(np.array([[0.0], [0.6e-12], [1.2e-12], [5.0]]), np.ones(4, dtype=int), 1e-12)
    assert mult.tolist() == [3, 1]


def test_empty_projections():
    assert project_lifted(LiftedConfiguration([], dim=2)).n_atoms == 0
    assert project_vector(ClusterVector(np.zeros((0, 1)))).total == 0


def test_lifted_drops_empty_clusters():
    g = LiftedConfiguration([ClusterVector([[1.0]]), ClusterVector(np.zeros((0, 1)))])
    assert len(g) == 1


def test_shift_dimension_mismatch():
    with pytest.raises(ValueError):
        shift_cluster(ClusterVector([[0.0, 1.0]]), [1.0])


def test_pair_and_count_with_multiplicity():
    W = Window([-5.0], [5.0])
    g = Configuration.from_points([[0.0], [0.0], [2.0]], W)
    f = Bump([0.0], 1.0, 1.0)
    assert pair(f, g) == pytest.approx(2 * np.exp(-1.0))
    assert count(g, Window([-1.0], [1.0])) == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(-10, 10), min_size=0, max_size=4), min_size=0, max_size=5))
def test_projection_preserves_total_count(clusters):
    g = LiftedConfiguration([ClusterVector(np.array(c).reshape(-1, 1), 1) for c in clusters], dim=1)
    assert project_lifted(g).total == sum(len(c) for c in clusters)


def test_diffeo_maps_configuration_and_cluster():
    phi = CompactDiffeo(Bump([0.0], 1.0), 0.5)
    c = ClusterVector([[0.1], [3.0]])
    moved = lift_diffeo(phi, c)
    assert moved.points[1, 0] == 3.0
    assert moved.points[0, 0] != 0.1
    g = apply_diffeo_config(phi, project_vector(c))
    assert g.total == 2


def _F():
    return CylinderFunction(OuterFunction.sine([1.0, -0.5], 0.3), [Bump([0.2], 1.2, 2.0), Bump([0.9], 0.7, 3.0)])


def test_cylinder_gradient_and_laplacian_match_finite_differences():
    F = _F()
    W = Window.everywhere(1)
    pts = np.array([[0.1], [0.5], [0.8]])
    g = Configuration.from_points(pts, W)
    h = 1e-5
    for i, x in enumerate(pts):
        up, dn = pts.copy(), pts.copy()
        up[i] += h
        dn[i] -= h
        Fu = cylinder_eval(F, Configuration.from_points(up, W))
        Fd = cylinder_eval(F, Configuration.from_points(dn, W))
        F0 = cylinder_eval(F, g)
        grad = cylinder_gradient(F, g, x)[0]
        assert abs(grad - (Fu - Fd) / (2 * h)) <= 1e-6 * max(1.0, abs(grad))
        lap = cylinder_laplacian(F, g, x)
        h2 = 1e-3
        up[i], dn[i] = x + h2, x - h2
        fd2 = (cylinder_eval(F, Configuration.from_points(up, W)) - 2 * F0
               + cylinder_eval(F, Configuration.from_points(dn, W))) / h2**2
        assert abs(lap - fd2) <= 1e-4 * max(1.0, abs(lap))


def test_cylinder_gradient_requires_an_atom():
    g = Configuration.from_points([[0.1]], Window.everywhere(1))
    with pytest.raises(ValueError):
        cylinder_gradient(_F(), g, [0.3])


def test_lifted_batch_round_trip():
    gs = [LiftedConfiguration([ClusterVector([[0.0], [1.0]]), ClusterVector([[2.0]])]), LiftedConfiguration([], dim=1)]
    b = LiftedBatch.from_lifted(gs, 1)
    assert b.n_draws == 2
    assert b.clusters_per_draw().tolist() == [2, 0]
    back = b.lifted(0)
    assert [c.size for c in back] == [2, 1]
    Y, idx = b.cluster_arrays(2)
    assert Y.shape == (1, 2, 1)
