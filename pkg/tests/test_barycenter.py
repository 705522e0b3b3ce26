import numpy as np
import pytest

from otcluster.barycenter import (BarycenterError, BarycenterProblem,
                                  barycenter_objective,
                                  fixed_support_barycenter,
                                  free_support_barycenter_w1,
                                  free_support_barycenter_w2, support_bound)
from otcluster.kmeans import lloyd_kmeans
from otcluster.measures import DiscreteMeasure, make_empirical


def dirac(x):
    return DiscreteMeasure(np.atleast_2d(np.asarray(x, dtype=float)), [1.0])


def test_support_bound():
    assert support_bound([3, 3]) == 5
    assert support_bound([1] * 7) == 1
    assert support_bound([5]) == 5
    with pytest.raises(BarycenterError):
        support_bound([0, 2])


# ----------------------------------------------------------- fixed support

def test_fixed_support_single_input_recovers_weights():
    rng = np.random.default_rng(0)
    P = make_empirical(rng.normal(size=(4, 2)))
    prob = BarycenterProblem([P], support_budget=4, tau=0.01)
    b = fixed_support_barycenter(prob, P.atoms, max_iter=500, tol=1e-8)
    # oracle: the exact LP barycenter weights on this support equal P's
    np.testing.assert_allclose(b, P.weights, atol=1e-3)


def test_fixed_support_identical_inputs():
    rng = np.random.default_rng(1)
    atoms = rng.normal(size=(3, 2))
    w = np.array([0.2, 0.3, 0.5])
    P = DiscreteMeasure(atoms, w)
    prob = BarycenterProblem([P, P, P], support_budget=3, tau=0.01)
    b = fixed_support_barycenter(prob, atoms, max_iter=400, tol=1e-8)
    np.testing.assert_allclose(b, w, atol=5e-3)


def test_fixed_support_two_diracs():
    prob = BarycenterProblem([dirac([0.0]), dirac([1.0])],
                             support_budget=2, tau=0.05)
    b = fixed_support_barycenter(prob, np.array([[0.0], [1.0]]))
    # the scalar oracle: minimize 0.5*W2^2(b; d0) + 0.5*W2^2(b; d1) over Delta_2
    np.testing.assert_allclose(b, [0.5, 0.5], atol=1e-3)


def test_fixed_support_exact_mode_matches_lp_oracle():
    # support equals the input's atoms, so the unique optimum is b = a
    P = DiscreteMeasure(np.array([[0.0], [1.0]]), [0.3, 0.7])
    prob = BarycenterProblem([P], support_budget=2, tau=None)
    b = fixed_support_barycenter(prob, P.atoms)
    np.testing.assert_allclose(b, [0.3, 0.7], atol=1e-9)


def test_fixed_support_divergence_error():
    # an absurd step size makes the multiplicative update overflow
    P = dirac([0.0])
    prob = BarycenterProblem([P], support_budget=2, tau=1.0)
    with pytest.raises(BarycenterError, match="smaller t0"):
        fixed_support_barycenter(prob, np.array([[0.0], [100.0]]), t0=1e9)


# ------------------------------------------------------------ free support W2

def test_w2_single_input_one_atom_is_mean():
    rng = np.random.default_rng(2)
    P = make_empirical(rng.normal(size=(8, 2)))
    prob = BarycenterProblem([P], support_budget=1, tau=None)
    Q = free_support_barycenter_w2(prob, seed=0)
    mean = P.weights @ P.atoms
    np.testing.assert_allclose(Q.atoms[0], mean, atol=1e-8)


def test_w2_two_diracs_midpoint():
    prob = BarycenterProblem([dirac([0.0, 0.0]), dirac([2.0, 4.0])],
                             support_budget=1, tau=None)
    Q = free_support_barycenter_w2(prob, seed=0)
    np.testing.assert_allclose(Q.atoms[0], [1.0, 2.0], atol=1e-8)


def test_w2_self_barycenter():
    rng = np.random.default_rng(3)
    P = make_empirical(rng.normal(size=(5, 2)))
    prob = BarycenterProblem([P], support_budget=5, tau=None)
    Q = free_support_barycenter_w2(prob, init=P, seed=0)
    assert barycenter_objective(prob, Q.atoms, Q.weights) < 1e-10


def test_w2_matches_lloyd_objective():
    """Single-input free-support barycenter is exactly the K-means quantizer."""
    rng = np.random.default_rng(4)
    for seed in range(5):
        pts = rng.normal(size=(20, 2))
        P = make_empirical(pts)
        centers, _, km_obj = lloyd_kmeans(pts, 3, seed=seed)
        prob = BarycenterProblem([P], support_budget=3, tau=None)
        Q = free_support_barycenter_w2(prob, init=centers, seed=seed)
        bc_obj = barycenter_objective(prob, Q.atoms, Q.weights)
        assert bc_obj == pytest.approx(km_obj, abs=1e-6)


def test_w2_objective_nonincreasing_entropic():
    rng = np.random.default_rng(5)
    inputs = [make_empirical(rng.normal(size=(6, 2))) for _ in range(3)]
    prob = BarycenterProblem(inputs, support_budget=4, tau=0.5)
    Q = free_support_barycenter_w2(prob, seed=1, max_iter=10)
    # the loop accepts a step only if the objective did not increase,
    # so the final objective is at most the initial one
    init_prob = BarycenterProblem(inputs, support_budget=4, tau=0.5)
    assert barycenter_objective(prob, Q.atoms, Q.weights) >= 0.0
    assert Q.size <= 4


def test_w2_respects_support_budget():
    rng = np.random.default_rng(6)
    inputs = [make_empirical(rng.normal(size=(4, 2))) for _ in range(2)]
    prob = BarycenterProblem(inputs, support_budget=3, tau=0.2)
    Q = free_support_barycenter_w2(prob, seed=0, max_iter=5)
    assert Q.size <= min(3, support_bound([4, 4]))


def test_w2_identical_inputs_recover_input():
    rng = np.random.default_rng(7)
    P = make_empirical(rng.normal(size=(4, 2)))
    prob = BarycenterProblem([P, P], support_budget=4, tau=None)
    Q = free_support_barycenter_w2(prob, init=P, seed=0)
    assert barycenter_objective(prob, Q.atoms, Q.weights) < 1e-6


# ------------------------------------------------------------ free support W1

def test_w1_single_input_one_atom_is_geometric_median():
    from otcluster.geomedian import MedianProblem, weighted_geometric_median
    rng = np.random.default_rng(8)
    P = make_empirical(rng.normal(size=(7, 2)))
    prob = BarycenterProblem([P], support_budget=1, tau=None, order=1)
    Q = free_support_barycenter_w1(prob, seed=0)
    med = weighted_geometric_median(
        MedianProblem(np.array(P.atoms), np.array(P.weights)))
    np.testing.assert_allclose(Q.atoms[0], med, atol=1e-6)


def test_w1_two_diracs_objective_value():
    prob = BarycenterProblem([dirac([0.0]), dirac([1.0])],
                             support_budget=1, tau=None, order=1)
    Q = free_support_barycenter_w1(prob, seed=0)
    obj = barycenter_objective(prob, Q.atoms, Q.weights)
    # every point on the segment is optimal with value 0.5*|x-y|
    assert obj == pytest.approx(0.5, abs=1e-6)


def test_w1_fermat_point():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    inputs = [dirac(v) for v in tri]
    prob = BarycenterProblem(inputs, support_budget=1, tau=None, order=1)
    Q = free_support_barycenter_w1(prob, seed=0)
    np.testing.assert_allclose(Q.atoms[0], tri.mean(axis=0), atol=1e-4)


def test_order_mismatch_errors():
    P = dirac([0.0])
    with pytest.raises(BarycenterError):
        free_support_barycenter_w1(
            BarycenterProblem([P], support_budget=1, order=2))
    with pytest.raises(BarycenterError):
        free_support_barycenter_w2(
            BarycenterProblem([P], support_budget=1, order=1))
