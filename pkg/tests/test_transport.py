import itertools

import numpy as np
import pytest

from otcluster.measures import DiscreteMeasure, cost_matrix, make_empirical
from otcluster.transport import (TransportError, exact_ot_small, sinkhorn,
                                 wasserstein)


def permutation_oracle(M):
    """Exact cost for uniform k-vs-k marginals: best of all k! matchings."""
    k = M.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(k)):
        best = min(best, sum(M[i, perm[i]] for i in range(k)) / k)
    return best


def sorted_1d_oracle(x, y, r=2):
    """Optimal matching of equal-size uniform 1-d samples is sorted order."""
    x, y = np.sort(np.asarray(x)), np.sort(np.asarray(y))
    return float(np.mean(np.abs(x - y) ** r))


# ---------------------------------------------------------------- exact solver

def test_exact_two_diracs():
    plan = exact_ot_small([1.0], [1.0], [[7.5]])
    assert plan.cost == pytest.approx(7.5)
    assert plan.coupling[0, 0] == pytest.approx(1.0)


def test_exact_matches_permutation_oracle():
    rng = np.random.default_rng(42)
    for _ in range(20):
        M = rng.uniform(size=(4, 4))
        a = b = np.full(4, 0.25)
        plan = exact_ot_small(a, b, M)
        assert plan.cost == pytest.approx(permutation_oracle(M), abs=1e-10)


def test_exact_matches_sorted_1d_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = rng.normal(size=6)
        y = rng.normal(size=6)
        M = cost_matrix(x[:, None], y[:, None], 2)
        plan = exact_ot_small(np.full(6, 1 / 6), np.full(6, 1 / 6), M)
        assert plan.cost == pytest.approx(sorted_1d_oracle(x, y), abs=1e-10)


def test_exact_rejects_bad_marginals():
    with pytest.raises(TransportError):
        exact_ot_small([0.5, 0.6], [0.5, 0.5], np.zeros((2, 2)))


# -------------------------------------------------------------------- sinkhorn

def test_sinkhorn_single_atom():
    plan = sinkhorn([1.0], [1.0], np.array([[3.0]]), tau=0.5)
    assert plan.cost == pytest.approx(3.0)
    np.testing.assert_allclose(plan.coupling, [[1.0]])


def test_sinkhorn_zero_cost_gives_product_plan():
    a = b = np.full(3, 1 / 3)
    plan = sinkhorn(a, b, np.zeros((3, 3)), tau=1.0)
    assert plan.cost == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(plan.coupling, np.outer(a, b), atol=1e-9)


def test_sinkhorn_marginals_feasible():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.dirichlet(np.ones(4))
        b = rng.dirichlet(np.ones(5))
        M = rng.uniform(size=(4, 5))
        plan = sinkhorn(a, b, M, tau=0.1)
        assert plan.marginal_residual(a, b) < 1e-6


def test_sinkhorn_cost_above_exact_and_gap_shrinks():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a = rng.dirichlet(np.ones(4))
        b = rng.dirichlet(np.ones(5))
        M = rng.uniform(0.1, 1.0, size=(4, 5))
        exact = exact_ot_small(a, b, M).cost
        gaps = []
        for scale in (1.0, 0.1, 0.01):
            tau = scale * M.mean()
            cost = sinkhorn(a, b, M, tau).cost
            assert cost >= exact - 1e-8
            gaps.append(cost - exact)
        assert gaps[0] >= gaps[1] - 1e-9 >= gaps[2] - 2e-9


def test_sinkhorn_zero_mass_columns_pruned():
    a = np.array([0.5, 0.5])
    b = np.array([0.5, 0.0, 0.5])
    M = np.array([[0.0, 1.0, 2.0], [2.0, 1.0, 0.0]])
    plan = sinkhorn(a, b, M, tau=0.05)
    np.testing.assert_allclose(plan.coupling[:, 1], 0.0)
    assert plan.marginal_residual(a, b) < 1e-6


def test_sinkhorn_log_domain_small_tau():
    # max(M)/tau far beyond the kernel-domain threshold
    a = np.array([0.3, 0.7])
    b = np.array([0.6, 0.4])
    M = np.array([[0.0, 5.0], [5.0, 0.0]])
    plan = sinkhorn(a, b, M, tau=0.01)
    exact = exact_ot_small(a, b, M).cost
    assert plan.cost == pytest.approx(exact, abs=1e-6)


def test_sinkhorn_rejects_nonpositive_tau():
    with pytest.raises(TransportError):
        sinkhorn([1.0], [1.0], [[1.0]], tau=0.0)


def test_sinkhorn_nonconvergence_reports_residual():
    rng = np.random.default_rng(2)
    M = rng.uniform(size=(3, 3))
    with pytest.raises(TransportError) as err:
        sinkhorn(np.full(3, 1 / 3), np.full(3, 1 / 3), M, tau=0.05, max_iter=1)
    assert err.value.residual is not None


def test_dual_is_finite_difference_gradient():
    """First-order expansion of the entropic cost along simplex directions."""
    rng = np.random.default_rng(11)
    a = rng.dirichlet(np.ones(4))
    b = rng.dirichlet(np.ones(4)) * 0.5 + 0.125  # keep well inside the simplex
    M = rng.uniform(0.2, 1.0, size=(4, 4))
    tau = 0.3
    plan = sinkhorn(a, b, M, tau, tol=1e-12)

    def value(bb):
        p = sinkhorn(a, bb, M, tau, tol=1e-12)
        return p.entropic_value

    for _ in range(5):
        d = rng.normal(size=4)
        d -= d.mean()  # tangent to the simplex
        d /= np.linalg.norm(d)
        eps = 1e-5
        fd = (value(b + eps * d) - value(b - eps * d)) / (2 * eps)
        assert fd == pytest.approx(float(plan.dual_b @ d), abs=1e-4)


# ----------------------------------------------------------------- wasserstein

def test_wasserstein_diracs():
    G = DiscreteMeasure([[0.0, 0.0]], [1.0])
    H = DiscreteMeasure([[3.0, 4.0]], [1.0])
    assert wasserstein(G, H, r=2) == pytest.approx(5.0)
    assert wasserstein(G, H, r=1) == pytest.approx(5.0)


def test_wasserstein_self_distance_zero():
    G = make_empirical(np.random.default_rng(1).normal(size=(5, 2)))
    assert wasserstein(G, G, r=2) == pytest.approx(0.0, abs=1e-8)


def test_wasserstein_triangle_inequality():
    rng = np.random.default_rng(9)
    for _ in range(10):
        ms = [make_empirical(rng.normal(size=(5, 2))) for _ in range(3)]
        dab = wasserstein(ms[0], ms[1], 2)
        dbc = wasserstein(ms[1], ms[2], 2)
        dac = wasserstein(ms[0], ms[2], 2)
        assert dac <= dab + dbc + 1e-9


def test_wasserstein_symmetry():
    rng = np.random.default_rng(13)
    G = make_empirical(rng.normal(size=(4, 3)))
    H = make_empirical(rng.normal(size=(6, 3)))
    assert wasserstein(G, H, 2) == pytest.approx(wasserstein(H, G, 2), abs=1e-9)


def test_wasserstein_entropic_returns_both_values():
    rng = np.random.default_rng(17)
    G = make_empirical(rng.normal(size=(4, 2)))
    H = make_empirical(rng.normal(size=(5, 2)))
    w_hat, plan_cost = wasserstein(G, H, 2, tau=0.5)
    assert plan_cost >= wasserstein(G, H, 2) ** 2 - 1e-8
    assert w_hat >= 0.0
