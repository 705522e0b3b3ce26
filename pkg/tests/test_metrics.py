import numpy as np
import pytest

from otcluster.measures import DiscreteMeasure
from otcluster.metrics import (MetricError, _expected_mi, ami, ari,
                               min_matching_distance, nmi,
                               wasserstein_to_truth)


def test_nmi_identical_and_permuted():
    a = [0, 0, 1, 1, 2, 2]
    assert nmi(a, a) == pytest.approx(1.0)
    # relabeling does not change the score
    assert nmi(a, [5, 5, 3, 3, 9, 9]) == pytest.approx(1.0)


def test_nmi_hand_computed():
    # contingency [[2, 0], [1, 1]]: MI and entropies worked out by hand
    a = [0, 0, 1, 1]
    b = [0, 0, 0, 1]
    mi = (0.5 * np.log(0.5 / (0.5 * 0.75))
          + 0.25 * np.log(0.25 / (0.5 * 0.75))
          + 0.25 * np.log(0.25 / (0.5 * 0.25)))
    ha = np.log(2.0)
    hb = -(0.75 * np.log(0.75) + 0.25 * np.log(0.25))
    assert nmi(a, b) == pytest.approx(2 * mi / (ha + hb), abs=1e-12)


def test_nmi_constant_labelings():
    assert nmi([1, 1, 1], [1, 1, 1]) == 1.0
    assert nmi([1, 1, 1], [0, 1, 2]) == pytest.approx(0.0)


def test_nmi_independent_labels_low():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 3, size=3000)
    b = rng.integers(0, 3, size=3000)
    assert abs(nmi(a, b)) < 0.01


def test_ari_hand_computed():
    # 4 points, contingency [[2, 0], [1, 1]]; pair counts done by hand:
    # sum_ij C(n_ij,2) = 1, sum_a = 2, sum_b = 3, C(4,2) = 6
    a = [0, 0, 1, 1]
    b = [0, 0, 0, 1]
    expected = 2 * 3 / 6
    assert ari(a, b) == pytest.approx((1 - expected) / (2.5 - expected))


def test_ari_perfect_and_chance():
    a = [0, 1, 0, 1, 2, 2]
    assert ari(a, a) == pytest.approx(1.0)
    # mean over random permutations is near zero by construction
    rng = np.random.default_rng(1)
    labels = np.array([0] * 10 + [1] * 10 + [2] * 10)
    vals = [ari(labels, rng.permutation(labels)) for _ in range(200)]
    assert abs(np.mean(vals)) < 0.05


def test_expected_mi_exhaustive():
    """E[MI] recomputed by enumerating every 2x2 contingency table with
    the fixed marginals, weighted by the exact table probability
    prod(a_i!) prod(b_j!) / (n! prod(n_ij!))."""
    from math import factorial

    from otcluster.metrics import _mutual_information

    a_sizes = [2, 2]
    b_sizes = [3, 1]
    n = 4
    emi = 0.0
    for n00 in range(max(0, a_sizes[0] + b_sizes[0] - n),
                     min(a_sizes[0], b_sizes[0]) + 1):
        tab = np.array([[n00, a_sizes[0] - n00],
                        [b_sizes[0] - n00, b_sizes[1] - (a_sizes[0] - n00)]])
        if tab.min() < 0:
            continue
        p = (factorial(a_sizes[0]) * factorial(a_sizes[1])
             * factorial(b_sizes[0]) * factorial(b_sizes[1])
             / factorial(n) / np.prod([factorial(int(x)) for x in tab.ravel()]))
        emi += p * _mutual_information(tab)
    direct = _expected_mi(np.array([[2, 0], [1, 1]]))
    assert direct == pytest.approx(emi, abs=1e-12)


def test_ami_perfect_chance_and_constant():
    a = [0, 0, 1, 1, 2, 2]
    assert ami(a, a) == pytest.approx(1.0)
    assert ami([0, 0, 0], [0, 0, 0]) == 1.0
    rng = np.random.default_rng(3)
    labels = np.array([0] * 8 + [1] * 8)
    vals = [ami(labels, rng.permutation(labels)) for _ in range(100)]
    assert abs(np.mean(vals)) < 0.1


def test_label_length_mismatch():
    with pytest.raises(MetricError):
        nmi([0, 1], [0, 1, 2])


def dirac(x):
    return DiscreteMeasure(np.atleast_2d(np.asarray(x, dtype=float)), [1.0])


def test_min_matching_identical_sets():
    s = [dirac([0.0]), dirac([3.0])]
    assert min_matching_distance(s, s) == pytest.approx(0.0, abs=1e-9)


def test_min_matching_hand_instance():
    # sets {0, 10} and {1, 10}: each side's worst best-match is |0-1| = 1
    s1 = [dirac([0.0]), dirac([10.0])]
    s2 = [dirac([1.0]), dirac([10.0])]
    assert min_matching_distance(s1, s2) == pytest.approx(1.0, abs=1e-9)


def test_min_matching_asymmetric_cover():
    # {0, 0} vs {0, 5}: forward max-min is 0, backward is 5
    s1 = [dirac([0.0]), dirac([0.0])]
    s2 = [dirac([0.0]), dirac([5.0])]
    assert min_matching_distance(s1, s2) == pytest.approx(5.0, abs=1e-9)


def test_min_matching_size_mismatch():
    with pytest.raises(MetricError):
        min_matching_distance([dirac([0.0])], [dirac([0.0]), dirac([1.0])])


def test_wasserstein_to_truth_zero_for_truth():
    locs = [dirac([0.0]), dirac([2.0])]
    globs = [dirac([1.0])]
    assert wasserstein_to_truth(locs, globs, locs, globs) == pytest.approx(
        0.0, abs=1e-9)


def test_wasserstein_to_truth_additive():
    locs = [dirac([0.0])]
    locs_hat = [dirac([3.0])]
    globs = [dirac([0.0])]
    globs_hat = [dirac([4.0])]
    # local term 3 (mean of one W2), matching term 4
    got = wasserstein_to_truth(locs_hat, globs_hat, locs, globs)
    assert got == pytest.approx(7.0, abs=1e-8)
