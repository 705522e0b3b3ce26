"""Clustering evaluation: label-agreement scores and measure-set distances.

The label scores (NMI, ARI, AMI) are written out from their contingency
table definitions rather than borrowed from an ML library, so the
degenerate-case conventions are explicit and pinned by tests.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .transport import wasserstein


class MetricError(ValueError):
    pass


def _contingency(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape[0] != b.shape[0] or a.shape[0] < 1:
        raise MetricError("label vectors must have equal nonzero length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    R, C = ai.max() + 1, bi.max() + 1
    table = np.zeros((R, C), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def _mutual_information(table):
    n = table.sum()
    nz = table > 0
    pij = table[nz] / n
    pi = (table.sum(axis=1) / n)[np.nonzero(nz)[0]]
    pj = (table.sum(axis=0) / n)[np.nonzero(nz)[1]]
    return float((pij * np.log(pij / (pi * pj))).sum())


def nmi(labels_a, labels_b) -> float:
    """Normalized mutual information 2*MI/(H(a)+H(b)); two constant
    labelings score 1 by convention."""
    table = _contingency(labels_a, labels_b)
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha + hb == 0.0:
        return 1.0
    return 2.0 * _mutual_information(table) / (ha + hb)


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index by pair counting."""
    table = _contingency(labels_a, labels_b)
    n = table.sum()

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(table.astype(float)).sum()
    sum_a = comb2(table.sum(axis=1).astype(float)).sum()
    sum_b = comb2(table.sum(axis=0).astype(float)).sum()
    total = comb2(float(n))
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def _expected_mi(table):
    """Exact expectation of MI under the hypergeometric model of random
    labelings with the observed marginals."""
    n = int(table.sum())
    a = table.sum(axis=1).astype(int)
    b = table.sum(axis=0).astype(int)
    emi = 0.0
    lg = gammaln
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            for nij in range(lo, hi + 1):
                term1 = nij / n * np.log(n * nij / (ai * bj))
                # hypergeometric probability of the cell count nij
                logp = (lg(ai + 1) + lg(bj + 1) + lg(n - ai + 1)
                        + lg(n - bj + 1) - lg(n + 1) - lg(nij + 1)
                        - lg(ai - nij + 1) - lg(bj - nij + 1)
                        - lg(n - ai - bj + nij + 1))
                emi += term1 * np.exp(logp)
    return float(emi)


def ami(labels_a, labels_b) -> float:
    """Adjusted mutual information (MI - E[MI]) / (max(H) - E[MI])."""
    table = _contingency(labels_a, labels_b)
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    mi = _mutual_information(table)
    emi = _expected_mi(table)
    denom = max(ha, hb) - emi
    if abs(denom) < 1e-15:
        # both labelings constant, or an exactly degenerate denominator
        return 1.0 if np.array_equal(
            _contingency(labels_a, labels_a).shape,
            table.shape) and ha == hb == 0.0 else 0.0
    return float((mi - emi) / denom)


def min_matching_distance(set_a, set_b) -> float:
    """Symmetrized max-min exact W2 between two equal-size measure sets."""
    if len(set_a) != len(set_b):
        raise MetricError("measure sets must have equal size")
    D = np.array([[wasserstein(Ga, Gb, r=2) for Gb in set_b]
                  for Ga in set_a])
    d_ab = D.min(axis=1).max()
    d_ba = D.min(axis=0).max()
    return float(max(d_ab, d_ba))


def wasserstein_to_truth(fitted_locals, fitted_globals,
                         true_locals, true_globals) -> float:
    """Mean exact W2 of local measures to their truth plus the
    minimum-matching distance between global measure sets."""
    if len(fitted_locals) != len(true_locals):
        raise MetricError("local measure counts differ")
    m = len(fitted_locals)
    local_term = sum(wasserstein(G, Gt, r=2)
                     for G, Gt in zip(fitted_locals, true_locals)) / m
    return float(local_term
                 + min_matching_distance(fitted_globals, true_globals))
