"""Euclidean K-means primitives: Lloyd sweeps, k-means++ seeding, and the
three-stage grouped baseline."""

from __future__ import annotations

import numpy as np

from .measures import DiscreteMeasure, GroupedDataset, cost_matrix


class KMeansError(ValueError):
    pass


def kmeans_pp_init(points, k, seed) -> np.ndarray:
    """k-means++ D^2 seeding; deterministic for a fixed seed.

    `seed` may be an int or an existing numpy Generator.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if k > n:
        raise KMeansError(f"k={k} exceeds point count {n}")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(n)]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers
            centers[i] = pts[rng.integers(n)]
            continue
        idx = rng.choice(n, p=d2 / total)
        centers[i] = pts[idx]
        d2 = np.minimum(d2, np.sum((pts - centers[i]) ** 2, axis=1))
    return centers


def lloyd_kmeans(points, k, init="kmeans++", seed=0, max_iter=300, tol=1e-10):
    """Lloyd's algorithm.

    Returns (centers (k,d), labels (n,), objective) with the objective
    (1/n) sum_i min_c ||x_i - c||^2.  Nearest-center ties break to the
    lowest index.  Empty clusters are repaired by moving in the point
    farthest from its current center.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if k < 1 or n < 1:
        raise KMeansError("need k >= 1 and at least one point")
    n_distinct = np.unique(pts, axis=0).shape[0]
    if k > n_distinct:
        raise KMeansError(f"k={k} exceeds distinct point count {n_distinct}")
    if isinstance(init, str):
        if init != "kmeans++":
            raise KMeansError(f"unknown init {init!r}")
        centers = kmeans_pp_init(pts, k, seed)
    else:
        centers = np.atleast_2d(np.asarray(init, dtype=float)).copy()
        if centers.shape != (k, pts.shape[1]):
            raise KMeansError("init centers have wrong shape")

    prev_obj = np.inf
    for _ in range(max_iter):
        d2 = cost_matrix(pts, centers, 2)
        labels = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
        # empty-cluster repair: pull in the point farthest from its center
        for c in range(k):
            if not np.any(labels == c):
                far = np.argmax(d2[np.arange(n), labels])
                labels[far] = c
                d2[far, :] = -np.inf  # don't pick the same point twice
        obj = float(np.mean(np.sum((pts - centers[labels]) ** 2, axis=1)))
        new_centers = np.vstack(
            [pts[labels == c].mean(axis=0) for c in range(k)])
        shift = np.abs(new_centers - centers).max()
        centers = new_centers
        if shift < tol or prev_obj - obj < tol * max(abs(prev_obj), 1.0):
            break
        prev_obj = obj
    d2 = cost_matrix(pts, centers, 2)
    labels = np.argmin(d2, axis=1)
    obj = float(np.mean(d2[np.arange(n), labels]))
    return centers, labels, obj


def _label_frequencies(labels, k):
    counts = np.bincount(labels, minlength=k).astype(float)
    return counts / counts.sum()


def three_stage_kmeans(dataset: GroupedDataset, k_j, M, L, seed):
    """Grouped-data baseline: quantize each group, cluster the pooled
    atoms into M global clusters, then quantize each cluster's atoms.

    Returns (locals, globals, assignments).  A group's global label is
    the majority vote over the stage-2 labels of its atoms (lowest index
    on ties).
    """
    rng = np.random.default_rng(seed)
    locals_ = []
    for g in dataset.groups:
        kk = min(k_j, np.unique(g, axis=0).shape[0])
        centers, labels, _ = lloyd_kmeans(g, kk, seed=rng)
        locals_.append(DiscreteMeasure(centers, _label_frequencies(labels, kk)))

    pooled = np.vstack([G.atoms for G in locals_])
    M_eff = min(M, np.unique(pooled, axis=0).shape[0])
    _, atom_labels, _ = lloyd_kmeans(pooled, M_eff, seed=rng)

    assignments = np.empty(dataset.m, dtype=int)
    offset = 0
    for j, G in enumerate(locals_):
        lab = atom_labels[offset:offset + G.size]
        assignments[j] = np.argmax(np.bincount(lab, minlength=M_eff))
        offset += G.size

    globals_ = []
    for i in range(M_eff):
        cluster_atoms = pooled[atom_labels == i]
        if cluster_atoms.shape[0] == 0:
            # stage-2 repair already prevents this, but stay defensive
            far = np.argmax(np.min(cost_matrix(pooled, pooled, 2), axis=1))
            cluster_atoms = pooled[far:far + 1]
        LL = min(L, np.unique(cluster_atoms, axis=0).shape[0])
        centers, labels, _ = lloyd_kmeans(cluster_atoms, LL, seed=rng)
        globals_.append(DiscreteMeasure(centers, _label_frequencies(labels, LL)))
    while len(globals_) < M:
        globals_.append(globals_[-1])
    return locals_, globals_, assignments
