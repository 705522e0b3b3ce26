"""Seeded synthetic data generators for multilevel clustering experiments.

Three regimes: unconstrained groups (gen_nc), groups whose true atoms are
drawn from a shared pool (gen_lc), and grouped data with a per-group
context vector (gen_context).  All generators are deterministic under
the seed in GenParams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, GroupedDataset


class GenError(ValueError):
    pass


@dataclass
class GenParams:
    """Knobs for the synthetic generators.

    m groups of n_j points in R^d.  M global clusters, K_i atoms in each
    global measure, k_j atoms per local measure.  K is the size of the
    shared atom pool (gen_lc only), d2 the context dimension.
    """

    m: int = 50
    n_j: int = 50
    d: int = 10
    M: int = 5
    K_i: int = 5
    k_j: int = 4
    K: int = 50
    d2: int = 2
    variance_mode: str = "constant"  # or "cluster-proportional"
    seed: int = 0

    def __post_init__(self):
        for name in ("m", "n_j", "d", "M", "K_i", "k_j", "K", "d2"):
            if getattr(self, name) < 1:
                raise GenError(f"{name} must be >= 1")
        if self.variance_mode not in ("constant", "cluster-proportional"):
            raise GenError(f"unknown variance_mode {self.variance_mode!r}")


@dataclass(frozen=True)
class Truth:
    """Sampled ground truth accompanying a generated dataset."""

    locals: tuple           # per-group DiscreteMeasure G_j
    globals: tuple          # per-cluster DiscreteMeasure H_i
    z: np.ndarray           # group -> cluster assignment
    shared_atoms: np.ndarray | None = None  # (K, d), gen_lc only


def _local_variance(params, z_j):
    if params.variance_mode == "constant":
        return 1.0
    # proportional to the (1-based) cluster label
    return float(z_j + 1)


def _sample_globals(params, rng):
    """M global measures: atoms around 5*(i-1)*1_d, Dirichlet(1) weights."""
    H = []
    for i in range(params.M):
        mu = 5.0 * i * np.ones(params.d)
        atoms = rng.normal(loc=mu, scale=1.0, size=(params.K_i, params.d))
        weights = rng.dirichlet(np.ones(params.K_i))
        H.append(DiscreteMeasure(atoms, weights))
    return H


def _sample_observations(params, rng, G_list, z):
    groups = []
    for j, G in enumerate(G_list):
        idx = rng.choice(G.size, size=params.n_j, p=G.weights)
        centers = np.asarray(G.atoms)[idx]
        pts = centers + rng.normal(size=(params.n_j, params.d))
        groups.append(pts)
    return groups


def gen_nc(params: GenParams):
    """Groups with unconstrained local atom supports.

    Each group draws a global cluster z_j, samples k_j atom centers from
    H_{z_j}, perturbs them into local atoms, and emits n_j observations
    from the resulting local measure.
    """
    rng = np.random.default_rng(params.seed)
    H_list = _sample_globals(params, rng)
    z = rng.integers(0, params.M, size=params.m)
    G_list = []
    for j in range(params.m):
        H = H_list[z[j]]
        idx = rng.choice(H.size, size=params.k_j, p=H.weights)
        tau = np.asarray(H.atoms)[idx]
        sigma2 = _local_variance(params, z[j])
        theta = tau + math.sqrt(sigma2) * rng.normal(
            size=(params.k_j, params.d))
        p = rng.dirichlet(np.ones(params.k_j))
        G_list.append(DiscreteMeasure(theta, p))
    groups = _sample_observations(params, rng, G_list, z)
    dataset = GroupedDataset(tuple(groups), labels=z)
    return dataset, Truth(tuple(G_list), tuple(H_list), z)


def gen_lc(params: GenParams, max_retries: int = 100):
    """Groups whose true atoms come from a shared pool of K atoms.

    Every shared atom k is tied to a cluster z_k; group j with cluster
    label z~_j supports exactly the shared atoms owned by that cluster,
    so supp(G_j) is contained in the pool by construction.
    """
    rng = np.random.default_rng(params.seed)
    H_list = _sample_globals(params, rng)
    for _ in range(max_retries):
        zk = rng.integers(0, params.M, size=params.K)
        if len(np.unique(zk)) == params.M:
            break
    else:
        raise GenError(
            f"could not give every cluster a shared atom in {max_retries} tries; "
            "increase K or decrease M")
    shared = np.empty((params.K, params.d))
    for k in range(params.K):
        H = H_list[zk[k]]
        idx = rng.choice(H.size, p=H.weights)
        shared[k] = np.asarray(H.atoms)[idx] + rng.normal(size=params.d)
    z = rng.integers(0, params.M, size=params.m)
    G_list = []
    for j in range(params.m):
        own = np.nonzero(zk == z[j])[0]
        p = rng.dirichlet(np.ones(own.size))
        G_list.append(DiscreteMeasure(shared[own], p))
    groups = _sample_observations(params, rng, G_list, z)
    dataset = GroupedDataset(tuple(groups), labels=z)
    return dataset, Truth(tuple(G_list), tuple(H_list), z, shared_atoms=shared)


N_CONTEXT_CLUSTERS = 6


def gen_context(params: GenParams | None = None, m: int = 3000,
                n_j: int = 100):
    """Grouped data where cluster identity shows in content and context.

    Six clusters.  Each cluster's content distribution is a mixture of 3
    of 6 shared Gaussian components; its context distribution is one of
    six well separated Gaussians in R^d2.  Each group draws one context
    vector and n_j content points.
    """
    if params is None:
        params = GenParams()
    rng = np.random.default_rng(params.seed)
    n_clusters = N_CONTEXT_CLUSTERS
    comp_means = rng.normal(scale=3.0, size=(n_clusters, params.d))
    ctx_means = 5.0 * np.arange(n_clusters)[:, None] * np.ones(params.d2)
    # each cluster mixes a distinct subset of 3 of the 6 shared components
    subsets = [rng.choice(n_clusters, size=3, replace=False)
               for _ in range(n_clusters)]
    mix = [rng.dirichlet(np.ones(3)) for _ in range(n_clusters)]
    z = rng.integers(0, n_clusters, size=m)
    groups, contexts = [], np.empty((m, params.d2))
    for j in range(m):
        c = z[j]
        comp = rng.choice(subsets[c], size=n_j, p=mix[c])
        pts = comp_means[comp] + rng.normal(size=(n_j, params.d))
        groups.append(pts)
        contexts[j] = ctx_means[c] + rng.normal(size=params.d2)
    dataset = GroupedDataset(tuple(groups), contexts=contexts, labels=z)
    truth = Truth(locals=(), globals=(), z=z)
    return dataset, truth


def add_noise(dataset: GroupedDataset, fraction: float,
              seed: int = 0) -> GroupedDataset:
    """Append ceil(fraction * total points) noise points to random groups.

    Noise is Gaussian around the pooled mean with 9x the pooled per-axis
    variance.  Original points are untouched.
    """
    if not 0.0 <= fraction < 1.0:
        raise GenError(f"noise fraction must be in [0, 1), got {fraction}")
    if fraction == 0.0:
        return dataset
    rng = np.random.default_rng(seed)
    pooled = dataset.all_points()
    n_noise = math.ceil(fraction * pooled.shape[0])
    mean = pooled.mean(axis=0)
    std = 3.0 * pooled.std(axis=0)
    noise = mean + std * rng.normal(size=(n_noise, dataset.dim))
    targets = rng.integers(0, dataset.m, size=n_noise)
    groups = [np.array(g) for g in dataset.groups]
    for t, x in zip(targets, noise):
        groups[t] = np.vstack([groups[t], x])
    return GroupedDataset(tuple(groups), contexts=dataset.contexts,
                          labels=dataset.labels)
