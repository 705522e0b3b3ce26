"""Multilevel clustering of grouped data through optimal transport.

Four solvers over the same two-level objective

    sum_j scale_j * W(G_j, P_j) + (lam/m) * sum_j min_i W(G_j, H_i):

  * mwm   - free local supports, order-2 costs;
  * mwms  - all local measures share one atom set S_K;
  * mwmc  - adds a per-group context vector and per-cluster context
            centroids to the assignment metric;
  * mwgm  - order-1 (unsquared) costs throughout, robust to outliers.

Every update block is guarded: a candidate that would increase the
objective is rejected, so the recorded objective trace is non-increasing
by construction even though the inner solvers are approximate.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .barycenter import (BarycenterError, BarycenterProblem,
                         fixed_support_barycenter, free_support_barycenter_w1,
                         free_support_barycenter_w2)
from .kmeans import lloyd_kmeans, three_stage_kmeans
from .measures import DiscreteMeasure, GroupedDataset, cost_matrix
from .parallel import par_map
from .transport import TransportError, exact_ot_small, sinkhorn

VARIANTS = ("mwm", "mwms", "mwmc", "mwgm")

MASS_FLOOR = 1e-12


class MultilevelError(ValueError):
    pass


@dataclass
class FitConfig:
    variant: str = "mwm"
    k_j: int = 4
    M: int = 5
    K: int = 50                  # shared-atom count, mwms only
    lam: float | str = "auto"
    tau: float | None = 10.0     # None -> exact transport throughout
    L: int = 10                  # support threshold for global updates
    tol: float = 1e-6
    max_iter: int = 100
    seed: int = 0
    local_term_scale: str = "normalized"   # or "group_size"
    include_entropy: bool = False
    inner_tol: float = 1e-6
    inner_max_iter: int = 2000
    inner_weight_iters: int = 15
    inner_atom_iters: int = 3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise MultilevelError(f"unknown variant {self.variant!r}")
        if self.M < 1 or self.k_j < 1 or self.L < 1 or self.K < 1:
            raise MultilevelError("M, k_j, K, and L must all be >= 1")
        if self.tau is not None and self.tau <= 0:
            raise MultilevelError("tau must be > 0 (or None for exact)")
        if self.lam != "auto" and float(self.lam) < 0:
            raise MultilevelError("lam must be >= 0 or 'auto'")
        if self.local_term_scale not in ("normalized", "group_size"):
            raise MultilevelError(
                f"unknown local_term_scale {self.local_term_scale!r}")

    @property
    def order(self) -> int:
        return 1 if self.variant == "mwgm" else 2

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "k_j": self.k_j, "M": self.M,
            "K": self.K, "lam": self.lam, "tau": self.tau, "L": self.L,
            "tol": self.tol, "max_iter": self.max_iter, "seed": self.seed,
            "local_term_scale": self.local_term_scale,
            "include_entropy": self.include_entropy,
        }


@dataclass
class MultilevelState:
    locals: tuple                 # DiscreteMeasure per group
    globals: tuple                # DiscreteMeasure per global cluster
    assignments: np.ndarray       # group -> global cluster index
    objective_trace: list
    lam: float = 0.0
    shared_atoms: np.ndarray | None = None          # mwms
    context_centroids: np.ndarray | None = None     # mwmc
    converged: bool = True
    flags: dict = field(default_factory=dict)

    def to_dict(self, config: FitConfig | None = None) -> dict:
        d = {
            "variant": config.variant if config else None,
            "locals": [G.to_dict() for G in self.locals],
            "globals": [H.to_dict() for H in self.globals],
            "assignments": [int(i) for i in self.assignments],
            "objective_trace": [float(v) for v in self.objective_trace],
            "lam": float(self.lam),
            "converged": bool(self.converged),
        }
        if self.shared_atoms is not None:
            d["shared_atoms"] = self.shared_atoms.tolist()
        if self.context_centroids is not None:
            d["context_centroids"] = self.context_centroids.tolist()
        if config is not None:
            d["config"] = config.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "MultilevelState":
        return MultilevelState(
            locals=tuple(DiscreteMeasure.from_dict(g) for g in d["locals"]),
            globals=tuple(DiscreteMeasure.from_dict(h) for h in d["globals"]),
            assignments=np.asarray(d["assignments"], dtype=int),
            objective_trace=list(d["objective_trace"]),
            lam=float(d.get("lam", 0.0)),
            shared_atoms=(np.asarray(d["shared_atoms"])
                          if "shared_atoms" in d else None),
            context_centroids=(np.asarray(d["context_centroids"])
                               if "context_centroids" in d else None),
            converged=bool(d.get("converged", True)),
        )


def save_state(state, config, path):
    with open(path, "w") as fh:
        json.dump(state.to_dict(config), fh)


def load_state(path):
    with open(path) as fh:
        return MultilevelState.from_dict(json.load(fh))


# -------------------------------------------------------------- pair costs

def _pair_cost(G, H, order, tau, include_entropy=False,
               tol=1e-6, max_iter=2000) -> float:
    """Transport cost between two measures under the fit's metric.

    Entropic mode reports the bare plan cost <T, M> by default so that
    argmin comparisons are scale-stable; include_entropy adds the
    tau-weighted entropy term.  Falls back to the exact plan when the
    scaling iteration stalls on a degenerate instance.
    """
    M = cost_matrix(G.atoms, H.atoms, order)
    if tau is None or tau == 0:
        return exact_ot_small(G.weights, H.weights, M).cost
    try:
        plan = sinkhorn(G.weights, H.weights, M, tau, tol=tol,
                        max_iter=max_iter)
    except TransportError:
        return exact_ot_small(G.weights, H.weights, M).cost
    return plan.entropic_value if include_entropy else plan.cost


def _coupling(a, b, M, tau, tol, max_iter):
    if tau is None or tau == 0:
        return exact_ot_small(a, b, M).coupling
    try:
        return sinkhorn(a, b, M, tau, tol=tol, max_iter=max_iter).coupling
    except TransportError:
        return exact_ot_small(a, b, M).coupling


def _cost_row(args):
    G, globals_, order, tau, include_entropy, tol, max_iter = args
    return [_pair_cost(G, H, order, tau, include_entropy, tol, max_iter)
            for H in globals_]


def _assignment_costs(local_measures, global_measures, config,
                      contexts=None, context_centroids=None, workers=1):
    """m x M matrix of assignment costs (transport plus context term)."""
    rows = par_map(_cost_row,
                   [(G, tuple(global_measures), config.order, config.tau,
                     config.include_entropy, config.inner_tol,
                     config.inner_max_iter) for G in local_measures],
                   workers)
    D = np.asarray(rows, dtype=float)
    if contexts is not None and context_centroids is not None:
        D = D + cost_matrix(contexts, context_centroids, 2)
    return D


def assign_groups(local_measures, global_measures, order=2, tau=None,
                  contexts=None, context_centroids=None,
                  include_entropy=False) -> np.ndarray:
    """Nearest-global assignment; ties break to the lowest index."""
    D = np.array([[_pair_cost(G, H, order, tau, include_entropy)
                   for H in global_measures] for G in local_measures])
    if contexts is not None and context_centroids is not None:
        D = D + cost_matrix(contexts, context_centroids, 2)
    return np.argmin(D, axis=1)


# --------------------------------------------------------------- objective

def _local_scales(dataset: GroupedDataset, config: FitConfig) -> np.ndarray:
    if config.local_term_scale == "group_size":
        return np.array([g.shape[0] for g in dataset.groups], dtype=float)
    return np.ones(dataset.m)


def _local_cost_task(args):
    G, P, scale, order, tau, include_entropy, tol, max_iter = args
    return scale * _pair_cost(G, P, order, tau, include_entropy, tol,
                              max_iter)


def _local_costs(local_measures, dataset, config, workers=1):
    scales = _local_scales(dataset, config)
    return np.asarray(par_map(
        _local_cost_task,
        [(G, dataset.empirical(j), scales[j], config.order, config.tau,
          config.include_entropy, config.inner_tol, config.inner_max_iter)
         for j, G in enumerate(local_measures)],
        workers))


def objective(state: MultilevelState, dataset: GroupedDataset,
              config: FitConfig) -> float:
    """Value of the variant's two-level objective at the given state."""
    local = _local_costs(state.locals, dataset, config).sum()
    D = _assignment_costs(state.locals, state.globals, config,
                          contexts=dataset.contexts
                          if config.variant == "mwmc" else None,
                          context_centroids=state.context_centroids)
    return float(local + state.lam / dataset.m * D.min(axis=1).sum())


def lambda_heuristic(local_measures, global_measures, dataset,
                     config: FitConfig) -> float:
    """Balance penalty: global term at the current state over local term.

    Computed once after initialization and then frozen for the fit.
    """
    local = _local_costs(local_measures, dataset, config).sum()
    if local <= 0:
        raise MultilevelError("degenerate: data equals quantizers")
    D = _assignment_costs(local_measures, global_measures, config)
    return float(D.min(axis=1).sum() / dataset.m / local)


# ----------------------------------------------------------- update blocks

def _local_update_task(args):
    """Two-term local solve for one group, guarded against regression.

    Minimizes w_local * W(G, P) + w_global * W(G, H) over measures with
    at most k atoms, as a weighted 2-input free-support barycenter
    started from the current G.  Returns the better of the candidate and
    the incumbent, with the two cost terms of the winner.
    """
    (G, P, H, w_local, w_global, k_budget, cfg, seed) = args
    order, tau = cfg.order, cfg.tau
    cur_local = w_local * _pair_cost(G, P, order, tau, cfg.include_entropy,
                                     cfg.inner_tol, cfg.inner_max_iter)
    cur_global = _pair_cost(G, H, order, tau, cfg.include_entropy,
                            cfg.inner_tol, cfg.inner_max_iter)
    cur = cur_local + w_global * cur_global
    total = w_local + w_global
    prob = BarycenterProblem(
        [P, H], mix_weights=np.array([w_local, w_global]) / total,
        support_budget=k_budget, tau=tau, order=order,
        inner_tol=cfg.inner_tol, inner_max_iter=cfg.inner_max_iter)
    solver = free_support_barycenter_w1 if order == 1 \
        else free_support_barycenter_w2
    try:
        G_new = solver(prob, init=G, max_iter=cfg.inner_atom_iters,
                       seed=seed, weight_tol=1e-5,
                       weight_iters=cfg.inner_weight_iters)
    except BarycenterError:
        return G, cur_local, cur_global
    new_local = w_local * _pair_cost(G_new, P, order, tau,
                                     cfg.include_entropy, cfg.inner_tol,
                                     cfg.inner_max_iter)
    new_global = _pair_cost(G_new, H, order, tau, cfg.include_entropy,
                            cfg.inner_tol, cfg.inner_max_iter)
    if new_local + w_global * new_global <= cur:
        return G_new, new_local, new_global
    return G, cur_local, cur_global


def _h_update_task(args):
    """Per-cluster global solve, guarded against regression."""
    (H, members, cfg, seed) = args
    order, tau = cfg.order, cfg.tau
    if not members:
        return H
    budget = max(1, min(sum(G.size for G in members) - len(members) + 1,
                        cfg.L))
    cur = sum(_pair_cost(G, H, order, tau, cfg.include_entropy,
                         cfg.inner_tol, cfg.inner_max_iter)
              for G in members)
    prob = BarycenterProblem(list(members), support_budget=budget, tau=tau,
                             order=order, inner_tol=cfg.inner_tol,
                             inner_max_iter=cfg.inner_max_iter)
    solver = free_support_barycenter_w1 if order == 1 \
        else free_support_barycenter_w2
    init = H if H.size <= budget else None
    try:
        H_new = solver(prob, init=init, max_iter=cfg.inner_atom_iters,
                       seed=seed, weight_tol=1e-5,
                       weight_iters=cfg.inner_weight_iters)
    except BarycenterError:
        return H
    new = sum(_pair_cost(G, H_new, order, tau, cfg.include_entropy,
                         cfg.inner_tol, cfg.inner_max_iter)
              for G in members)
    return H_new if new <= cur else H


def _project_weights(P: DiscreteMeasure, support) -> np.ndarray:
    """Mass of P routed to the nearest support atom: the exact
    fixed-support quantization weights for a single input."""
    near = np.argmin(cost_matrix(P.atoms, support, 2), axis=1)
    w = np.zeros(support.shape[0])
    np.add.at(w, near, P.weights)
    return w


def _shared_weight_task(args):
    """Weight-only local solve on the shared support (mwms step 2)."""
    (P, H, w_local, w_global, support, cfg) = args
    total = w_local + w_global
    prob = BarycenterProblem(
        [P, H], mix_weights=np.array([w_local, w_global]) / total,
        support_budget=support.shape[0], tau=cfg.tau, order=cfg.order,
        inner_tol=cfg.inner_tol, inner_max_iter=cfg.inner_max_iter)
    try:
        b = fixed_support_barycenter(prob, support, tol=1e-5,
                                     max_iter=cfg.inner_weight_iters)
    except BarycenterError:
        b = _project_weights(P, support)
        b = b / b.sum()
    return DiscreteMeasure(support, b)


def _mwms_atom_update(local_measures, dataset, globals_, assignments,
                      shared, lam, config):
    """Closed-form shared-atom move: each atom goes to the coupling
    weighted mean of the data and global atoms it serves."""
    m = dataset.m
    K, d = shared.shape
    num = np.zeros((K, d))
    den = np.zeros(K)
    for j, G in enumerate(local_measures):
        P = dataset.empirical(j)
        H = globals_[assignments[j]]
        T = _coupling(G.weights, P.weights,
                      cost_matrix(shared, P.atoms, 2), config.tau,
                      config.inner_tol, config.inner_max_iter)
        U = _coupling(G.weights, H.weights,
                      cost_matrix(shared, H.atoms, 2), config.tau,
                      config.inner_tol, config.inner_max_iter)
        num += m * (T @ np.asarray(P.atoms)) + lam * (U @ np.asarray(H.atoms))
        den += m * T.sum(axis=1) + lam * U.sum(axis=1)
    moved = shared.copy()
    alive = den > MASS_FLOOR
    moved[alive] = num[alive] / den[alive, None]
    stale = np.nonzero(~alive)[0]
    return moved, stale


def _task_seed(seed, *path) -> int:
    """Counter-based split of the run seed; identical for any worker
    count because it depends only on the logical position."""
    return int(np.random.SeedSequence(
        entropy=seed, spawn_key=tuple(path)).generate_state(1)[0])


# ------------------------------------------------------------------- fits

def fit(dataset: GroupedDataset, config: FitConfig, workers: int = 1,
        on_iteration=None, init_state: MultilevelState | None = None
        ) -> MultilevelState:
    """Run the configured variant; see fit_mwm and friends.

    `init_state` warm-starts from an earlier fit instead of the K-means
    initialization (the penalty weight is reused from it as well).
    """
    variant = config.variant
    if variant == "mwmc" and dataset.contexts is None:
        raise MultilevelError("mwmc needs a dataset with contexts")
    m = dataset.m
    scales = _local_scales(dataset, config)
    contexts = dataset.contexts if variant == "mwmc" else None

    # ---- initialization
    shared = None
    centroids = None
    if init_state is not None:
        locals_ = list(init_state.locals)
        globals_ = list(init_state.globals)
        shared = init_state.shared_atoms
        centroids = init_state.context_centroids
    else:
        locals_, globals_, _ = three_stage_kmeans(
            dataset, config.k_j, config.M, config.L, config.seed)
        if variant == "mwms":
            pooled = dataset.all_points()
            K = min(config.K, np.unique(pooled, axis=0).shape[0])
            shared, _, _ = lloyd_kmeans(pooled, K, seed=config.seed)
            locals_ = []
            for j in range(m):
                w = _project_weights(dataset.empirical(j), shared)
                locals_.append(DiscreteMeasure(shared, w / w.sum()))
        if variant == "mwmc":
            distinct = np.unique(dataset.contexts, axis=0).shape[0]
            M_eff = min(config.M, distinct)
            centroids, _, _ = lloyd_kmeans(dataset.contexts, M_eff,
                                           seed=config.seed)
            if M_eff < config.M:
                pad = np.repeat(centroids[-1:], config.M - M_eff, axis=0)
                centroids = np.vstack([centroids, pad])

    if init_state is not None:
        lam = float(init_state.lam)
    elif config.lam == "auto":
        lam = lambda_heuristic(locals_, globals_, dataset, config)
    else:
        lam = float(config.lam)

    D = _assignment_costs(locals_, globals_, config, contexts, centroids,
                          workers)
    assignments = np.argmin(D, axis=1)
    local_costs = _local_costs(locals_, dataset, config, workers)
    trace = [float(local_costs.sum() + lam / m * D.min(axis=1).sum())]
    flags = {}

    converged = False
    for it in range(1, config.max_iter + 1):
        # ---- step 1: local updates at the current assignment
        if variant == "mwms":
            before = float(local_costs.sum()
                           + lam / m * D[np.arange(m), assignments].sum())
            moved, stale = _mwms_atom_update(
                locals_, dataset, globals_, assignments, shared, lam, config)
            if stale.size:
                flags.setdefault("stale_atoms", []).extend(
                    int(i) for i in stale)
            cand = par_map(_shared_weight_task,
                           [(dataset.empirical(j), globals_[assignments[j]],
                             scales[j], lam / m, moved, config)
                            for j in range(m)], workers)
            cand_local = _local_costs(cand, dataset, config, workers)
            cand_global = np.array([
                _pair_cost(G, globals_[assignments[j]], config.order,
                           config.tau, config.include_entropy,
                           config.inner_tol, config.inner_max_iter)
                for j, G in enumerate(cand)])
            after = float(cand_local.sum() + lam / m * cand_global.sum())
            if after <= before:
                shared, locals_ = moved, cand
                local_costs = cand_local
        else:
            results = par_map(
                _local_update_task,
                [(locals_[j], dataset.empirical(j),
                  globals_[assignments[j]], scales[j], lam / m, config.k_j,
                  config, _task_seed(config.seed, it, j))
                 for j in range(m)], workers)
            locals_ = [r[0] for r in results]
            local_costs = np.array([r[1] for r in results])

        # ---- step 2: reassign with the updated locals
        D = _assignment_costs(locals_, globals_, config, contexts,
                              centroids, workers)
        assignments = np.argmin(D, axis=1)

        # ---- step 3: per-cluster global updates
        clusters = [np.nonzero(assignments == i)[0]
                    for i in range(len(globals_))]
        globals_ = par_map(
            _h_update_task,
            [(globals_[i], [locals_[l] for l in members], config,
              _task_seed(config.seed, it, 10_000 + i))
             for i, members in enumerate(clusters)], workers)
        if variant == "mwmc":
            centroids = centroids.copy()
            for i, members in enumerate(clusters):
                if members.size:
                    centroids[i] = dataset.contexts[members].mean(axis=0)

        # empty clusters restart from the group worst served by its own
        # assignment; harmless for the objective since nothing points at
        # the reseeded slot
        empty = [i for i, members in enumerate(clusters) if members.size == 0]
        if empty:
            far = int(np.argmax(D[np.arange(m), assignments]))
            for i in empty:
                globals_[i] = locals_[far]
                if centroids is not None:
                    centroids[i] = dataset.contexts[far]

        D = _assignment_costs(locals_, globals_, config, contexts,
                              centroids, workers)
        obj = float(local_costs.sum() + lam / m * D.min(axis=1).sum())
        trace.append(obj)
        if on_iteration is not None:
            on_iteration()
        prev = trace[-2]
        if abs(prev - obj) < config.tol * max(abs(prev), 1.0):
            converged = True
            break
        assignments = np.argmin(D, axis=1)

    if not converged:
        flags["non_convergence"] = True
    assignments = np.argmin(D, axis=1)
    return MultilevelState(
        locals=tuple(locals_), globals=tuple(globals_),
        assignments=assignments, objective_trace=trace, lam=lam,
        shared_atoms=np.array(shared) if shared is not None else None,
        context_centroids=centroids, converged=converged, flags=flags)


def fit_mwm(dataset, config: FitConfig, workers=1, on_iteration=None):
    """Free-support multilevel means (order-2 costs)."""
    if config.variant != "mwm":
        raise MultilevelError("config.variant must be 'mwm'")
    return fit(dataset, config, workers, on_iteration)


def fit_mwms(dataset, config: FitConfig, workers=1, on_iteration=None):
    """Shared-atom variant: all locals supported on one K-point set."""
    if config.variant != "mwms":
        raise MultilevelError("config.variant must be 'mwms'")
    if config.K < config.k_j:
        import warnings
        warnings.warn("shared atom count K is below the local budget k_j")
    return fit(dataset, config, workers, on_iteration)


def fit_mwmc(dataset, config: FitConfig, workers=1, on_iteration=None):
    """Context variant: assignment adds squared context distance."""
    if config.variant != "mwmc":
        raise MultilevelError("config.variant must be 'mwmc'")
    return fit(dataset, config, workers, on_iteration)


def fit_mwgm(dataset, config: FitConfig, workers=1, on_iteration=None):
    """Geometric-median variant: order-1 costs and W1 barycenters."""
    if config.variant != "mwgm":
        raise MultilevelError("config.variant must be 'mwgm'")
    return fit(dataset, config, workers, on_iteration)


# -------------------------------------------------- two-route equivalence

def _exact_w2_barycenter(measures) -> DiscreteMeasure:
    """Exact order-2 barycenter (uniform mix) via the multimarginal LP.

    Every support combination contributes its mean as a candidate atom;
    the LP picks the coupling.  Only meant for tiny inputs.
    """
    N = len(measures)
    sizes = [P.size for P in measures]
    combos = list(itertools.product(*[range(s) for s in sizes]))
    means = np.array([
        np.mean([np.asarray(measures[j].atoms)[c[j]] for j in range(N)],
                axis=0)
        for c in combos])
    cost = np.array([
        sum(np.sum((np.asarray(measures[j].atoms)[c[j]] - means[ci]) ** 2)
            for j in range(N)) / N
        for ci, c in enumerate(combos)])
    n_var = len(combos)
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for j in range(N):
        for i in range(sizes[j]):
            for ci, c in enumerate(combos):
                if c[j] == i:
                    rows.append(r)
                    cols.append(ci)
                    vals.append(1.0)
            rhs.append(measures[j].weights[i])
            r += 1
    A = np.zeros((r, n_var))
    A[rows, cols] = vals
    res = linprog(cost, A_eq=A, b_eq=np.asarray(rhs), bounds=(0, None),
                  method="highs")
    if not res.success:
        raise MultilevelError(f"barycenter LP failed: {res.message}")
    keep = res.x > 1e-12
    w = res.x[keep]
    return DiscreteMeasure(means[keep], w / w.sum())


def equivalence_check(local_measures, M: int):
    """Two routes to the global clustering value, both exact.

    Route one treats the groups as an empirical measure over measures
    and solves an outer transport problem against every candidate set of
    cluster representatives.  Route two scores each representative tuple
    by nearest-representative distances.  Both enumerate all partitions
    with per-cell exact barycenters; the values must coincide.
    """
    m = len(local_measures)
    if m > 5 or M > 3:
        raise MultilevelError("instance too large for exhaustive check")
    a = np.full(m, 1.0 / m)
    best_tuple = np.inf
    best_outer = np.inf
    for assign in itertools.product(range(M), repeat=m):
        cells = {}
        for j, c in enumerate(assign):
            cells.setdefault(c, []).append(j)
        reps = {c: _exact_w2_barycenter([local_measures[j] for j in members])
                for c, members in cells.items()}
        pair = {(j, c): _pair_cost(local_measures[j], reps[c], 2, None)
                for j in range(m) for c in cells}
        # route two: every group pays its assigned representative
        best_tuple = min(best_tuple,
                         sum(pair[(j, assign[j])] for j in range(m)) / m)
        # route one: outer exact transport onto the weighted rep set
        cell_ids = sorted(cells)
        q = np.array([len(cells[c]) / m for c in cell_ids])
        Douter = np.array([[pair[(j, c)] for c in cell_ids]
                           for j in range(m)])
        best_outer = min(best_outer, exact_ot_small(a, q, Douter).cost)
    return float(best_outer), float(best_tuple)
