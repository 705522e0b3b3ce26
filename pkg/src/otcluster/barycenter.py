"""Wasserstein barycenters of discrete measures.

Three solvers:
  * fixed_support_barycenter: weights only, accelerated dual averaging on
    the simplex driven by Sinkhorn dual subgradients (entropic), or a
    joint linear program (exact mode, tau=None).
  * free_support_barycenter_w2: alternates the weight solve with the
    plan-weighted atom mean update, order-2 ground cost.
  * free_support_barycenter_w1: same outer loop but order-1 cost and
    per-atom weighted geometric medians.

All solvers keep the outer objective (mix-weighted plan cost) non
increasing by backtracking the atom step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .geomedian import MedianError, MedianProblem, weighted_geometric_median
from .kmeans import kmeans_pp_init
from .measures import DiscreteMeasure, cost_matrix
from .transport import TransportError, exact_dual_b, exact_ot_small, sinkhorn

WEIGHT_FLOOR = 1e-12


class BarycenterError(RuntimeError):
    pass


@dataclass
class BarycenterProblem:
    inputs: list                      # DiscreteMeasure x N
    mix_weights: np.ndarray | None = None  # simplex over N; None = uniform
    support_budget: int = 1
    tau: float | None = None          # None or 0 -> exact transport
    order: int = 2
    inner_tol: float = 1e-6
    inner_max_iter: int = 2000

    def __post_init__(self):
        if len(self.inputs) < 1:
            raise BarycenterError("need at least one input measure")
        if self.mix_weights is None:
            self.mix_weights = np.full(len(self.inputs), 1.0 / len(self.inputs))
        w = np.asarray(self.mix_weights, dtype=float).ravel()
        if w.shape[0] != len(self.inputs) or np.any(w < 0) \
                or abs(w.sum() - 1.0) > 1e-9:
            raise BarycenterError("mix_weights must lie on the simplex over N")
        self.mix_weights = w
        if self.support_budget < 1:
            raise BarycenterError("support_budget must be >= 1")

    @property
    def exact(self) -> bool:
        return self.tau is None or self.tau == 0


def support_bound(sizes) -> int:
    """Atom budget sufficient for an exact barycenter: sum(s_i) - N + 1."""
    sizes = list(sizes)
    if any(s < 1 for s in sizes):
        raise BarycenterError("support sizes must be >= 1")
    return sum(sizes) - len(sizes) + 1


def _plan(a, b, M, problem):
    if problem.exact:
        return exact_ot_small(a, b, M)
    try:
        return sinkhorn(a, b, M, problem.tau,
                        tol=problem.inner_tol, max_iter=problem.inner_max_iter)
    except TransportError:
        # degenerate instance where the scaling iteration stalls; the
        # exact plan is a sound stand-in for the update formulas
        return exact_ot_small(a, b, M)


def barycenter_objective(problem: BarycenterProblem, Y, b) -> float:
    """Mix-weighted plan cost of transporting every input onto (Y, b)."""
    total = 0.0
    for P, w in zip(problem.inputs, problem.mix_weights):
        M = cost_matrix(P.atoms, Y, problem.order)
        total += w * _plan(P.weights, b, M, problem).cost
    return total


def fixed_support_barycenter(problem: BarycenterProblem, support,
                             t0=None, tol=1e-6, max_iter=300) -> np.ndarray:
    """Barycenter weights on a fixed support.

    Entropic mode runs accelerated dual averaging: the running average
    b_hat is queried through Sinkhorn duals and the inner point b_tilde
    takes multiplicative subgradient steps.  Exact mode solves the joint
    transport LP over all inputs and the weight vector.
    """
    Y = np.atleast_2d(np.asarray(support, dtype=float))
    if problem.exact:
        b, _ = _exact_fixed_support(problem, Y)
        return b
    costs = [cost_matrix(P.atoms, Y, problem.order) for P in problem.inputs]
    if t0 is None:
        t0 = 0.5 / max(M.mean() for M in costs)
    k = Y.shape[0]
    b_tilde = np.full(k, 1.0 / k)
    b_hat = b_tilde.copy()
    stalled = False
    for t in range(1, max_iter + 1):
        beta = (t + 1) / 2.0
        b = (1 - 1 / beta) * b_hat + (1 / beta) * b_tilde
        alpha = np.zeros(k)
        for P, M, w in zip(problem.inputs, costs, problem.mix_weights):
            if not stalled:
                try:
                    alpha += w * sinkhorn(
                        P.weights, b, M, problem.tau,
                        tol=problem.inner_tol,
                        max_iter=problem.inner_max_iter).dual_b
                    continue
                except TransportError:
                    # entropic dual stalled on a degenerate face; from
                    # here on use the exact dual, a subgradient of the
                    # unregularized objective, to keep averaging moving
                    stalled = True
            alpha += w * exact_dual_b(P.weights, b, M)
        with np.errstate(over="raise"):
            try:
                b_tilde = b_tilde * np.exp(-t0 * beta * alpha)
            except FloatingPointError:
                raise BarycenterError(
                    "weight iterate diverged; retry with a smaller t0")
        s = b_tilde.sum()
        if not np.isfinite(s) or s <= 0:
            raise BarycenterError(
                "weight iterate diverged; retry with a smaller t0")
        b_tilde /= s
        b_hat_new = (1 - 1 / beta) * b_hat + (1 / beta) * b_tilde
        delta = np.abs(b_hat_new - b_hat).max()
        b_hat = b_hat_new
        if t > 2 and delta < tol:
            break
    return b_hat


def _exact_fixed_support(problem: BarycenterProblem, Y):
    """Joint LP: min over (T_1..T_N, b) of sum_j w_j <T_j, M_j>.

    Returns (b, plans).  Variable layout: flattened plans then b.
    """
    k = Y.shape[0]
    sizes = [P.size for P in problem.inputs]
    n_plan = sum(s * k for s in sizes)
    c = np.concatenate(
        [w * cost_matrix(P.atoms, Y, problem.order).ravel()
         for P, w in zip(problem.inputs, problem.mix_weights)]
        + [np.zeros(k)])
    rows, cols, vals, rhs = [], [], [], []
    row = 0
    offset = 0
    for P, s in zip(problem.inputs, sizes):
        for i in range(s):                      # row sums = a_j
            cols.extend(offset + i * k + np.arange(k))
            rows.extend([row] * k)
            vals.extend([1.0] * k)
            rhs.append(P.weights[i])
            row += 1
        for v in range(k):                      # column sums = b (free)
            cols.extend(offset + np.arange(s) * k + v)
            rows.extend([row] * s)
            vals.extend([1.0] * s)
            cols.append(n_plan + v)
            rows.append(row)
            vals.append(-1.0)
            rhs.append(0.0)
            row += 1
        offset += s * k
    cols.extend(n_plan + np.arange(k))          # b on the simplex
    rows.extend([row] * k)
    vals.extend([1.0] * k)
    rhs.append(1.0)
    row += 1
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(row, n_plan + k))
    res = linprog(c, A_eq=A, b_eq=np.asarray(rhs), bounds=(0, None),
                  method="highs")
    if not res.success:
        raise BarycenterError(f"barycenter LP failed: {res.message}")
    b = res.x[n_plan:]
    b = np.clip(b, 0.0, None)
    b /= b.sum()
    plans = []
    offset = 0
    for s in sizes:
        plans.append(res.x[offset:offset + s * k].reshape(s, k))
        offset += s * k
    return b, plans


def _init_support(problem: BarycenterProblem, k, seed):
    pooled = np.vstack([P.atoms for P in problem.inputs])
    kk = min(k, np.unique(pooled, axis=0).shape[0])
    return kmeans_pp_init(pooled, kk, seed)


def _solve_weights_and_plans(problem, Y, weight_tol, weight_iters):
    if problem.exact:
        b, plans = _exact_fixed_support(problem, Y)
    else:
        b = fixed_support_barycenter(problem, Y, tol=weight_tol,
                                     max_iter=weight_iters)
        plans = [
            _plan(P.weights, b, cost_matrix(P.atoms, Y, problem.order),
                  problem).coupling
            for P in problem.inputs]
    return b, plans


def free_support_barycenter_w2(problem: BarycenterProblem, init=None,
                               theta=1.0, tol=1e-7, max_iter=200, seed=0,
                               weight_tol=1e-6, weight_iters=300
                               ) -> DiscreteMeasure:
    """Order-2 free-support barycenter.

    Alternates the fixed-support weight solve with the atom update
    Y <- (1-theta) Y + theta (sum_j w_j T_j^T X_j) / b, backtracking on
    theta whenever the step would increase the objective.  Atoms whose
    mass falls under the floor are resampled from the pooled input atoms
    once, then frozen.
    """
    if problem.order != 2:
        raise BarycenterError("use free_support_barycenter_w1 for order 1")
    return _free_support_loop(problem, init, theta, tol, max_iter, seed,
                              weight_tol, weight_iters, _w2_atom_update)


def free_support_barycenter_w1(problem: BarycenterProblem, init=None,
                               theta=1.0, tol=1e-7, max_iter=200, seed=0,
                               weight_tol=1e-6, weight_iters=300
                               ) -> DiscreteMeasure:
    """Order-1 free-support barycenter; atoms move toward the weighted
    geometric median of the input atoms under the current plans."""
    if problem.order != 1:
        raise BarycenterError("problem.order must be 1")
    return _free_support_loop(problem, init, theta, tol, max_iter, seed,
                              weight_tol, weight_iters, _w1_atom_update)


def _w2_atom_update(problem, Y, b, plans, frozen):
    num = np.zeros_like(Y)
    for P, T, w in zip(problem.inputs, plans, problem.mix_weights):
        num += w * (T.T @ P.atoms)
    denom = np.maximum(b, WEIGHT_FLOOR)[:, None]
    target = num / denom
    target[frozen] = Y[frozen]
    return target


def _w1_atom_update(problem, Y, b, plans, frozen):
    target = Y.copy()
    for i in range(Y.shape[0]):
        if frozen[i]:
            continue
        pts, wts = [], []
        for P, T, w in zip(problem.inputs, plans, problem.mix_weights):
            mass = w * T[:, i]
            keep = mass > WEIGHT_FLOOR
            if np.any(keep):
                pts.append(P.atoms[keep])
                wts.append(mass[keep])
        if not pts:
            continue
        prob = MedianProblem(np.vstack(pts), np.concatenate(wts), tol=1e-9)
        try:
            target[i] = weighted_geometric_median(prob, init=Y[i])
        except MedianError as err:
            # a slow inner solve is still a usable descent direction;
            # the outer backtracking guards the objective
            target[i] = err.last_iterate
    return target


def _free_support_loop(problem, init, theta, tol, max_iter, seed,
                       weight_tol, weight_iters, atom_update):
    k = problem.support_budget
    if init is not None:
        Y = np.array(init.atoms, dtype=float) if isinstance(init, DiscreteMeasure) \
            else np.atleast_2d(np.asarray(init, dtype=float)).copy()
    else:
        Y = _init_support(problem, k, seed)
    rng = np.random.default_rng(seed)
    pooled = np.vstack([P.atoms for P in problem.inputs])
    resampled = np.zeros(Y.shape[0], dtype=bool)

    b, plans = _solve_weights_and_plans(problem, Y, weight_tol, weight_iters)
    obj = _plan_cost(problem, Y, b, plans)
    for _ in range(max_iter):
        low_mass = b < WEIGHT_FLOOR
        frozen = low_mass & resampled
        fresh = low_mass & ~resampled
        if np.any(fresh):
            Y[fresh] = pooled[rng.integers(pooled.shape[0], size=fresh.sum())]
            resampled |= fresh
        target = atom_update(problem, Y, b, plans, frozen)

        # atom step with b held fixed, halving until it does not hurt
        step = theta
        accepted = False
        for _ in range(20):
            Y_new = (1 - step) * Y + step * target
            plans_new = [
                _plan(P.weights, b,
                      cost_matrix(P.atoms, Y_new, problem.order),
                      problem).coupling
                for P in problem.inputs]
            obj_new = _plan_cost(problem, Y_new, b, plans_new)
            if obj_new <= obj + 1e-12 * max(abs(obj), 1.0):
                accepted = True
                break
            step /= 2.0
        if not accepted:
            break
        Y, plans = Y_new, plans_new

        # weight solve on the moved support, kept only if it helps
        b_new, plans_b = _solve_weights_and_plans(
            problem, Y, weight_tol, weight_iters)
        obj_b = _plan_cost(problem, Y, b_new, plans_b)
        if obj_b <= obj_new:
            b, plans, obj_new = b_new, plans_b, obj_b
        rel_drop = (obj - obj_new) / max(abs(obj), 1e-30)
        obj = obj_new
        if rel_drop < tol:
            break
    b = np.maximum(b, 0.0)
    b = b / b.sum()
    return DiscreteMeasure(Y, b)


def _plan_cost(problem, Y, b, plans):
    total = 0.0
    for P, T, w in zip(problem.inputs, plans, problem.mix_weights):
        M = cost_matrix(P.atoms, Y, problem.order)
        total += w * float(np.sum(T * M))
    return total
