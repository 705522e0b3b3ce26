"""Weighted geometric median by a stabilized Weiszfeld iteration.

The update handles iterates that land exactly on a data point, so no
perturbation hacks are needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MedianError(RuntimeError):
    def __init__(self, msg, last_iterate=None, step_norm=None):
        super().__init__(msg)
        self.last_iterate = last_iterate
        self.step_norm = step_norm


@dataclass
class MedianProblem:
    """Distinct weighted points; coincident inputs are merged on construction."""

    points: np.ndarray            # (m, d)
    weights: np.ndarray           # (m,), all > 0
    tol: float = 1e-9
    max_iter: int = 1000

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.shape[0]:
            raise MedianError("point/weight count mismatch")
        if np.any(w <= 0):
            raise MedianError("weights must be positive")
        uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inverse.ravel(), w)
        self.points = uniq
        self.weights = merged

    def objective(self, x) -> float:
        d = np.linalg.norm(self.points - np.asarray(x, dtype=float), axis=1)
        return float(self.weights @ d)


def weighted_geometric_median(problem: MedianProblem, init=None) -> np.ndarray:
    """Minimize sum_i eta_i ||X_i - x|| over x.

    Each step blends the weighted-inverse-distance mean with the current
    iterate; when the iterate coincides with a data point, that point's
    weight damps the step so the iteration stays well defined (the 0/0
    case resolves to staying put, which is then optimal).
    """
    X, eta = problem.points, problem.weights
    if X.shape[0] == 1:
        return X[0].copy()
    x = np.asarray(init, dtype=float) if init is not None \
        else (eta @ X) / eta.sum()
    for _ in range(problem.max_iter):
        dist = np.linalg.norm(X - x, axis=1)
        # Weiszfeld crawls when the optimum sits on a data point, so test
        # the optimality condition at the nearest point directly.
        near = int(np.argmin(dist))
        if _optimal_at_point(X, eta, near):
            return X[near].copy()
        at_point = dist < 1e-15
        eta_x = float(eta[at_point].sum())
        others = ~at_point
        inv = eta[others] / dist[others]
        denom = inv.sum()
        if denom == 0.0:
            return x  # all mass sits at x
        t_tilde = (inv @ X[others]) / denom
        r_tilde = np.linalg.norm(inv @ (X[others] - x))
        if eta_x > 0 and r_tilde <= eta_x:
            return x  # optimality condition at a data point
        ratio = eta_x / r_tilde if r_tilde > 0 else 0.0
        x_new = max(1.0 - ratio, 0.0) * t_tilde + min(1.0, ratio) * x
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step < problem.tol:
            return x
    raise MedianError(
        f"geometric median did not converge in {problem.max_iter} iterations "
        f"(last step {step:.3e})", last_iterate=x, step_norm=step)


def _optimal_at_point(X, eta, i) -> bool:
    """First-order optimality of the median objective at data point X_i:
    the pull from the other points does not exceed the weight at X_i."""
    diff = np.delete(X, i, axis=0) - X[i]
    d = np.linalg.norm(diff, axis=1)
    pull = np.delete(eta, i) / d @ diff
    return float(np.linalg.norm(pull)) <= eta[i] + 1e-15
