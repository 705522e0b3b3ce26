"""Discrete probability measures, cost matrices, and grouped-data containers.

Everything here is immutable after construction and safe to share across
worker processes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

WEIGHT_SUM_TOL = 1e-9


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteMeasure:
    """A finite discrete probability measure: atoms in R^d plus simplex weights."""

    atoms: np.ndarray    # (k, d)
    weights: np.ndarray  # (k,)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise MeasureError("atoms must be a nonempty (k, d) array")
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.shape[0] != atoms.shape[0]:
            raise MeasureError(
                f"atom/weight count mismatch: {atoms.shape[0]} vs {weights.shape[0]}"
            )
        if np.any(weights < 0):
            raise MeasureError("weights must be nonnegative")
        s = weights.sum()
        if abs(s - 1.0) > WEIGHT_SUM_TOL:
            raise MeasureError(f"weights sum to {s}, not 1 within {WEIGHT_SUM_TOL}")
        weights = weights / s
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    def support(self, floor: float = 0.0) -> np.ndarray:
        """Atoms carrying mass strictly above `floor`."""
        return self.atoms[self.weights > floor]

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "DiscreteMeasure":
        return DiscreteMeasure(np.asarray(d["atoms"], dtype=float),
                               np.asarray(d["weights"], dtype=float))


def make_empirical(points) -> DiscreteMeasure:
    """Empirical measure of a point set; exact duplicates are merged.

    Duplicate detection is exact coordinate equality: continuous generators
    never collide, so collisions are deliberate constructions.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.size == 0:
        raise MeasureError("empty point set")
    uniq, counts = np.unique(pts, axis=0, return_counts=True)
    return DiscreteMeasure(uniq, counts / counts.sum())


def cost_matrix(X, Y, r: int = 2) -> np.ndarray:
    """Pairwise cost ||x - y||^r between two atom sets, r in {1, 2}."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise MeasureError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if r not in (1, 2):
        raise MeasureError(f"cost order must be 1 or 2, got {r}")
    diff = X[:, None, :] - Y[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if r == 2:
        return sq
    return np.sqrt(sq)


@dataclass(frozen=True)
class GroupedDataset:
    """m groups of raw points, with optional per-group contexts and labels."""

    groups: tuple            # tuple of (n_j, d) arrays
    contexts: np.ndarray | None = None  # (m, d2)
    labels: np.ndarray | None = None    # (m,) ints
    _empiricals: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=float) for g in self.groups)
        if len(groups) < 1:
            raise MeasureError("dataset needs at least one group")
        groups = tuple(g[:, None] if g.ndim == 1 else g for g in groups)
        d = groups[0].shape[1]
        for j, g in enumerate(groups):
            if g.shape[0] < 1:
                raise MeasureError(f"group {j} is empty")
            if g.shape[1] != d:
                raise MeasureError(f"group {j} has dimension {g.shape[1]}, expected {d}")
            g.setflags(write=False)
        object.__setattr__(self, "groups", groups)
        if self.contexts is not None:
            ctx = np.asarray(self.contexts, dtype=float)
            if ctx.ndim == 1:
                ctx = ctx[:, None]
            if ctx.shape[0] != len(groups):
                raise MeasureError("contexts count must equal group count")
            ctx.setflags(write=False)
            object.__setattr__(self, "contexts", ctx)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=int)
            if lab.shape[0] != len(groups):
                raise MeasureError("labels count must equal group count")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)
        object.__setattr__(
            self, "_empiricals", tuple(make_empirical(g) for g in groups))

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def dim(self) -> int:
        return self.groups[0].shape[1]

    def empirical(self, j: int) -> DiscreteMeasure:
        return self._empiricals[j]

    def all_points(self) -> np.ndarray:
        return np.vstack(self.groups)


def save_dataset(dataset: GroupedDataset, path) -> None:
    """Write a dataset as JSON Lines, one object per group."""
    with open(path, "w") as fh:
        for j, g in enumerate(dataset.groups):
            rec = {"group_id": j, "points": g.tolist()}
            if dataset.contexts is not None:
                rec["context"] = dataset.contexts[j].tolist()
            if dataset.labels is not None:
                rec["label"] = int(dataset.labels[j])
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> GroupedDataset:
    groups, contexts, labels = [], [], []
    with open(path) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    records.sort(key=lambda r: r["group_id"])
    for rec in records:
        groups.append(np.asarray(rec["points"], dtype=float))
        if "context" in rec:
            contexts.append(np.asarray(rec["context"], dtype=float))
        if "label" in rec:
            labels.append(int(rec["label"]))
    if not groups:
        raise MeasureError("empty dataset file")
    ctx = np.asarray(contexts) if len(contexts) == len(groups) else None
    lab = np.asarray(labels) if len(labels) == len(groups) else None
    return GroupedDataset(tuple(groups), ctx, lab)
