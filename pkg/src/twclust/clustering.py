"""K-means style partitioning of curves under the TW measure or L2."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import FunctionalDataset
from .errors import ParameterError
from .measure import MeasureConfig, TWKernel, WindowSet, build_windows, combine

TW = "tw"
L2 = "l2"
DISTANCES = (TW, L2)


@dataclass(frozen=True)
class ClusterOptions:
    max_iterations: int = 100
    restarts: int = 10
    seed: int = 0
    tolerance: int = 0
    distance: str = TW
    measure: MeasureConfig = field(default_factory=MeasureConfig)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be at least 1")
        if self.restarts < 1:
            raise ParameterError("restarts must be at least 1")
        if self.tolerance < 0:
            raise ParameterError("tolerance must be nonnegative")
        if self.distance not in DISTANCES:
            raise ParameterError(f"distance must be one of {DISTANCES}, got {self.distance!r}")

    def with_alpha(self, alpha: float) -> "ClusterOptions":
        return ClusterOptions(
            self.max_iterations, self.restarts, self.seed, self.tolerance,
            self.distance, self.measure.with_alpha(alpha),
        )


@dataclass(frozen=True, eq=False)
class Clustering:
    """Result of :func:`cluster`.

    ``assignments`` are 0-based cluster indices. ``objective`` is the
    within-cluster sum the restarts were ranked by (sum of TW values, or the
    sum of squared L2 distances).
    """

    assignments: np.ndarray
    centers: np.ndarray
    sizes: np.ndarray
    overall_center: np.ndarray
    k: int
    converged: bool
    iterations: int
    objective: float

    def members(self, ell: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == ell)


def l2_distance(y, c) -> float:
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    if y.shape != c.shape:
        raise ParameterError(f"dimension mismatch: {y.shape} vs {c.shape}")
    return float(np.sqrt(np.sum((y - c) ** 2)))


def cost_matrix(values, centers, distance: str, measure: MeasureConfig,
                windows: Optional[WindowSet]):
    """Assignment cost of every curve against every center, shape ``(n, k)``.

    TW mode returns ``TW_alpha``; L2 mode returns squared Euclidean distance.
    """
    return cost_function(values, distance, measure, windows)(centers)


def cost_function(values, distance: str, measure: MeasureConfig, windows: Optional[WindowSet]):
    """Return ``centers -> (n, k) costs`` for the fixed curves ``values``."""
    values = np.asarray(values, dtype=float)
    if distance == L2:
        def l2_costs(centers):
            centers = np.atleast_2d(np.asarray(centers, dtype=float))
            diff = values[:, None, :] - centers[None, :, :]
            return np.einsum("ijk,ijk->ij", diff, diff)

        return l2_costs
    kernel = TWKernel(values, windows, measure)
    alpha = measure.alpha

    def tw_costs(centers):
        return combine(*kernel.components(centers), alpha)

    return tw_costs


def _means(values, labels, k):
    onehot = np.zeros((k, values.shape[0]))
    onehot[labels, np.arange(values.shape[0])] = 1.0
    sums = onehot @ values
    counts = np.bincount(labels, minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts[:, None], counts


def _repair(values, labels, k, cost_fn):
    """Reseed empty clusters with the curve worst served by its current center."""
    labels = labels.copy()
    while True:
        centers, counts = _means(values, labels, k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return labels, centers, counts
        full = cost_fn(np.nan_to_num(centers))
        own = full[np.arange(values.shape[0]), labels]
        movable = counts[labels] > 1
        own = np.where(movable, own, -np.inf)
        # first index among equal maxima
        i = int(np.argmax(own))
        labels[i] = empty[0]


def recenter(dataset, assignments, k: Optional[int] = None, cost_fn=None):
    """Pointwise mean of each cluster and of all curves.

    Returns ``(centers, overall_center, assignments)``. Empty clusters are
    repaired first by moving the curve with the largest cost to its own center
    (squared L2 unless ``cost_fn``, a ``centers -> (n, k)`` callable, is
    given); the returned assignments reflect
    any such move.
    """
    values = dataset.values if isinstance(dataset, FunctionalDataset) else np.asarray(dataset, float)
    labels = np.asarray(assignments, dtype=int)
    if k is None:
        k = int(labels.max()) + 1
    if labels.shape != (values.shape[0],):
        raise ParameterError("one assignment per curve required")
    if labels.min() < 0 or labels.max() >= k:
        raise ParameterError(f"assignments must lie in 0..{k - 1}")
    if k > values.shape[0]:
        raise ParameterError("more clusters than curves")
    if cost_fn is None:
        cost_fn = cost_function(values, L2, None, None)
    labels, centers, _ = _repair(values, labels, k, cost_fn)
    return centers, values.mean(axis=0), labels


def _lloyd(values, k, init_idx, options, windows, cost_fn):
    centers = values[init_idx].copy()
    prev = None
    converged = False
    it = 0
    labels = None
    for it in range(1, options.max_iterations + 1):
        costs = cost_fn(centers)
        labels = np.argmin(costs, axis=1)
        labels, centers, _ = _repair(values, labels, k, cost_fn)
        if prev is not None and np.count_nonzero(labels != prev) <= options.tolerance:
            converged = True
            break
        prev = labels
    counts = np.bincount(labels, minlength=k)
    costs = cost_fn(centers)
    objective = float(costs[np.arange(values.shape[0]), labels].sum())
    return labels, centers, counts, converged, it, objective


def cluster(dataset: FunctionalDataset, k: int, options: Optional[ClusterOptions] = None,
            init=None) -> Clustering:
    """Partition the curves of ``dataset`` into ``k`` clusters.

    Lloyd-style alternation: assign each curve to the center with the smallest
    cost, then move each center to the pointwise mean of its members. The best
    of ``options.restarts`` random initializations (distinct curves drawn
    without replacement) is returned. ``init``, a sequence of ``k`` curve
    indices, replaces the random starts with a single run.
    """
    if options is None:
        options = ClusterOptions()
    n = dataset.n
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k}")
    if k > n:
        raise ParameterError(f"k={k} exceeds the number of curves n={n}")
    k = int(k)
    values = dataset.values
    overall = values.mean(axis=0)

    windows = None
    if options.distance == TW:
        windows = build_windows(dataset.grid, options.measure.m)

    cost_fn = cost_function(values, options.distance, options.measure, windows)

    if k == 1:
        labels = np.zeros(n, dtype=int)
        centers = overall[None, :].copy()
        objective = float(cost_fn(centers).sum())
        return _freeze(Clustering(labels, centers, np.array([n]), overall, 1, True, 0, objective))

    if init is not None:
        init = np.asarray(init, dtype=int)
        if init.shape != (k,) or len(set(init.tolist())) != k or init.min() < 0 or init.max() >= n:
            raise ParameterError("init must hold k distinct curve indices")
        starts = [init]
    else:
        streams = np.random.SeedSequence([options.seed, k]).spawn(options.restarts)
        starts = [np.random.default_rng(ss).choice(n, size=k, replace=False) for ss in streams]
    best = None
    for init_idx in starts:
        run = _lloyd(values, k, init_idx, options, windows, cost_fn)
        if best is None or run[5] < best[5]:
            best = run
    labels, centers, counts, converged, it, objective = best
    return _freeze(Clustering(labels, centers, counts, overall.copy(), k, converged, it, objective))


def _freeze(c: Clustering) -> Clustering:
    for a in (c.assignments, c.centers, c.sizes, c.overall_center):
        a.setflags(write=False)
    return c
