"""k-means over embedding coordinates and partition agreement metrics.

The clusterer is deterministic given (points, k, seed): greedy k-means++
seeding (several D^2-sampled candidates per step, keep the one with the
lowest resulting potential) followed by Lloyd iterations until the
assignment reaches a fixpoint or 300 iterations. Empty clusters are
repaired by reseeding to the point farthest from its current centroid.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LengthError, NumericError, SizeError

_MAX_ITER = 300


@dataclass
class Partition:
    """Cluster assignment with ids dense in [0, n_clusters)."""

    assignments: np.ndarray
    n_clusters: int

    def __post_init__(self) -> None:
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        if self.assignments.ndim != 1 or self.assignments.size == 0:
            raise SizeError("assignments must be a non-empty 1-D sequence")
        lo, hi = self.assignments.min(), self.assignments.max()
        if lo < 0 or hi >= self.n_clusters:
            raise SizeError(f"cluster ids outside [0, {self.n_clusters})")

    @classmethod
    def from_labels(cls, labels: Sequence) -> "Partition":
        """Relabel arbitrary values to dense integer ids (sorted unique order)."""
        uniq, dense = np.unique(np.asarray(labels), return_inverse=True)
        return cls(assignments=dense, n_clusters=len(uniq))

    def __len__(self) -> int:
        return int(self.assignments.size)


@dataclass
class ClusterReport:
    """Per-seed agreement scores with their mean and population std."""

    seeds: list[int]
    ari: list[float]
    nmi: list[float]
    ari_mean: float
    ari_std: float
    nmi_mean: float
    nmi_std: float


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (n, k) matrix of squared Euclidean distances, clamped at zero.
    sq = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.maximum(sq, 0.0)


def _seed_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = _squared_distances(points, centers[:1])[:, 0]
    trials = 2 + int(np.log(k)) if k > 1 else 1
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            candidates = rng.integers(n, size=trials)
        else:
            candidates = rng.choice(n, size=trials, p=closest / total)
        best_pot, best_closest, best_idx = np.inf, None, None
        for idx in candidates:
            trial = np.minimum(closest, _squared_distances(points, points[None, idx])[:, 0])
            pot = trial.sum()
            if pot < best_pot:
                best_pot, best_closest, best_idx = pot, trial, idx
        centers[c] = points[best_idx]
        closest = best_closest
    return centers


def kmeans(points: np.ndarray, k: int, seed: int = 0, n_init: int = 10) -> Partition:
    """Deterministic k-means; identical inputs give identical assignments.

    Runs ``n_init`` independent seedings drawn from one seeded generator and
    keeps the lowest-inertia result (standard restart practice).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if not np.isfinite(points).all():
        raise NumericError("points must be finite")
    n = points.shape[0]
    if k < 1 or n < k:
        raise SizeError(f"need n >= k >= 1, got n={n}, k={k}")

    rng = np.random.default_rng(seed)
    best: tuple[float, Partition] | None = None
    for _ in range(max(1, n_init)):
        inertia, partition = _lloyd(points, k, rng)
        if best is None or inertia < best[0]:
            best = (inertia, partition)
    return best[1]


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator) -> tuple[float, Partition]:
    n = points.shape[0]
    centers = _seed_centers(points, k, rng)
    assignments = np.full(n, -1, dtype=np.int64)
    last_inertia = np.inf
    for _ in range(_MAX_ITER):
        sq = _squared_distances(points, centers)
        new_assignments = np.argmin(sq, axis=1)
        inertia = float(sq[np.arange(n), new_assignments].sum())
        assert inertia <= last_inertia * (1 + 1e-9) + 1e-12, "inertia increased"
        last_inertia = inertia
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments

        counts = np.bincount(assignments, minlength=k)
        if (counts == 0).any():
            own = sq[np.arange(n), assignments].copy()
            for empty in np.nonzero(counts == 0)[0]:
                far = int(np.argmax(own))
                centers[empty] = points[far]
                assignments[far] = empty
                own[far] = -1.0
            counts = np.bincount(assignments, minlength=k)
        for c in range(k):
            if counts[c]:
                centers[c] = points[assignments == c].mean(axis=0)

    if len(np.unique(assignments)) != k:
        # pathological duplicate-point edge: compact the ids that survived
        _, assignments = np.unique(assignments, return_inverse=True)
        k = int(assignments.max()) + 1
    return last_inertia, Partition(assignments=assignments, n_clusters=k)


def partition_inertia(points: np.ndarray, partition: Partition) -> float:
    """Sum of squared distances to each cluster's mean."""
    points = np.asarray(points, dtype=np.float64)
    total = 0.0
    for c in range(partition.n_clusters):
        members = points[partition.assignments == c]
        if len(members):
            total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def _contingency(a: Partition, b: Partition) -> np.ndarray:
    if len(a) != len(b):
        raise LengthError(f"partition lengths differ: {len(a)} vs {len(b)}")
    table = np.zeros((a.n_clusters, b.n_clusters), dtype=np.int64)
    np.add.at(table, (a.assignments, b.assignments), 1)
    return table


def _comb2(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) / 2.0


def adjusted_rand_index(a: Partition, b: Partition) -> float:
    """Pair-counting agreement, corrected for chance; 1.0 for identical
    partitions (up to relabeling), and defined as 1.0 in the degenerate
    cases where the expected and maximum indices coincide."""
    table = _contingency(a, b)
    n = len(a)
    sum_cells = _comb2(table.astype(np.float64)).sum()
    sum_rows = _comb2(table.sum(axis=1).astype(np.float64)).sum()
    sum_cols = _comb2(table.sum(axis=0).astype(np.float64)).sum()
    total = _comb2(np.float64(n))
    expected = sum_rows * sum_cols / total
    maximum = (sum_rows + sum_cols) / 2.0
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


def normalized_mutual_information(a: Partition, b: Partition) -> float:
    """I(a;b) normalized by the arithmetic mean of the two entropies
    (natural log). Defined as 1.0 when both partitions are trivial."""
    table = _contingency(a, b).astype(np.float64)
    n = float(len(a))
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    h_a = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    h_b = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    pij = table / n
    outer = pa[:, None] * pb[None, :]
    mask = pij > 0
    mi = float(np.sum(pij[mask] * np.log(pij[mask] / outer[mask])))
    value = mi / ((h_a + h_b) / 2.0)
    return float(min(max(value, 0.0), 1.0))


def cluster_eval_run(
    points: np.ndarray,
    labels: Sequence,
    k: int,
    seeds: Sequence[int],
    workers: int = 1,
) -> ClusterReport:
    """k-means per seed, scored against ground-truth labels."""
    if not len(seeds):
        raise SizeError("need at least one seed")
    points = np.asarray(points, dtype=np.float64)
    if len(labels) != points.shape[0]:
        raise LengthError(f"{len(labels)} labels for {points.shape[0]} points")
    truth = Partition.from_labels(labels)
    seeds = [int(s) for s in seeds]

    def run(seed: int) -> tuple[float, float]:
        part = kmeans(points, k, seed)
        return adjusted_rand_index(part, truth), normalized_mutual_information(part, truth)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(run, seeds))
    else:
        scores = [run(s) for s in seeds]
    ari = [float(s[0]) for s in scores]
    nmi = [float(s[1]) for s in scores]
    return ClusterReport(
        seeds=seeds,
        ari=ari,
        nmi=nmi,
        ari_mean=float(np.mean(ari)),
        ari_std=float(np.std(ari)),
        nmi_mean=float(np.mean(nmi)),
        nmi_std=float(np.std(nmi)),
    )
