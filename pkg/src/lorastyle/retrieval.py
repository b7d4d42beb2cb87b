"""Exact nearest-neighbor retrieval over embeddings, with ranking metrics.

At the scale this package targets (a few thousand database entries) a
brute-force scan is sub-millisecond and keeps metric tables free of the
nondeterminism an approximate index would add. Euclidean distance is the
native metric for weight-space embeddings; cosine distance is provided for
externally computed feature baselines.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, CoverageError, LengthError, NumericError


class Metric(enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class Scenario(enum.Enum):
    """How the database embedding and the query were obtained (metadata only)."""

    ORIG_ORIG = "orig+orig"
    ORIG_GEN = "orig+gen"
    GEN_ORIG = "gen+orig"
    GEN_GEN = "gen+gen"


@dataclass
class RetrievalIndex:
    """Immutable coordinate matrix with ids, labels, and a distance metric."""

    coords: np.ndarray
    sample_ids: list[str]
    labels: list[str]
    metric: Metric = Metric.EUCLIDEAN
    _id_rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        n = self.coords.shape[0]
        if len(self.sample_ids) != n or len(self.labels) != n:
            raise LengthError(
                f"{n} rows vs {len(self.sample_ids)} ids / {len(self.labels)} labels"
            )
        if not np.isfinite(self.coords).all():
            raise NumericError("index coordinates must be finite")
        # rank of each row's id in sorted order, for deterministic tie-breaks
        order = sorted(range(n), key=lambda i: self.sample_ids[i])
        self._id_rank = np.empty(n, dtype=np.int64)
        self._id_rank[order] = np.arange(n)

    @property
    def num_pcs(self) -> int:
        return int(self.coords.shape[1])

    def __len__(self) -> int:
        return int(self.coords.shape[0])


@dataclass
class RankedResult:
    """Neighbors ordered by non-decreasing distance, ties by ascending id."""

    query_id: str
    entries: list[tuple[str, float]]

    def ids(self) -> list[str]:
        return [sid for sid, _ in self.entries]


@dataclass
class RetrievalReport:
    query_ids: list[str]
    ap: list[float]
    recall: list[float]
    mean_ap: float
    mean_recall: float
    top_k: int
    scenario: Scenario | None = None


def _distances(index: RetrievalIndex, query: np.ndarray) -> np.ndarray:
    if index.metric is Metric.EUCLIDEAN:
        diff = index.coords - query
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    norms = np.linalg.norm(index.coords, axis=1)
    qnorm = float(np.linalg.norm(query))
    if qnorm == 0.0:
        return np.ones(len(index))
    out = np.full(len(index), np.inf)  # zero-norm rows sort last
    ok = norms > 0
    out[ok] = 1.0 - (index.coords[ok] @ query) / (norms[ok] * qnorm)
    return out


def knn_query(index: RetrievalIndex, query: np.ndarray, top_k: int) -> RankedResult:
    """Exact scan returning the top_k nearest entries."""
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    if query.shape[0] != index.num_pcs:
        raise LengthError(f"query has {query.shape[0]} axes, index has {index.num_pcs}")
    if not 1 <= top_k <= len(index):
        raise ConfigError(f"top_k={top_k} outside [1, {len(index)}]")
    dists = _distances(index, query)
    order = np.lexsort((index._id_rank, dists))[:top_k]
    return RankedResult(
        query_id="",
        entries=[(index.sample_ids[i], float(dists[i])) for i in order],
    )


def average_precision(result: RankedResult, relevant: set[str]) -> float:
    """AP over the ranked list: mean of precision at each relevant hit,
    normalized by the number of relevant items reachable within the list."""
    if not relevant:
        raise ConfigError("relevant set is empty")
    denom = min(len(relevant), len(result.entries))
    hits = 0
    total = 0.0
    for rank, (sid, _) in enumerate(result.entries, start=1):
        if sid in relevant:
            hits += 1
            total += hits / rank
    if hits == 0:
        return 0.0
    return total / denom


def recall_at_k(result: RankedResult, relevant: set[str], k: int) -> float:
    """Fraction of the relevant set present in the top k entries."""
    if not relevant:
        raise ConfigError("relevant set is empty")
    if k > len(result.entries):
        raise ConfigError(f"k={k} exceeds ranked list length {len(result.entries)}")
    top = {sid for sid, _ in result.entries[:k]}
    return len(top & relevant) / len(relevant)


@dataclass
class LabeledQueries:
    """Query coordinates with ids and artist labels."""

    ids: list[str]
    labels: list[str]
    coords: np.ndarray

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim == 1:
            self.coords = self.coords[None, :]
        if len(self.ids) != self.coords.shape[0] or len(self.labels) != self.coords.shape[0]:
            raise LengthError("query ids/labels do not match coordinate rows")


def retrieval_eval(
    index: RetrievalIndex,
    queries: LabeledQueries,
    top_k: int,
    scenario: Scenario | None = None,
) -> RetrievalReport:
    """Rank the full database for each query; relevance = same artist label.

    AP uses the full ranking, Recall is reported at top_k.
    """
    known = set(index.labels)
    aps: list[float] = []
    recalls: list[float] = []
    for qid, label, coords in zip(queries.ids, queries.labels, queries.coords):
        if label not in known:
            raise CoverageError(f"query {qid!r} label {label!r} absent from the index")
        relevant = {sid for sid, lab in zip(index.sample_ids, index.labels) if lab == label}
        ranked = knn_query(index, coords, top_k=len(index))
        ranked.query_id = qid
        aps.append(average_precision(ranked, relevant))
        recalls.append(recall_at_k(ranked, relevant, top_k))
    return RetrievalReport(
        query_ids=list(queries.ids),
        ap=aps,
        recall=recalls,
        mean_ap=float(np.mean(aps)),
        mean_recall=float(np.mean(recalls)),
        top_k=top_k,
        scenario=scenario,
    )


def aggregate_features(features: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise mean of equal-length vectors (order-independent)."""
    if not len(features):
        raise ConfigError("need at least one feature vector")
    arrays = [np.asarray(f, dtype=np.float64).reshape(-1) for f in features]
    length = arrays[0].shape[0]
    for i, arr in enumerate(arrays):
        if arr.shape[0] != length:
            raise LengthError(f"vector {i} has length {arr.shape[0]}, expected {length}")
    return np.mean(arrays, axis=0)


# -- feature-vector file ingestion -----------------------------------------


def read_feature_vector(path: str | Path) -> np.ndarray:
    """Load one vector: CSV (one float per line or one comma-separated row)
    for ``.csv`` paths, raw little-endian float32 otherwise."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        text = path.read_text(encoding="utf-8").strip()
        parts = text.split(",") if "," in text else text.split()
        return np.asarray([float(p) for p in parts if p.strip()], dtype=np.float64)
    return np.frombuffer(path.read_bytes(), dtype="<f4").astype(np.float64)


def write_feature_vector(path: str | Path, values: np.ndarray) -> None:
    path = Path(path)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if path.suffix.lower() == ".csv":
        path.write_text(",".join(repr(float(v)) for v in values) + "\n", encoding="utf-8")
    else:
        path.write_bytes(values.astype("<f4").tobytes())
