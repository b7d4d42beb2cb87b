"""PCA style embedding over flattened adapter weights.

Sample counts here are thousands while the ambient dimension is millions,
so the principal components are computed from the n x n Gram matrix of
centered samples instead of the d x d covariance; the two routes agree
exactly for the leading components. A fitted model is immutable and safe
to share across threads.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    AlignmentError,
    ConfigError,
    FitError,
    LayoutError,
    NumericError,
    RankError,
)
from .lora_io import WeightVector

SIGN_CONVENTION = "max-abs-loading-positive"

_INDEX_MANIFEST = "manifest.json"
_MEAN_BIN = "mean.bin"
_COMPONENTS_BIN = "components.bin"
_PROJECTIONS_CSV = "projections.csv"
_VARIANCE_CSV = "variance.csv"


@dataclass
class PcaModel:
    """Mean, orthonormal components (rows), and per-component variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    num_pcs: int
    layout_hash: str
    n_train: int

    @property
    def d(self) -> int:
        return int(self.mean.shape[0])


@dataclass
class EmbeddingMatrix:
    """Per-sample coordinates in the fitted component basis."""

    coords: np.ndarray
    sample_ids: list[str]
    num_pcs: int

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[0] != len(self.sample_ids):
            raise AlignmentError(
                f"coords shape {self.coords.shape} does not match "
                f"{len(self.sample_ids)} sample ids"
            )
        if not np.isfinite(self.coords).all():
            raise NumericError("embedding coordinates must be finite")


def _stack(data: Sequence[WeightVector]) -> tuple[np.ndarray, str]:
    if len(data) < 2:
        raise RankError(f"need at least 2 samples to fit, got {len(data)}")
    layout = data[0].layout_hash
    for i, vec in enumerate(data):
        if vec.layout_hash != layout:
            raise LayoutError(f"sample {i} has layout {vec.layout_hash[:12]}..., "
                              f"expected {layout[:12]}...")
    X = np.stack([vec.values for vec in data]).astype(np.float64, copy=False)
    if not np.isfinite(X).all():
        raise NumericError("weight vectors contain non-finite values")
    return X, layout


def _orient(components: np.ndarray) -> np.ndarray:
    # Flip each row so its largest-|loading| coordinate is positive;
    # np.argmax resolves ties toward the lowest index.
    for row in components:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            np.negative(row, out=row)
    return components


def fit_pca(data: Sequence[WeightVector], num_pcs: int) -> PcaModel:
    """Fit the embedding on a stack of identically-laid-out weight vectors.

    Centers by the sample mean, eigendecomposes the n x n Gram matrix of the
    centered rows, and maps the top eigenvectors back to ambient space as
    unit-norm components. Variances use the n-1 denominator. Rejects
    zero-variance data and requests beyond the numerical rank with FitError
    (carrying the usable rank), and num_pcs > n-1 with RankError.
    """
    X, layout = _stack(data)
    n, d = X.shape
    if num_pcs < 1:
        raise ConfigError(f"num_pcs must be >= 1, got {num_pcs}")
    if num_pcs > n - 1:
        raise RankError(f"num_pcs={num_pcs} exceeds n-1={n - 1}")
    if num_pcs > d:
        raise RankError(f"num_pcs={num_pcs} exceeds dimension d={d}")

    mean = X.mean(axis=0)
    Xc = X - mean
    scale = float(np.max(np.abs(X))) if X.size else 0.0
    gram = Xc @ Xc.T
    eigvals, eigvecs = np.linalg.eigh(gram)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]

    trace = float(np.clip(eigvals, 0.0, None).sum())
    if trace <= n * d * (1e-12 * scale) ** 2:
        raise FitError("zero-variance data: all samples are identical", available=0)
    usable = int(np.sum(eigvals > trace * 1e-12))
    if num_pcs > usable:
        raise FitError(
            f"data supports only {usable} components, {num_pcs} requested",
            available=usable,
        )

    top_vals = eigvals[:num_pcs]
    top_vecs = eigvecs[:, :num_pcs]
    components = (top_vecs / np.sqrt(top_vals)).T @ Xc
    components /= np.linalg.norm(components, axis=1, keepdims=True)
    components = _orient(np.ascontiguousarray(components))

    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=top_vals / (n - 1),
        total_variance=trace / (n - 1),
        num_pcs=num_pcs,
        layout_hash=layout,
        n_train=n,
    )


def project(model: PcaModel, theta: WeightVector, num_pcs: int | None = None) -> np.ndarray:
    """Coordinates of one weight vector: Q[:j] @ (theta - mean)."""
    if theta.layout_hash != model.layout_hash:
        raise LayoutError("weight vector layout does not match the fitted model")
    j = model.num_pcs if num_pcs is None else num_pcs
    if not 1 <= j <= model.num_pcs:
        raise ConfigError(f"num_pcs={j} outside [1, {model.num_pcs}]")
    return model.components[:j] @ (theta.values - model.mean)


def embed_vectors(
    model: PcaModel,
    data: Sequence[WeightVector],
    sample_ids: Sequence[str],
    num_pcs: int | None = None,
) -> EmbeddingMatrix:
    """Project many vectors at once into an :class:`EmbeddingMatrix`."""
    if len(data) != len(sample_ids):
        raise AlignmentError(f"{len(data)} vectors but {len(sample_ids)} ids")
    j = model.num_pcs if num_pcs is None else num_pcs
    if not 1 <= j <= model.num_pcs:
        raise ConfigError(f"num_pcs={j} outside [1, {model.num_pcs}]")
    for vec in data:
        if vec.layout_hash != model.layout_hash:
            raise LayoutError("weight vector layout does not match the fitted model")
    X = np.stack([vec.values for vec in data])
    coords = (X - model.mean) @ model.components[:j].T
    return EmbeddingMatrix(coords=coords, sample_ids=list(sample_ids), num_pcs=j)


def explained_variance_report(model: PcaModel) -> np.ndarray:
    """Fraction of total variance captured by each component (sums to <= 1)."""
    return model.explained_variance / model.total_variance


def compare_embeddings(
    a: EmbeddingMatrix,
    b: EmbeddingMatrix,
    num_pcs: int,
    align_signs: bool = True,
) -> float:
    """Mean cosine similarity between corresponding samples of two embeddings.

    Component signs are arbitrary, so each of b's axes is flipped when its
    coordinate column anti-correlates with a's before comparing. Zero-norm
    rows contribute similarity 0 and are counted.
    """
    if a.sample_ids != b.sample_ids:
        raise AlignmentError("embeddings do not list the same sample ids in the same order")
    if num_pcs > a.num_pcs or num_pcs > b.num_pcs:
        raise ConfigError(f"num_pcs={num_pcs} exceeds one of the embeddings")
    ca = a.coords[:, :num_pcs]
    cb = b.coords[:, :num_pcs].copy()
    if align_signs:
        flips = np.sign(np.einsum("ij,ij->j", ca, cb))
        flips[flips == 0] = 1.0
        cb *= flips
    na = np.linalg.norm(ca, axis=1)
    nb = np.linalg.norm(cb, axis=1)
    ok = (na > 0) & (nb > 0)
    sims = np.zeros(len(na))
    sims[ok] = np.einsum("ij,ij->i", ca[ok], cb[ok]) / (na[ok] * nb[ok])
    return float(sims.mean())


class EvalTask(enum.Enum):
    CLUSTER = "cluster"
    RETRIEVAL = "retrieval"


@dataclass
class PcSearchResult:
    best_num_pcs: int
    curve: list[tuple[int, float]]
    task: EvalTask


def select_num_pcs(
    coords: np.ndarray,
    labels: Sequence[str],
    task: EvalTask,
    pc_range: Iterable[int],
    seeds: Sequence[int] = tuple(range(10)),
    n_clusters: int | None = None,
    top_k: int = 24,
    database_coords: np.ndarray | None = None,
    database_labels: Sequence[str] | None = None,
) -> PcSearchResult:
    """Grid-search the component count against a labeled validation set.

    For CLUSTER the score is seed-averaged ARI of k-means partitions against
    the labels. For RETRIEVAL it is mAP with same-label relevance; queries
    are ranked against ``database_coords`` when given, otherwise against the
    other validation samples (leave-one-out). Ties prefer the smaller count.
    """
    from . import cluster_eval, retrieval  # local import to avoid a cycle

    coords = np.asarray(coords, dtype=np.float64)
    candidates = sorted(set(int(j) for j in pc_range))
    if not candidates:
        raise ConfigError("empty component range")
    if candidates[0] < 1 or candidates[-1] > coords.shape[1]:
        raise ConfigError(
            f"component range [{candidates[0]}, {candidates[-1]}] outside "
            f"[1, {coords.shape[1]}]"
        )
    labels = list(labels)

    def cluster_score(j: int) -> float:
        k = n_clusters if n_clusters is not None else len(set(labels))
        report = cluster_eval.cluster_eval_run(coords[:, :j], labels, k, seeds)
        return report.ari_mean

    def retrieval_score(j: int) -> float:
        if database_coords is not None:
            db = np.asarray(database_coords, dtype=np.float64)[:, :j]
            db_labels = list(database_labels) if database_labels is not None else labels
            index = retrieval.RetrievalIndex(
                coords=db,
                sample_ids=[f"db{i}" for i in range(db.shape[0])],
                labels=db_labels,
                metric=retrieval.Metric.EUCLIDEAN,
            )
            queries = retrieval.LabeledQueries(
                ids=[f"q{i}" for i in range(coords.shape[0])],
                labels=labels,
                coords=coords[:, :j],
            )
            report = retrieval.retrieval_eval(index, queries, min(top_k, db.shape[0]))
            return report.mean_ap
        # leave-one-out: rank each sample against all others
        aps = []
        n = coords.shape[0]
        for q in range(n):
            keep = [i for i in range(n) if i != q]
            index = retrieval.RetrievalIndex(
                coords=coords[keep][:, :j],
                sample_ids=[str(i) for i in keep],
                labels=[labels[i] for i in keep],
                metric=retrieval.Metric.EUCLIDEAN,
            )
            result = retrieval.knn_query(index, coords[q, :j], top_k=len(keep))
            relevant = {str(i) for i in keep if labels[i] == labels[q]}
            if not relevant:
                continue
            aps.append(retrieval.average_precision(result, relevant))
        return float(np.mean(aps))

    score = cluster_score if task is EvalTask.CLUSTER else retrieval_score
    curve = [(j, float(score(j))) for j in candidates]
    best = max(curve, key=lambda item: (item[1], -item[0]))[0]
    return PcSearchResult(best_num_pcs=best, curve=curve, task=task)


# -- index directory persistence ------------------------------------------


def index_id(model: PcaModel) -> str:
    tag = f"{model.layout_hash}:{model.d}:{model.num_pcs}:{model.n_train}:{model.total_variance!r}"
    return hashlib.sha256(tag.encode("utf-8")).hexdigest()[:16]


def save_index(
    directory: str | Path,
    model: PcaModel,
    embedding: EmbeddingMatrix,
    labels: Sequence[str],
    creation: dict | None = None,
) -> None:
    """Write the index directory: manifest.json, mean.bin, components.bin,
    projections.csv, variance.csv. Binary blobs are row-major little-endian
    float32; all text outputs are byte-deterministic.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if len(labels) != len(embedding.sample_ids):
        raise AlignmentError(f"{len(labels)} labels for {len(embedding.sample_ids)} samples")

    manifest = {
        "format": "lorastyle-index/1",
        "d": model.d,
        "num_pcs": model.num_pcs,
        "layout_hash": model.layout_hash,
        "n_train": model.n_train,
        "total_variance": model.total_variance,
        "sign_convention": SIGN_CONVENTION,
        "index_id": index_id(model),
        "creation": creation or {},
    }
    (directory / _INDEX_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (directory / _MEAN_BIN).write_bytes(model.mean.astype("<f4").tobytes())
    (directory / _COMPONENTS_BIN).write_bytes(model.components.astype("<f4").tobytes())

    with (directory / _PROJECTIONS_CSV).open("w", encoding="utf-8", newline="") as handle:
        cols = ",".join(f"pc{i + 1}" for i in range(embedding.num_pcs))
        handle.write(f"sample_id,label,{cols}\n")
        for sid, label, row in zip(embedding.sample_ids, labels, embedding.coords):
            handle.write(f"{sid},{label}," + ",".join(repr(float(v)) for v in row) + "\n")

    fractions = explained_variance_report(model)
    with (directory / _VARIANCE_CSV).open("w", encoding="utf-8", newline="") as handle:
        handle.write("pc,explained_variance,fraction\n")
        for i, (var, frac) in enumerate(zip(model.explained_variance, fractions)):
            handle.write(f"{i + 1},{float(var)!r},{float(frac)!r}\n")


@dataclass
class StyleIndex:
    """An index directory loaded back into memory."""

    model: PcaModel
    embedding: EmbeddingMatrix
    labels: list[str]
    manifest: dict


def load_index(directory: str | Path) -> StyleIndex:
    directory = Path(directory)
    manifest = json.loads((directory / _INDEX_MANIFEST).read_text(encoding="utf-8"))
    d, k = manifest["d"], manifest["num_pcs"]
    mean = np.frombuffer((directory / _MEAN_BIN).read_bytes(), dtype="<f4").astype(np.float64)
    components = (
        np.frombuffer((directory / _COMPONENTS_BIN).read_bytes(), dtype="<f4")
        .astype(np.float64)
        .reshape(k, d)
    )
    ids: list[str] = []
    labels: list[str] = []
    rows = []
    variances = []
    with (directory / _VARIANCE_CSV).open(encoding="utf-8") as handle:
        next(handle)
        for line in handle:
            _, var, _ = line.rstrip("\n").split(",")
            variances.append(float(var))
    with (directory / _PROJECTIONS_CSV).open(encoding="utf-8") as handle:
        next(handle)
        for line in handle:
            fields = line.rstrip("\n").split(",")
            ids.append(fields[0])
            labels.append(fields[1])
            rows.append([float(v) for v in fields[2:]])
    explained = np.asarray(variances)
    model = PcaModel(
        mean=mean,
        components=components,
        explained_variance=explained,
        total_variance=float(manifest["total_variance"]),
        num_pcs=k,
        layout_hash=manifest["layout_hash"],
        n_train=int(manifest["n_train"]),
    )
    embedding = EmbeddingMatrix(coords=np.asarray(rows), sample_ids=ids, num_pcs=k)
    return StyleIndex(model=model, embedding=embedding, labels=labels, manifest=manifest)
