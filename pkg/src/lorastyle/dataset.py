"""Dataset manifests, split handling, and a synthetic adapter population.

The generator replaces GPU fine-tuning for desk-scale verification: artist
centers are drawn in a low-dimensional subspace of the ambient weight
space, per-sample noise is added, and every vector is reshaped into a
fixed synthetic layer structure and written through the real safetensors
writer so the full parse path is exercised end to end.

Samples tagged ``diff`` model adapters trained under a different setup:
their embedding coordinates are displaced by a per-component affine map
(c - tau) / sigma applied in min-max-normalized units, where the min/max
come from the training split's own projections. That is exactly the family
of errors the calibration module corrects, so recovery tests can separate
the exactly-recoverable regime (no intra-cluster noise) from the
approximate one (sampling noise, or a nonzero residual knob).
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import embedding as _embedding
from .errors import ConfigError, FitError, ManifestError, SizeError
from .lora_io import (
    LoraLayer,
    LoraModel,
    SubnetworkSelector,
    WeightVector,
    classify_layer,
    layout_digest,
    parse_safetensors,
    vectorize,
    write_safetensors,
)

MANIFEST_COLUMNS = ["sample_id", "artist_id", "genre", "split", "config", "path"]
_GENRES = ("genre_a", "genre_b", "genre_c", "genre_d", "genre_e")


class Split(enum.Enum):
    TRAIN = "train"
    CALIBRATION = "calibration"
    VALIDATION = "validation"
    TEST = "test"


class Config(enum.Enum):
    SAME = "same"
    DIFF = "diff"


@dataclass
class ManifestEntry:
    sample_id: str
    artist_id: str
    genre: str
    split: Split
    config: Config
    path: str


@dataclass
class DatasetManifest:
    """Validated sample listing; paths resolve against ``root``."""

    entries: list[ManifestEntry]
    root: Path

    def select(self, split: Split | None = None, config: Config | None = None) -> list[ManifestEntry]:
        out = []
        for e in self.entries:
            if split is not None and e.split is not split:
                continue
            if config is not None and e.config is not config:
                continue
            out.append(e)
        return out

    def artists(self) -> list[str]:
        return sorted({e.artist_id for e in self.entries})

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def counts_per_artist(self) -> dict[str, dict[str, int]]:
        counts: dict[str, dict[str, int]] = {}
        for e in self.entries:
            per = counts.setdefault(e.artist_id, {s.value: 0 for s in Split})
            per[e.split.value] += 1
        return counts

    def __len__(self) -> int:
        return len(self.entries)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read and validate a manifest CSV; errors name the offending rows."""
    path = Path(path)
    root = path.parent
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    problems: list[str] = []
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != MANIFEST_COLUMNS:
            raise ManifestError(
                f"{path}: expected columns {MANIFEST_COLUMNS}, got {reader.fieldnames}"
            )
        for row_no, row in enumerate(reader, start=2):
            sid = row["sample_id"]
            if sid in seen:
                problems.append(f"row {row_no}: duplicate sample_id {sid!r} (first at row {seen[sid]})")
                continue
            seen[sid] = row_no
            try:
                split = Split(row["split"])
            except ValueError:
                problems.append(f"row {row_no}: bad split tag {row['split']!r}")
                continue
            try:
                config = Config(row["config"])
            except ValueError:
                problems.append(f"row {row_no}: bad config tag {row['config']!r}")
                continue
            if not (root / row["path"]).exists():
                problems.append(f"row {row_no}: unresolvable path {row['path']!r}")
                continue
            entries.append(
                ManifestEntry(
                    sample_id=sid,
                    artist_id=row["artist_id"],
                    genre=row["genre"],
                    split=split,
                    config=config,
                    path=row["path"],
                )
            )
    if problems:
        raise ManifestError(f"{path}: " + "; ".join(problems))
    return DatasetManifest(entries=entries, root=root)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for e in manifest.entries:
            writer.writerow([e.sample_id, e.artist_id, e.genre, e.split.value, e.config.value, e.path])


def split_dataset(
    manifest: DatasetManifest,
    m_train: int,
    m_cali: int,
    seed: int,
) -> DatasetManifest:
    """Reassign the same-config training pool into train/calibration splits.

    The pool is every entry currently marked train or calibration with
    config ``same``; validation and test entries are never touched, so the
    four splits stay disjoint. Deterministic given the seed; leftover pool
    entries beyond m_train + m_cali stay in train.
    """
    rng = np.random.default_rng(seed)
    pools: dict[str, list[int]] = {}
    for i, e in enumerate(manifest.entries):
        if e.split in (Split.TRAIN, Split.CALIBRATION) and e.config is Config.SAME:
            pools.setdefault(e.artist_id, []).append(i)

    new_entries = list(manifest.entries)
    for artist in sorted(pools):
        pool = sorted(pools[artist], key=lambda i: manifest.entries[i].sample_id)
        if len(pool) < m_train + m_cali:
            raise SizeError(
                f"artist {artist!r} has {len(pool)} pool samples, "
                f"needs {m_train + m_cali}"
            )
        perm = rng.permutation(len(pool))
        for j, p in enumerate(perm):
            target = Split.TRAIN if j < m_train or j >= m_train + m_cali else Split.CALIBRATION
            idx = pool[p]
            new_entries[idx] = replace(manifest.entries[idx], split=target)
    return DatasetManifest(entries=new_entries, root=manifest.root)


# -- synthetic population ---------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic adapter population.

    Per-artist counts cover each (split, config) bucket; the defaults give
    the 21 + 3 training-pool layout with no held-out samples. ``drift_scale``
    and ``drift_offset`` accept scalars or per-component sequences; they act
    on min-max-normalized embedding coordinates of ``diff`` samples.
    ``overlap_fraction`` correlates same-artist noise, modeling adapters
    trained on overlapping image subsets. ``drift_residual_std`` adds
    isotropic noise after the drift so the affine relation is only
    approximately recoverable.
    """

    n_artists: int = 20
    m_train: int = 21
    m_cali: int = 3
    m_val: int = 0
    m_test_same: int = 0
    m_cali_diff: int = 0
    m_test_diff: int = 0
    ambient_dim: int = 10_000
    signal_dim: int = 30
    inter_cluster_spread: float = 10.0
    intra_cluster_std: float = 1.0
    drift_scale: float | tuple[float, ...] = 1.0
    drift_offset: float | tuple[float, ...] = 0.0
    drift_num_pcs: int | None = None
    drift_residual_std: float = 0.0
    overlap_fraction: float = 0.0
    rank: int = 4
    seed: int = 7

    def validate(self) -> None:
        if self.n_artists < 1 or self.m_train < 1:
            raise ConfigError("need at least one artist with one training sample")
        if min(self.m_cali, self.m_val, self.m_test_same, self.m_cali_diff, self.m_test_diff) < 0:
            raise ConfigError("per-split counts must be non-negative")
        if not 1 <= self.signal_dim <= self.ambient_dim:
            raise ConfigError("signal_dim must lie in [1, ambient_dim]")
        if self.inter_cluster_spread <= 0:
            raise ConfigError("inter_cluster_spread must be positive")
        if self.intra_cluster_std < 0 or self.drift_residual_std < 0:
            raise ConfigError("noise levels must be non-negative")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ConfigError("overlap_fraction must lie in [0, 1]")
        if self.rank < 1 or self.rank > 16:
            raise ConfigError("rank must lie in [1, 16]")
        if self.ambient_dim % self.rank or self.ambient_dim // self.rank < 2:
            raise ConfigError("ambient_dim must be a multiple of rank with at least 2 units")
        scales = np.atleast_1d(np.asarray(self.drift_scale, dtype=np.float64))
        if (scales == 0).any():
            raise ConfigError("drift_scale entries must be nonzero")

    def to_json(self) -> str:
        payload = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# (split, config, spec field) in generation order
_BUCKETS = (
    (Split.TRAIN, Config.SAME, "m_train"),
    (Split.CALIBRATION, Config.SAME, "m_cali"),
    (Split.CALIBRATION, Config.DIFF, "m_cali_diff"),
    (Split.VALIDATION, Config.SAME, "m_val"),
    (Split.TEST, Config.SAME, "m_test_same"),
    (Split.TEST, Config.DIFF, "m_test_diff"),
)

# template block: one layer per sub-network family, sizes in (n + m) units
_BLOCK_TEMPLATE = (
    ("attn1_to_q", 32, 32),
    ("attn2_to_k", 32, 32),
    ("ff_net_proj", 48, 48),
    ("other_proj", 16, 16),
)
_BLOCK_UNITS = sum(n + m for _, n, m in _BLOCK_TEMPLATE)


def synthetic_layout(d: int, rank: int) -> list[tuple[str, int, int]]:
    """Fixed layer structure (name, n, m) whose flattened size is exactly d.

    Repeats a four-layer block covering every sub-network family, with a
    tail layer absorbing the remainder. Names are generated pre-sorted so
    construction order equals vectorization order.
    """
    if d % rank:
        raise ConfigError(f"d={d} is not a multiple of rank={rank}")
    units = d // rank
    if units < 2:
        raise ConfigError(f"d={d} too small for rank={rank}")
    blocks, rem = divmod(units, _BLOCK_UNITS)
    layout: list[tuple[str, int, int]] = []
    if blocks == 0 and units >= 8 * rank:
        # no room for a full block: shrink it so every family still appears
        base, extra = divmod(units, 8)
        for i, (suffix, _, _) in enumerate(_BLOCK_TEMPLATE):
            n = m = base
            if i == len(_BLOCK_TEMPLATE) - 1:
                n += extra - extra // 2
                m += extra // 2
            layout.append((f"lora_unet_block_000000_{suffix}", n, m))
        rem = 0
    else:
        if 0 < rem < 2 * rank and blocks > 0:
            blocks -= 1
            rem += _BLOCK_UNITS
        for b in range(blocks):
            for suffix, n, m in _BLOCK_TEMPLATE:
                layout.append((f"lora_unet_block_{b:06d}_{suffix}", n, m))
    if rem:
        if rem < 2 * rank:
            raise ConfigError(f"d={d} leaves a remainder too small for rank={rank}")
        m = rem // 2
        layout.append(("lora_unet_zz_tail_proj", rem - m, m))
    names = [name for name, _, _ in layout]
    assert names == sorted(names) and sum(n + m for _, n, m in layout) == units
    return layout


def vector_to_model(values: np.ndarray, layout: Sequence[tuple[str, int, int]], rank: int) -> LoraModel:
    """Slice a flat vector into the given layer structure."""
    layers = []
    pos = 0
    for name, n, m in layout:
        A = values[pos : pos + rank * n].reshape(rank, n)
        pos += rank * n
        B = values[pos : pos + m * rank].reshape(m, rank)
        pos += m * rank
        layers.append(LoraLayer(layer_name=name, A=A, B=B, subnet=classify_layer(name)))
    if pos != values.shape[0]:
        raise ConfigError(f"vector length {values.shape[0]} does not match layout ({pos})")
    return LoraModel(layers=layers, metadata={"rank": rank})


def _layout_hash(layout: Sequence[tuple[str, int, int]], rank: int) -> str:
    seq = []
    for name, n, m in layout:
        seq.append((name, "A", (rank, n)))
        seq.append((name, "B", (m, rank)))
    return layout_digest(seq)


def _quantize(values: np.ndarray) -> np.ndarray:
    # round to the float32 grid so written files parse back bit-exactly
    return values.astype(np.float32).astype(np.float64)


def _broadcast_drift(value, k: int, fill: float) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.size == 1:
        return np.full(k, float(arr[0]))
    if arr.size > k:
        raise ConfigError(f"drift vector of length {arr.size} exceeds {k} usable components")
    out = np.full(k, fill)
    out[: arr.size] = arr
    return out


@dataclass
class _Sample:
    artist_idx: int
    split: Split
    config: Config
    index: int
    values: np.ndarray


def generate_synthetic(spec: SynthSpec, out_dir: str | Path) -> DatasetManifest:
    """Write a synthetic adapter population and its manifest.

    Output layout: ``loras/<artist>/<sample>.safetensors``, ``manifest.csv``,
    ``spec.json``. Fully deterministic given the spec (seed included); equal
    specs produce byte-identical directories.
    """
    spec.validate()
    out_dir = Path(out_dir)
    rng = np.random.default_rng(spec.seed)
    d = spec.ambient_dim

    basis, _ = np.linalg.qr(rng.standard_normal((d, spec.signal_dim)))
    centers = rng.standard_normal((spec.n_artists, spec.signal_dim)) * spec.inter_cluster_spread

    rho = spec.overlap_fraction
    ambient_centers = [basis @ centers[a] for a in range(spec.n_artists)]
    shared = [rng.standard_normal(d) if rho > 0 else 0.0 for a in range(spec.n_artists)]

    def draw(a: int) -> np.ndarray:
        noise = rng.standard_normal(d)
        return _quantize(
            ambient_centers[a]
            + spec.intra_cluster_std * (np.sqrt(1.0 - rho) * noise + np.sqrt(rho) * shared[a])
        )

    # same-config samples for every artist first, so a population extended
    # with diff-config samples keeps the same-config draws bit-identical
    samples: list[_Sample] = []
    for config in (Config.SAME, Config.DIFF):
        for a in range(spec.n_artists):
            for split, bucket_config, field_name in _BUCKETS:
                if bucket_config is not config:
                    continue
                for j in range(getattr(spec, field_name)):
                    samples.append(_Sample(a, split, config, j, draw(a)))

    diff = [s for s in samples if s.config is Config.DIFF]
    if diff:
        _apply_drift(spec, samples, diff, rng)

    layout = synthetic_layout(d, spec.rank)
    genres = {a: _GENRES[a % len(_GENRES)] for a in range(spec.n_artists)}
    (out_dir / "loras").mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []
    for s in samples:
        artist = f"artist{s.artist_idx:03d}"
        sid = f"{artist}-{s.split.value}-{s.config.value}-{s.index:02d}"
        rel = f"loras/{artist}/{sid}.safetensors"
        target = out_dir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        write_safetensors(target, vector_to_model(s.values, layout, spec.rank))
        entries.append(
            ManifestEntry(
                sample_id=sid,
                artist_id=artist,
                genre=genres[s.artist_idx],
                split=s.split,
                config=s.config,
                path=rel,
            )
        )
    manifest = DatasetManifest(entries=entries, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.csv")
    (out_dir / "spec.json").write_text(spec.to_json(), encoding="utf-8")
    return manifest


def _apply_drift(
    spec: SynthSpec,
    samples: list[_Sample],
    diff: list[_Sample],
    rng: np.random.Generator,
) -> None:
    """Displace diff-config samples by the per-component affine drift.

    The component frame comes from an internal PCA fit on the (already
    quantized) training split, which matches bit for bit what a downstream
    fit on the written files produces. Drift acts in min-max-normalized
    coordinates: c' = lo + span * ((c_norm - tau) / sigma).
    """
    train = [s.values for s in samples if s.split is Split.TRAIN and s.config is Config.SAME]
    if len(train) < 2:
        raise ConfigError("drift requires at least 2 training samples")
    hash_tag = _layout_hash(synthetic_layout(spec.ambient_dim, spec.rank), spec.rank)
    train_vecs = [WeightVector(values=v, layout_hash=hash_tag) for v in train]
    k = spec.drift_num_pcs if spec.drift_num_pcs is not None else 100
    k = min(k, len(train) - 1)
    try:
        model = _embedding.fit_pca(train_vecs, k)
    except FitError as exc:
        if not exc.available:
            raise
        model = _embedding.fit_pca(train_vecs, exc.available)
    k = model.num_pcs

    train_coords = (np.stack(train) - model.mean) @ model.components.T
    lo = train_coords.min(axis=0)
    span = train_coords.max(axis=0) - lo
    sigma = _broadcast_drift(spec.drift_scale, k, 1.0)
    tau = _broadcast_drift(spec.drift_offset, k, 0.0)

    for s in diff:
        coords = model.components @ (s.values - model.mean)
        norm = (coords - lo) / span
        target = lo + span * ((norm - tau) / sigma)
        shifted = s.values + model.components.T @ (target - coords)
        if spec.drift_residual_std > 0:
            shifted = shifted + spec.drift_residual_std * rng.standard_normal(s.values.shape[0])
        s.values = _quantize(shifted)


def load_weight_vectors(
    manifest: DatasetManifest,
    entries: Iterable[ManifestEntry],
    selector: SubnetworkSelector = SubnetworkSelector.FULL,
) -> tuple[list[str], list[str], list[WeightVector]]:
    """Parse and flatten the given entries; returns (ids, artist labels, vectors)."""
    ids, labels, vectors = [], [], []
    for entry in entries:
        model = parse_safetensors(manifest.resolve(entry))
        vectors.append(vectorize(model, selector))
        ids.append(entry.sample_id)
        labels.append(entry.artist_id)
    return ids, labels, vectors


def group_by_artist(
    manifest: DatasetManifest,
    entries: Iterable[ManifestEntry],
    selector: SubnetworkSelector = SubnetworkSelector.FULL,
) -> dict[str, list[WeightVector]]:
    grouped: dict[str, list[WeightVector]] = {}
    for entry in entries:
        model = parse_safetensors(manifest.resolve(entry))
        grouped.setdefault(entry.artist_id, []).append(vectorize(model, selector))
    return grouped
