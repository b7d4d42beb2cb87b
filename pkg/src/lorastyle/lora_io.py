"""Reading, writing, and flattening LoRA adapter weight files.

The on-disk format is the safetensors container: an 8-byte little-endian
header length, a JSON header mapping tensor names to dtype/shape/offsets,
then a raw data region. Adapter tensors follow the kohya / sd-scripts key
convention, pairing ``<layer>.lora_down.weight`` (the r x n factor A) with
``<layer>.lora_up.weight`` (the m x r factor B); an underscore before the
suffix is accepted as well. Optional per-layer ``<layer>.alpha`` scalars
and the ``__metadata__`` string map are kept as metadata only.

All elements are widened to float64 at parse time; the stored dtype is
preserved in the model metadata.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    EmptySelectionError,
    HeterogeneousRankError,
    PairingError,
    ParseError,
    ShapeError,
)

# dtype tag -> (numpy little-endian dtype, element size)
_DTYPES = {
    "F16": ("<f2", 2),
    "F32": ("<f4", 4),
    "BF16": ("<u2", 2),
}

_FACTOR_KEY = re.compile(r"^(?P<layer>.+?)[._]lora_(?P<role>down|up)\.weight$")
_ALPHA_KEY = re.compile(r"^(?P<layer>.+?)[._]alpha$")


class Subnetwork(enum.Enum):
    FEED_FORWARD = "feed_forward"
    SELF_ATTENTION = "self_attention"
    CROSS_ATTENTION = "cross_attention"
    OTHER = "other"


class SubnetworkSelector(enum.Enum):
    """Which layer family to keep when flattening an adapter.

    FULL is the union of the three named families plus OTHER.
    """

    FULL = "full"
    FEED_FORWARD = "feed_forward"
    SELF_ATTENTION = "self_attention"
    CROSS_ATTENTION = "cross_attention"

    def matches(self, subnet: Subnetwork) -> bool:
        if self is SubnetworkSelector.FULL:
            return True
        return self.value == subnet.value


@dataclass(frozen=True)
class TensorRecord:
    """One entry of the safetensors header."""

    name: str
    dtype: str
    shape: tuple[int, ...]
    byte_range: tuple[int, int]


@dataclass
class LoraLayer:
    """A named low-rank pair: A is r x n, B is m x r, update = B @ A."""

    layer_name: str
    A: np.ndarray
    B: np.ndarray
    subnet: Subnetwork

    @property
    def rank(self) -> int:
        return self.A.shape[0]


@dataclass
class LoraModel:
    """Parsed adapter: layers in ascending lexicographic name order."""

    layers: list[LoraLayer]
    metadata: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.layers[0].rank

    def layer_names(self) -> list[str]:
        return [layer.layer_name for layer in self.layers]


@dataclass
class WeightVector:
    """Flattened adapter weights plus a digest of the layout that built them."""

    values: np.ndarray
    layout_hash: str

    @property
    def d(self) -> int:
        return int(self.values.shape[0])


def classify_layer(layer_name: str) -> Subnetwork:
    """Map a layer name to its sub-network family.

    Matching is on underscore-delimited tokens; the first matching rule wins:
    ``attn1`` -> self-attention, ``attn2`` -> cross-attention, ``ff`` or
    ``mlp`` -> feed-forward, anything else -> other.
    """
    tokens = set(layer_name.split("_"))
    if "attn1" in tokens:
        return Subnetwork.SELF_ATTENTION
    if "attn2" in tokens:
        return Subnetwork.CROSS_ATTENTION
    if "ff" in tokens or "mlp" in tokens:
        return Subnetwork.FEED_FORWARD
    return Subnetwork.OTHER


def _decode(raw: bytes, record: TensorRecord) -> np.ndarray:
    np_dtype, _ = _DTYPES[record.dtype]
    flat = np.frombuffer(raw, dtype=np_dtype)
    if record.dtype == "BF16":
        flat = (flat.astype(np.uint32) << 16).view(np.float32)
    out = flat.astype(np.float64).reshape(record.shape)
    return out


def _read_header(blob: bytes, path: Path) -> tuple[dict, int]:
    if len(blob) < 8:
        raise ParseError(f"{path}: file too short for safetensors header length")
    (header_len,) = struct.unpack("<Q", blob[:8])
    if 8 + header_len > len(blob):
        raise ParseError(f"{path}: declared header length {header_len} exceeds file size")
    try:
        header = json.loads(blob[8 : 8 + header_len])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: header is not valid JSON ({exc})") from exc
    if not isinstance(header, dict):
        raise ParseError(f"{path}: header must be a JSON object")
    return header, 8 + header_len


def _read_records(header: dict, data_size: int, path: Path) -> list[TensorRecord]:
    records = []
    for name, entry in header.items():
        if name == "__metadata__":
            continue
        try:
            dtype = entry["dtype"]
            shape = tuple(int(s) for s in entry["shape"])
            start, end = (int(x) for x in entry["data_offsets"])
        except (TypeError, KeyError, ValueError) as exc:
            raise ParseError(f"{path}: malformed header entry for {name!r}") from exc
        if dtype not in _DTYPES:
            raise ParseError(f"{path}: unsupported dtype {dtype!r} for {name!r}")
        if any(s < 0 for s in shape):
            raise ParseError(f"{path}: negative dimension in shape of {name!r}")
        n_elem = int(np.prod(shape, dtype=np.int64)) if shape else 1
        expected = n_elem * _DTYPES[dtype][1]
        if not (0 <= start <= end <= data_size) or end - start != expected:
            raise ParseError(
                f"{path}: byte range {start}:{end} of {name!r} does not match "
                f"shape {shape} ({expected} bytes expected)"
            )
        records.append(TensorRecord(name=name, dtype=dtype, shape=shape, byte_range=(start, end)))

    spans = sorted((r.byte_range for r in records))
    for (_, prev_end), (start, _) in zip(spans, spans[1:]):
        if start < prev_end:
            raise ParseError(f"{path}: overlapping tensor byte ranges")
    return records


def parse_safetensors(path: str | Path) -> LoraModel:
    """Parse an adapter file into a :class:`LoraModel`.

    Raises ParseError for container-level problems, PairingError when a
    down/up factor lacks its sibling, ShapeError when a pair's shapes are
    inconsistent, and HeterogeneousRankError when layers disagree on rank.
    """
    path = Path(path)
    blob = path.read_bytes()
    header, data_start = _read_header(blob, path)
    data = blob[data_start:]
    records = _read_records(header, len(data), path)

    file_meta = header.get("__metadata__", {})
    downs: dict[str, TensorRecord] = {}
    ups: dict[str, TensorRecord] = {}
    alphas: dict[str, TensorRecord] = {}
    for record in records:
        m = _FACTOR_KEY.match(record.name)
        if m:
            target = downs if m.group("role") == "down" else ups
            target[m.group("layer")] = record
            continue
        m = _ALPHA_KEY.match(record.name)
        if m:
            alphas[m.group("layer")] = record
            continue
        raise ParseError(
            f"{path}: unrecognized tensor key {record.name!r}; expected the "
            "kohya lora_down/lora_up naming"
        )

    for layer in sorted(set(downs) ^ set(ups)):
        missing = "lora_up" if layer in downs else "lora_down"
        raise PairingError(f"{path}: layer {layer!r} has no {missing} tensor")
    for layer in sorted(set(alphas) - set(downs)):
        raise PairingError(f"{path}: alpha tensor for unknown layer {layer!r}")

    layers = []
    for name in sorted(downs):
        a_rec, b_rec = downs[name], ups[name]
        A = _decode(data[slice(*a_rec.byte_range)], a_rec)
        B = _decode(data[slice(*b_rec.byte_range)], b_rec)
        if A.ndim != 2 or B.ndim != 2:
            raise ShapeError(f"{path}: layer {name!r} factors must be 2-D, "
                             f"got {A.shape} and {B.shape}")
        r, n = A.shape
        m, r_up = B.shape
        if r != r_up:
            raise ShapeError(f"{path}: layer {name!r} rank mismatch: "
                             f"A is {r}x{n}, B is {m}x{r_up}")
        if r < 1 or r > min(m, n):
            raise ShapeError(f"{path}: layer {name!r} rank {r} outside [1, min({m}, {n})]")
        layers.append(LoraLayer(layer_name=name, A=A, B=B, subnet=classify_layer(name)))

    ranks = {layer.rank for layer in layers}
    if len(ranks) > 1:
        raise HeterogeneousRankError(f"{path}: mixed ranks across layers: {sorted(ranks)}")

    metadata: dict = {"file_metadata": dict(file_meta)}
    dtypes = sorted({r.dtype for r in records})
    metadata["dtype"] = dtypes[0].lower() if len(dtypes) == 1 else ",".join(d.lower() for d in dtypes)
    if layers:
        metadata["rank"] = layers[0].rank
    if alphas:
        layer_alphas = {
            name: float(_decode(data[slice(*rec.byte_range)], rec).reshape(-1)[0])
            for name, rec in alphas.items()
        }
        metadata["layer_alphas"] = layer_alphas
        uniform = set(layer_alphas.values())
        if len(uniform) == 1:
            metadata["alpha"] = uniform.pop()
    return LoraModel(layers=layers, metadata=metadata)


def _encode(values: np.ndarray, dtype: str) -> bytes:
    if dtype == "F32":
        return values.astype("<f4").tobytes()
    if dtype == "F16":
        return values.astype("<f2").tobytes()
    if dtype == "BF16":
        u32 = values.astype(np.float32).view(np.uint32)
        rounded = ((u32 + 0x7FFF + ((u32 >> 16) & 1)) >> 16).astype("<u2")
        return rounded.tobytes()
    raise ParseError(f"unsupported dtype tag {dtype!r}")


def write_tensors(
    path: str | Path,
    tensors: Sequence[tuple[str, np.ndarray]],
    dtype: str = "F32",
    metadata: Mapping[str, str] | None = None,
) -> None:
    """Write named arrays as a safetensors file, in the order given.

    The header is serialized with sorted top-level insertion following the
    tensor order, so equal inputs produce byte-identical files.
    """
    path = Path(path)
    header: dict = {}
    if metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in sorted(metadata.items())}
    chunks = []
    offset = 0
    for name, values in tensors:
        raw = _encode(np.asarray(values), dtype)
        header[name] = {
            "dtype": dtype,
            "shape": list(np.asarray(values).shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        chunks.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    pad = (-(8 + len(header_bytes))) % 8
    header_bytes += b" " * pad
    with path.open("wb") as handle:
        handle.write(struct.pack("<Q", len(header_bytes)))
        handle.write(header_bytes)
        for raw in chunks:
            handle.write(raw)


def write_safetensors(
    path: str | Path,
    model: LoraModel,
    dtype: str = "F32",
    layer_order: Sequence[str] | None = None,
) -> None:
    """Write a model with kohya-style keys (``<layer>.lora_down.weight``).

    ``layer_order`` overrides the physical tensor order in the file; the
    parse result is independent of it because layers are re-sorted by name.
    """
    names = list(layer_order) if layer_order is not None else model.layer_names()
    by_name = {layer.layer_name: layer for layer in model.layers}
    tensors = []
    for name in names:
        layer = by_name[name]
        tensors.append((f"{name}.lora_down.weight", layer.A))
        tensors.append((f"{name}.lora_up.weight", layer.B))
    file_meta = model.metadata.get("file_metadata") or None
    write_tensors(path, tensors, dtype=dtype, metadata=file_meta)


def layout_digest(layout: Sequence[tuple[str, str, tuple[int, ...]]]) -> str:
    """SHA-256 of the ordered (layer_name, role, shape) sequence."""
    h = hashlib.sha256()
    for name, role, shape in layout:
        h.update(f"{name}|{role}|{'x'.join(str(s) for s in shape)}\n".encode("utf-8"))
    return h.hexdigest()


def vectorize(model: LoraModel, selector: SubnetworkSelector = SubnetworkSelector.FULL) -> WeightVector:
    """Flatten selected layers into one deterministic vector.

    Layers are taken in ascending lexicographic name order; each contributes
    row-major vec(A) followed by row-major vec(B). The layout hash digests
    the (name, role, shape) sequence so mismatched index/query layouts are
    detectable downstream.
    """
    selected = [layer for layer in model.layers if selector.matches(layer.subnet)]
    if not selected:
        raise EmptySelectionError(f"selector {selector.value!r} matched no layers")
    selected.sort(key=lambda layer: layer.layer_name.encode("utf-8"))
    parts = []
    layout = []
    for layer in selected:
        parts.append(layer.A.ravel(order="C"))
        parts.append(layer.B.ravel(order="C"))
        layout.append((layer.layer_name, "A", layer.A.shape))
        layout.append((layer.layer_name, "B", layer.B.shape))
    values = np.ascontiguousarray(np.concatenate(parts), dtype=np.float64)
    return WeightVector(values=values, layout_hash=layout_digest(layout))


def subnet_dims(model: LoraModel) -> dict[str, int]:
    """Flattened size contributed by each sub-network family."""
    sizes = {s.value: 0 for s in Subnetwork}
    for layer in model.layers:
        sizes[layer.subnet.value] += layer.A.size + layer.B.size
    sizes["full"] = sum(sizes.values())
    return sizes
