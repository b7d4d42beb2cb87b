"""Command-line surface for the pipeline.

Every subcommand is deterministic given its flags and seeds: JSON is
dumped with sorted keys, floats are printed with shortest round-trip
repr, and binary blobs are little-endian float32. Exit codes: 0 success,
2 usage error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, calibration, cluster_eval, dataset, embedding, retrieval
from .errors import (
    AlignmentError,
    ConfigError,
    CoverageError,
    DegenerateAxisError,
    EmptySelectionError,
    FitError,
    HeterogeneousRankError,
    LayoutError,
    LengthError,
    LoraStyleError,
    ManifestError,
    NumericError,
    PairingError,
    ParseError,
    RankError,
    ShapeError,
    SizeError,
)
from .lora_io import SubnetworkSelector, parse_safetensors, vectorize

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_DATA_ERRORS = (
    ParseError,
    PairingError,
    ShapeError,
    HeterogeneousRankError,
    ManifestError,
    EmptySelectionError,
    LayoutError,
    AlignmentError,
    CoverageError,
    LengthError,
    SizeError,
    ConfigError,
)
_NUMERIC_ERRORS = (NumericError, RankError, FitError, DegenerateAxisError)

_SUBNETS = {
    "full": SubnetworkSelector.FULL,
    "ff": SubnetworkSelector.FEED_FORWARD,
    "feedforward": SubnetworkSelector.FEED_FORWARD,
    "self-attn": SubnetworkSelector.SELF_ATTENTION,
    "self-attention": SubnetworkSelector.SELF_ATTENTION,
    "cross-attn": SubnetworkSelector.CROSS_ATTENTION,
    "cross-attention": SubnetworkSelector.CROSS_ATTENTION,
}


def _parse_seeds(raw: str) -> list[int]:
    seeds: list[int] = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError(f"no seeds in {raw!r}")
    return seeds


def _parse_floats(raw: str) -> float | tuple[float, ...]:
    values = tuple(float(p) for p in raw.split(",") if p.strip())
    return values[0] if len(values) == 1 else values


def _parse_range(raw: str, upper: int) -> list[int]:
    if ":" in raw:
        lo, hi = raw.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return sorted({int(p) for p in raw.split(",") if p.strip()})


def _threads(args: argparse.Namespace) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    return max(1, int(os.environ.get("LORA_INDEX_THREADS", "1")))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_entry_vectors(manifest, entries, selector):
    return dataset.load_weight_vectors(manifest, entries, selector)


def _index_selector(index: embedding.StyleIndex) -> SubnetworkSelector:
    tag = index.manifest.get("creation", {}).get("subnet", "full")
    return _SUBNETS.get(tag, SubnetworkSelector.FULL)


def _query_coords(
    path: Path,
    index: embedding.StyleIndex,
    cal: calibration.CalibrationMap | None,
) -> np.ndarray:
    """Embedding coordinates for a query file.

    ``.safetensors`` queries are parsed, flattened with the index's
    sub-network selector, projected, and calibrated when a map is given;
    other files must already hold embedding coordinates.
    """
    if path.suffix == ".safetensors":
        vec = vectorize(parse_safetensors(path), _index_selector(index))
        coords = embedding.project(index.model, vec)
    else:
        coords = retrieval.read_feature_vector(path)
        if coords.shape[0] != index.model.num_pcs:
            raise LengthError(
                f"{path}: vector length {coords.shape[0]} does not match "
                f"index num_pcs {index.model.num_pcs}"
            )
    if cal is not None:
        coords = calibration.apply_calibration(cal, coords)
    return coords


# -- subcommand handlers ----------------------------------------------------


def cmd_vectorize(args: argparse.Namespace) -> int:
    selector = _SUBNETS[args.subnet]
    vec = vectorize(parse_safetensors(args.lora), selector)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(vec.values.astype("<f4").tobytes())
    _write_json(
        out.with_suffix(out.suffix + ".json"),
        {"d": vec.d, "layout_hash": vec.layout_hash, "subnet": args.subnet,
         "source": str(args.lora)},
    )
    print(f"wrote {out} (d={vec.d})")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    manifest = dataset.load_manifest(args.manifest)
    selector = _SUBNETS[args.subnet]
    entries = manifest.select(split=dataset.Split(args.split))
    if not entries:
        raise ManifestError(f"no entries with split {args.split!r}")
    ids, labels, vectors = _load_entry_vectors(manifest, entries, selector)
    num_pcs = args.num_pcs
    if num_pcs > len(vectors) - 1:
        num_pcs = max(1, len(vectors) - 1)
        print(f"warning: num_pcs clamped to n-1 = {num_pcs}", file=sys.stderr)
    model = embedding.fit_pca(vectors, num_pcs)
    emb = embedding.embed_vectors(model, vectors, ids)
    creation = {
        "subnet": args.subnet,
        "num_pcs_requested": args.num_pcs,
        "split": args.split,
        "manifest": str(args.manifest),
        "tool_version": __version__,
    }
    embedding.save_index(args.out, model, emb, labels, creation)
    print(f"fit {len(vectors)} vectors (d={model.d}) -> {args.out} "
          f"[index_id={embedding.index_id(model)}]")
    return EXIT_OK


def cmd_project(args: argparse.Namespace) -> int:
    index = embedding.load_index(args.index)
    cal = calibration.load_calibration(args.calibration)[0] if args.calibration else None
    selector = _index_selector(index)
    if args.lora:
        ids = [Path(args.lora).stem]
        labels = [""]
        vecs = [vectorize(parse_safetensors(args.lora), selector)]
    else:
        manifest = dataset.load_manifest(args.manifest)
        entries = manifest.select(
            split=dataset.Split(args.split) if args.split else None,
            config=dataset.Config(args.config) if args.config else None,
        )
        if not entries:
            raise ManifestError("no matching manifest entries")
        ids, labels, vecs = _load_entry_vectors(manifest, entries, selector)
    emb = embedding.embed_vectors(index.model, vecs, ids)
    coords = calibration.apply_calibration(cal, emb.coords) if cal is not None else emb.coords
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as handle:
        cols = ",".join(f"pc{i + 1}" for i in range(emb.num_pcs))
        handle.write(f"sample_id,label,{cols}\n")
        for sid, label, row in zip(ids, labels, coords):
            handle.write(f"{sid},{label}," + ",".join(repr(float(v)) for v in row) + "\n")
    print(f"projected {len(ids)} samples -> {out}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    index = embedding.load_index(args.index)
    manifest = dataset.load_manifest(args.manifest)
    selector = _index_selector(index)
    train_entries = manifest.select(split=dataset.Split(args.train_split), config=dataset.Config.SAME)
    cali_config = dataset.Config(args.cali_config) if args.cali_config != "any" else None
    cali_entries = manifest.select(split=dataset.Split(args.cali_split), config=cali_config)
    if not train_entries or not cali_entries:
        raise ManifestError("empty train or calibration selection")
    train = dataset.group_by_artist(manifest, train_entries, selector)
    cali = dataset.group_by_artist(manifest, cali_entries, selector)
    pairs = calibration.compute_centroid_pairs(index.model, train, cali)
    mode = calibration.CalibrationMode.SCALE_ONLY if args.mode == "scale-only" else calibration.CalibrationMode.AFFINE
    cal = calibration.fit_calibration(pairs, mode)
    calibration.save_calibration(
        cal, args.out, layout_hash=index.model.layout_hash,
        index_id=index.manifest.get("index_id", ""),
    )
    print(f"calibrated {cal.num_pcs} axes on {cal.n_artists} artists -> {args.out}")
    return EXIT_OK


def cmd_cluster_eval(args: argparse.Namespace) -> int:
    index = embedding.load_index(args.index)
    coords = index.embedding.coords
    if args.num_pcs:
        coords = coords[:, : args.num_pcs]
    k = args.k if args.k else len(set(index.labels))
    seeds = _parse_seeds(args.seeds)
    report = cluster_eval.cluster_eval_run(coords, index.labels, k, seeds, workers=_threads(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as handle:
        handle.write("seed,ari,nmi\n")
        for seed, ari, nmi in zip(report.seeds, report.ari, report.nmi):
            handle.write(f"{seed},{ari!r},{nmi!r}\n")
        handle.write(f"mean,{report.ari_mean!r},{report.nmi_mean!r}\n")
        handle.write(f"std,{report.ari_std!r},{report.nmi_std!r}\n")
    print(f"ari {report.ari_mean:.4f}+/-{report.ari_std:.4f} "
          f"nmi {report.nmi_mean:.4f}+/-{report.nmi_std:.4f} -> {out}")
    return EXIT_OK


def _build_retrieval_index(args: argparse.Namespace) -> tuple[retrieval.RetrievalIndex, embedding.StyleIndex | None]:
    metric = retrieval.Metric(args.metric)
    if getattr(args, "database", None):
        ids, labels, rows = _read_queries_manifest(Path(args.database))
        return retrieval.RetrievalIndex(np.stack(rows), ids, labels, metric), None
    index = embedding.load_index(args.index)
    rindex = retrieval.RetrievalIndex(
        index.embedding.coords, index.embedding.sample_ids, index.labels, metric
    )
    return rindex, index


def _read_queries_manifest(path: Path) -> tuple[list[str], list[str], list[np.ndarray]]:
    """CSV of sample_id,label,path rows pointing at vector files."""
    ids, labels, rows = [], [], []
    with path.open(encoding="utf-8", newline="") as handle:
        header = handle.readline().strip().split(",")
        if header != ["sample_id", "label", "path"]:
            raise ManifestError(f"{path}: expected header sample_id,label,path")
        for line_no, line in enumerate(handle, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 3:
                raise ManifestError(f"{path}: row {line_no} malformed")
            sid, label, rel = parts
            ids.append(sid)
            labels.append(label)
            rows.append(retrieval.read_feature_vector(path.parent / rel))
    if not ids:
        raise ManifestError(f"{path}: no query rows")
    return ids, labels, rows


def cmd_retrieve(args: argparse.Namespace) -> int:
    index = embedding.load_index(args.index)
    cal = calibration.load_calibration(args.calibration)[0] if args.calibration else None
    coords = _query_coords(Path(args.query), index, cal)
    rindex = retrieval.RetrievalIndex(
        index.embedding.coords, index.embedding.sample_ids, index.labels,
        retrieval.Metric(args.metric),
    )
    result = retrieval.knn_query(rindex, coords, args.top_k)
    label_of = dict(zip(index.embedding.sample_ids, index.labels))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as handle:
        handle.write("rank,sample_id,label,distance\n")
        for rank, (sid, dist) in enumerate(result.entries, start=1):
            handle.write(f"{rank},{sid},{label_of[sid]},{dist!r}\n")
    print(f"top-{args.top_k} -> {out}")
    return EXIT_OK


def cmd_eval_retrieval(args: argparse.Namespace) -> int:
    rindex, style_index = _build_retrieval_index(args)
    cal = calibration.load_calibration(args.calibration)[0] if args.calibration else None
    qids, qlabels, qrows = [], [], []
    qpath = Path(args.queries)
    with qpath.open(encoding="utf-8", newline="") as handle:
        header = handle.readline().strip().split(",")
        if header != ["sample_id", "label", "path"]:
            raise ManifestError(f"{qpath}: expected header sample_id,label,path")
        for line in handle:
            sid, label, rel = line.rstrip("\n").split(",")
            qids.append(sid)
            qlabels.append(label)
            if style_index is not None:
                qrows.append(_query_coords(qpath.parent / rel, style_index, cal))
            else:
                qrows.append(retrieval.read_feature_vector(qpath.parent / rel))
    queries = retrieval.LabeledQueries(ids=qids, labels=qlabels, coords=np.stack(qrows))
    scenario = retrieval.Scenario(args.scenario) if args.scenario else None
    report = retrieval.retrieval_eval(rindex, queries, args.top_k, scenario)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".json":
        _write_json(out, {
            "scenario": report.scenario.value if report.scenario else None,
            "top_k": report.top_k,
            "mAP": report.mean_ap,
            "mean_recall": report.mean_recall,
            "per_query": [
                {"sample_id": qid, "ap": ap, "recall": rec}
                for qid, ap, rec in zip(report.query_ids, report.ap, report.recall)
            ],
        })
    else:
        with out.open("w", encoding="utf-8", newline="") as handle:
            handle.write("query_id,label,ap,recall\n")
            for qid, label, ap, rec in zip(report.query_ids, qlabels, report.ap, report.recall):
                handle.write(f"{qid},{label},{ap!r},{rec!r}\n")
            handle.write(f"mAP,,{report.mean_ap!r},{report.mean_recall!r}\n")
    tag = f" [{report.scenario.value}]" if report.scenario else ""
    print(f"mAP {report.mean_ap:.4f} recall@{report.top_k} {report.mean_recall:.4f}{tag} -> {out}")
    return EXIT_OK


def _load_coords_any(path: Path) -> embedding.EmbeddingMatrix:
    if path.is_dir():
        index = embedding.load_index(path)
        return index.embedding
    ids, rows = [], []
    with path.open(encoding="utf-8", newline="") as handle:
        next(handle)
        for line in handle:
            fields = line.rstrip("\n").split(",")
            ids.append(fields[0])
            rows.append([float(v) for v in fields[2:]])
    coords = np.asarray(rows)
    return embedding.EmbeddingMatrix(coords=coords, sample_ids=ids, num_pcs=coords.shape[1])


def cmd_compare(args: argparse.Namespace) -> int:
    emb_a = _load_coords_any(Path(args.a))
    emb_b = _load_coords_any(Path(args.b))
    max_pcs = args.max_pcs or min(emb_a.num_pcs, emb_b.num_pcs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as handle:
        handle.write("num_pcs,mean_cosine\n")
        for j in range(1, max_pcs + 1):
            sim = embedding.compare_embeddings(emb_a, emb_b, j)
            handle.write(f"{j},{sim!r}\n")
    print(f"compared up to {max_pcs} axes -> {out}")
    return EXIT_OK


def cmd_select_pcs(args: argparse.Namespace) -> int:
    index = embedding.load_index(args.index)
    manifest = dataset.load_manifest(args.manifest)
    selector = _index_selector(index)
    entries = manifest.select(split=dataset.Split(args.eval_split))
    if not entries:
        raise ManifestError(f"no entries with split {args.eval_split!r}")
    ids, labels, vecs = _load_entry_vectors(manifest, entries, selector)
    emb = embedding.embed_vectors(index.model, vecs, ids)
    task = embedding.EvalTask(args.task)
    candidates = _parse_range(args.range, index.model.num_pcs)
    result = embedding.select_num_pcs(
        emb.coords,
        labels,
        task,
        candidates,
        seeds=_parse_seeds(args.seeds),
        top_k=args.top_k,
        database_coords=index.embedding.coords if task is embedding.EvalTask.RETRIEVAL else None,
        database_labels=index.labels if task is embedding.EvalTask.RETRIEVAL else None,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as handle:
        handle.write("num_pcs,score\n")
        for j, score in result.curve:
            handle.write(f"{j},{score!r}\n")
    print(json.dumps({"task": task.value, "best_num_pcs": result.best_num_pcs}, sort_keys=True))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = dataset.SynthSpec(
        n_artists=args.artists,
        m_train=args.m_train,
        m_cali=args.m_cali,
        m_val=args.m_val,
        m_test_same=args.m_test_same,
        m_cali_diff=args.m_cali_diff,
        m_test_diff=args.m_test_diff,
        ambient_dim=args.dim,
        signal_dim=args.signal_dim,
        inter_cluster_spread=args.spread,
        intra_cluster_std=args.std,
        drift_scale=_parse_floats(args.drift_scale),
        drift_offset=_parse_floats(args.drift_offset),
        drift_num_pcs=args.drift_pcs,
        drift_residual_std=args.residual_std,
        overlap_fraction=args.overlap,
        rank=args.rank,
        seed=args.seed,
    )
    manifest = dataset.generate_synthetic(spec, args.out)
    print(f"generated {len(manifest)} samples -> {args.out}")
    return EXIT_OK


def cmd_export_viz(args: argparse.Namespace) -> int:
    index = embedding.load_index(args.index)
    if args.dims not in (2, 3):
        raise ConfigError(f"dims must be 2 or 3, got {args.dims}")
    if index.model.num_pcs < args.dims:
        raise ConfigError(f"index holds only {index.model.num_pcs} axes")
    genre_of: dict[str, str] = {}
    if args.manifest:
        manifest = dataset.load_manifest(args.manifest)
        genre_of = {e.sample_id: e.genre for e in manifest.entries}
    samples = [
        {
            "id": sid,
            "label": label,
            "genre": genre_of.get(sid, ""),
            "coords": [float(v) for v in row[: args.dims]],
        }
        for sid, label, row in zip(
            index.embedding.sample_ids, index.labels, index.embedding.coords
        )
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, {"samples": samples, "dims": args.dims})
    print(f"exported {len(samples)} samples -> {out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorastyle",
        description="Style embeddings from LoRA adapter weights: vectorize, "
        "fit, calibrate, and evaluate by clustering and retrieval.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json-errors", action="store_true",
                        help="emit errors as a single JSON line on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vectorize", help="flatten one adapter file to a float32 vector")
    p.add_argument("--lora", required=True, help="input .safetensors file")
    p.add_argument("--subnet", default="full", choices=sorted(_SUBNETS))
    p.add_argument("--out", required=True, help="output .bin (sidecar .json added)")
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("fit", help="fit the PCA embedding on a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train", choices=[s.value for s in dataset.Split])
    p.add_argument("--subnet", default="full", choices=sorted(_SUBNETS))
    p.add_argument("--num-pcs", type=int, default=100)
    p.add_argument("--out", required=True, help="output index directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("project", help="project adapters into an existing index")
    p.add_argument("--index", required=True)
    p.add_argument("--lora", help="single adapter file")
    p.add_argument("--manifest", help="manifest of adapters")
    p.add_argument("--split", help="restrict manifest entries to one split")
    p.add_argument("--config", choices=[c.value for c in dataset.Config])
    p.add_argument("--calibration", help="calibration JSON to apply")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("calibrate", help="fit the per-component affine correction")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-split", default="train")
    p.add_argument("--cali-split", default="calibration")
    p.add_argument("--cali-config", default="any", choices=["any", "same", "diff"])
    p.add_argument("--mode", default="affine", choices=["affine", "scale-only"])
    p.add_argument("--out", required=True, help="output calibration JSON")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("cluster-eval", help="k-means + ARI/NMI over index projections")
    p.add_argument("--index", required=True)
    p.add_argument("--num-pcs", type=int, default=0, help="truncate to this many axes")
    p.add_argument("--k", type=int, default=0, help="cluster count (default: label count)")
    p.add_argument("--seeds", default="0-9")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_cluster_eval)

    p = sub.add_parser("retrieve", help="nearest neighbors for one query")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True, help=".safetensors or vector file")
    p.add_argument("--top-k", type=int, default=24)
    p.add_argument("--metric", default="euclidean", choices=[m.value for m in retrieval.Metric])
    p.add_argument("--calibration")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval-retrieval", help="mAP / recall@k over a query manifest")
    p.add_argument("--index", help="index directory as the database")
    p.add_argument("--database", help="sample_id,label,path manifest of feature vectors")
    p.add_argument("--queries", required=True, help="sample_id,label,path manifest")
    p.add_argument("--top-k", type=int, default=24)
    p.add_argument("--metric", default="euclidean", choices=[m.value for m in retrieval.Metric])
    p.add_argument("--scenario", choices=[s.value for s in retrieval.Scenario])
    p.add_argument("--calibration")
    p.add_argument("--out", required=True, help=".csv or .json report")
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("compare", help="mean cosine similarity between two embeddings")
    p.add_argument("--a", required=True, help="index dir or projections CSV")
    p.add_argument("--b", required=True)
    p.add_argument("--max-pcs", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("select-pcs", help="grid-search the component count")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", required=True, choices=[t.value for t in embedding.EvalTask])
    p.add_argument("--range", required=True, help="lo:hi or comma list")
    p.add_argument("--eval-split", default="validation")
    p.add_argument("--seeds", default="0-9")
    p.add_argument("--top-k", type=int, default=24)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="output curve CSV")
    p.set_defaults(func=cmd_select_pcs)

    p = sub.add_parser("synth", help="generate a synthetic adapter population")
    p.add_argument("--out", required=True)
    p.add_argument("--artists", type=int, default=20)
    p.add_argument("--m-train", type=int, default=21)
    p.add_argument("--m-cali", type=int, default=3)
    p.add_argument("--m-val", type=int, default=0)
    p.add_argument("--m-test-same", type=int, default=0)
    p.add_argument("--m-cali-diff", type=int, default=0)
    p.add_argument("--m-test-diff", type=int, default=0)
    p.add_argument("--dim", type=int, default=10_000)
    p.add_argument("--signal-dim", type=int, default=30)
    p.add_argument("--spread", type=float, default=10.0)
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--drift-scale", default="1.0")
    p.add_argument("--drift-offset", default="0.0")
    p.add_argument("--drift-pcs", type=int, default=None)
    p.add_argument("--residual-std", type=float, default=0.0)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export-viz", help="dump 2-D/3-D coordinates as JSON")
    p.add_argument("--index", required=True)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--manifest", help="manifest supplying genre tags")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_viz)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        _report(exc, args)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        _report(exc, args)
        return EXIT_DATA
    except LoraStyleError as exc:
        _report(exc, args)
        return EXIT_DATA
    except FileNotFoundError as exc:
        _report(exc, args)
        return EXIT_DATA


def _report(exc: Exception, args: argparse.Namespace) -> None:
    if getattr(args, "json_errors", False):
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True),
              file=sys.stderr)
    else:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
