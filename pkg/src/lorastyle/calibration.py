"""Per-component affine correction for projections of unseen adapters.

Projections of adapters that were not part of the PCA fit drift away from
the training clusters, axis by axis. The correction is a scale s_k and
offset t_k per component, fitted in closed form on per-artist centroid
pairs: average the raw weight vectors of each artist in the training set
and in a held-out calibration set, project both averages, and least-squares
match the calibration-side coordinates onto the training-side ones.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embedding import PcaModel, project
from .errors import ConfigError, CoverageError, DegenerateAxisError, LengthError
from .lora_io import WeightVector


class CalibrationMode(enum.Enum):
    AFFINE = "affine"
    SCALE_ONLY = "scale_only"


@dataclass
class CentroidPair:
    """Projected per-artist averages from the training and calibration sets."""

    artist_id: str
    train_centroid: np.ndarray
    cali_centroid: np.ndarray
    m_train: int
    m_cali: int


@dataclass
class CalibrationMap:
    """Fitted per-axis scales and offsets with fit diagnostics.

    ``sums`` stacks the four per-axis accumulators of the closed form
    (cross, calibration second moment, and the two first moments);
    ``residuals`` holds the per-axis sum of squared errors after the fit.
    """

    s: np.ndarray
    t: np.ndarray
    mode: CalibrationMode
    n_artists: int
    residuals: np.ndarray
    sums: np.ndarray

    @property
    def num_pcs(self) -> int:
        return int(self.s.shape[0])


def compute_centroid_pairs(
    model: PcaModel,
    train: Mapping[str, Sequence[WeightVector]],
    cali: Mapping[str, Sequence[WeightVector]],
    num_pcs: int | None = None,
) -> list[CentroidPair]:
    """Average raw weight vectors per artist in each set, then project.

    Projection is linear, so averaging before or after projecting is
    equivalent; averaging first touches each d-length vector once.
    Every artist must appear in both sets.
    """
    missing = sorted(set(train) ^ set(cali))
    if missing:
        raise CoverageError(f"artists missing from one side: {missing}")
    pairs = []
    for artist in sorted(train):
        train_vecs, cali_vecs = train[artist], cali[artist]
        if not train_vecs or not cali_vecs:
            raise CoverageError(f"artist {artist!r} has an empty vector list")
        mean_train = _mean_vector(train_vecs)
        mean_cali = _mean_vector(cali_vecs)
        pairs.append(
            CentroidPair(
                artist_id=artist,
                train_centroid=project(model, mean_train, num_pcs),
                cali_centroid=project(model, mean_cali, num_pcs),
                m_train=len(train_vecs),
                m_cali=len(cali_vecs),
            )
        )
    return pairs


def _mean_vector(vecs: Sequence[WeightVector]) -> WeightVector:
    values = np.mean([v.values for v in vecs], axis=0)
    return WeightVector(values=values, layout_hash=vecs[0].layout_hash)


def centroid_arrays(pairs: Sequence[CentroidPair]) -> tuple[np.ndarray, np.ndarray]:
    """(train, cali) centroid coordinate matrices, one artist per row."""
    train = np.stack([p.train_centroid for p in pairs]).astype(np.float64)
    cali = np.stack([p.cali_centroid for p in pairs]).astype(np.float64)
    return train, cali


def fit_calibration(
    pairs: Sequence[CentroidPair],
    mode: CalibrationMode = CalibrationMode.AFFINE,
) -> CalibrationMap:
    """Closed-form least-squares fit of (s_k, t_k) per axis.

    Minimizes 0.5 * sum_i (s_k * cali_ik + t_k - train_ik)^2 independently
    per axis k. SCALE_ONLY drops the offset (t = 0 exactly) and needs one
    pair; AFFINE needs two. An axis whose calibration centroids carry no
    spread makes the fit degenerate and fails loudly rather than silently
    passing s = 1.
    """
    if not pairs:
        raise ConfigError("no centroid pairs given")
    y, x = centroid_arrays(pairs)
    n = len(pairs)
    if mode is CalibrationMode.AFFINE and n < 2:
        raise ConfigError("affine calibration needs at least 2 artists")

    s1 = np.sum(y * x, axis=0)
    s2 = np.sum(x * x, axis=0)
    s3 = np.sum(y, axis=0)
    s4 = np.sum(x, axis=0)

    if mode is CalibrationMode.AFFINE:
        denom = s2 - (s4 * s4) / n
        bad = np.nonzero(np.abs(denom) <= 1e-12)[0]
        if bad.size:
            raise DegenerateAxisError(
                f"axis {bad[0]}: calibration centroids carry no spread", axis=int(bad[0])
            )
        s = (s1 - (s3 * s4) / n) / denom
        t = (s3 - s * s4) / n
    else:
        bad = np.nonzero(np.abs(s2) <= 1e-12)[0]
        if bad.size:
            raise DegenerateAxisError(
                f"axis {bad[0]}: calibration centroids are all zero", axis=int(bad[0])
            )
        s = s1 / s2
        t = np.zeros_like(s)

    tiny = np.nonzero(np.abs(s) < 1e-9)[0]
    if tiny.size:
        warnings.warn(
            f"calibration scale near zero on axes {tiny.tolist()}", RuntimeWarning, stacklevel=2
        )
    residuals = np.sum((s * x + t - y) ** 2, axis=0)
    return CalibrationMap(
        s=s, t=t, mode=mode, n_artists=n, residuals=residuals, sums=np.stack([s1, s2, s3, s4])
    )


def apply_calibration(cal: CalibrationMap, coords: np.ndarray) -> np.ndarray:
    """Elementwise s * coords + t over the trailing axis (length <= fitted k)."""
    coords = np.asarray(coords, dtype=np.float64)
    j = coords.shape[-1]
    if j > cal.num_pcs:
        raise LengthError(f"coords have {j} axes but the map covers {cal.num_pcs}")
    return cal.s[:j] * coords + cal.t[:j]


def minmax_normalized_offsets(
    pairs: Sequence[CentroidPair],
    train_coords: np.ndarray,
) -> np.ndarray:
    """|t_k| refitted after per-axis min-max normalization.

    Both centroid sides are rescaled by the training projections' per-axis
    min/max before an affine refit, putting the offsets on a common [0, 1]
    scale; near-zero values justify dropping t from the correction.
    """
    train_coords = np.asarray(train_coords, dtype=np.float64)
    y, x = centroid_arrays(pairs)
    j = y.shape[1]
    lo = train_coords[:, :j].min(axis=0)
    span = train_coords[:, :j].max(axis=0) - lo
    flat = np.nonzero(span <= 0)[0]
    if flat.size:
        raise DegenerateAxisError(
            f"axis {flat[0]}: training projections have zero range", axis=int(flat[0])
        )
    scaled = [
        CentroidPair(
            artist_id=p.artist_id,
            train_centroid=(y[i] - lo) / span,
            cali_centroid=(x[i] - lo) / span,
            m_train=p.m_train,
            m_cali=p.m_cali,
        )
        for i, p in enumerate(pairs)
    ]
    refit = fit_calibration(scaled, CalibrationMode.AFFINE)
    return np.abs(refit.t)


def save_calibration(
    cal: CalibrationMap,
    path: str | Path,
    layout_hash: str,
    index_id: str,
) -> None:
    """JSON persistence, tagged with the layout and index it was fit against."""
    payload = {
        "mode": cal.mode.value,
        "s": cal.s.tolist(),
        "t": cal.t.tolist(),
        "n_artists": cal.n_artists,
        "residuals": cal.residuals.tolist(),
        "sums": {
            "s1": cal.sums[0].tolist(),
            "s2": cal.sums[1].tolist(),
            "s3": cal.sums[2].tolist(),
            "s4": cal.sums[3].tolist(),
        },
        "layout_hash": layout_hash,
        "index_id": index_id,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_calibration(path: str | Path) -> tuple[CalibrationMap, dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    sums = payload["sums"]
    cal = CalibrationMap(
        s=np.asarray(payload["s"], dtype=np.float64),
        t=np.asarray(payload["t"], dtype=np.float64),
        mode=CalibrationMode(payload["mode"]),
        n_artists=int(payload["n_artists"]),
        residuals=np.asarray(payload["residuals"], dtype=np.float64),
        sums=np.stack([np.asarray(sums[k], dtype=np.float64) for k in ("s1", "s2", "s3", "s4")]),
    )
    meta = {"layout_hash": payload["layout_hash"], "index_id": payload["index_id"]}
    return cal, meta
