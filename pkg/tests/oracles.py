"""Independent brute-force implementations used to check the library.

These deliberately take the slow, direct route: dense covariance
eigendecomposition instead of the Gram trick, exact rational pair counting
for ARI, high-precision entropies for NMI, generic least squares for the
calibration closed form, and full sorts for nearest neighbors.
"""

from fractions import Fraction

import mpmath
import numpy as np


def pca_covariance_oracle(X: np.ndarray, k: int):
    """PCA via the d x d covariance matrix: (mean, components k x d, variances)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    return mean, eigvecs[:, order].T.copy(), eigvals[order]


def align_signs(reference: np.ndarray, candidate: np.ndarray) -> np.ndarray:
    """Flip candidate rows (axes) that anti-correlate with the reference."""
    out = candidate.copy()
    for i in range(out.shape[0]):
        if np.dot(reference[i], out[i]) < 0:
            out[i] = -out[i]
    return out


def ari_oracle(a, b) -> Fraction:
    """Adjusted Rand index with exact rational arithmetic."""
    a = list(a)
    b = list(b)
    n = len(a)
    cells: dict[tuple, int] = {}
    rows: dict[object, int] = {}
    cols: dict[object, int] = {}
    for x, y in zip(a, b):
        cells[(x, y)] = cells.get((x, y), 0) + 1
        rows[x] = rows.get(x, 0) + 1
        cols[y] = cols.get(y, 0) + 1

    def c2(v: int) -> Fraction:
        return Fraction(v * (v - 1), 2)

    sum_cells = sum(c2(v) for v in cells.values())
    sum_rows = sum(c2(v) for v in rows.values())
    sum_cols = sum(c2(v) for v in cols.values())
    total = c2(n)
    expected = Fraction(sum_rows * sum_cols, 1) / total
    maximum = Fraction(sum_rows + sum_cols, 2)
    if maximum == expected:
        return Fraction(1)
    return (sum_cells - expected) / (maximum - expected)


def nmi_oracle(a, b) -> float:
    """NMI with 50-digit arithmetic: I(a;b) / mean(H(a), H(b)), natural log."""
    with mpmath.workdps(50):
        a = list(a)
        b = list(b)
        n = len(a)
        cells: dict[tuple, int] = {}
        rows: dict[object, int] = {}
        cols: dict[object, int] = {}
        for x, y in zip(a, b):
            cells[(x, y)] = cells.get((x, y), 0) + 1
            rows[x] = rows.get(x, 0) + 1
            cols[y] = cols.get(y, 0) + 1
        h_a = -sum(mpmath.mpf(v) / n * mpmath.log(mpmath.mpf(v) / n) for v in rows.values())
        h_b = -sum(mpmath.mpf(v) / n * mpmath.log(mpmath.mpf(v) / n) for v in cols.values())
        if h_a == 0 and h_b == 0:
            return 1.0
        mi = mpmath.mpf(0)
        for (x, y), v in cells.items():
            p = mpmath.mpf(v) / n
            mi += p * mpmath.log(p / (mpmath.mpf(rows[x]) / n * mpmath.mpf(cols[y]) / n))
        value = mi / ((h_a + h_b) / 2)
        return float(min(max(value, mpmath.mpf(0)), mpmath.mpf(1)))


def ap_oracle(ranked_ids, relevant) -> Fraction:
    """Average precision by direct enumeration, exact rationals."""
    relevant = set(relevant)
    denom = min(len(relevant), len(ranked_ids))
    hits = 0
    total = Fraction(0)
    for rank, sid in enumerate(ranked_ids, start=1):
        if sid in relevant:
            hits += 1
            total += Fraction(hits, rank)
    if hits == 0:
        return Fraction(0)
    return total / denom


def recall_oracle(ranked_ids, relevant, k) -> Fraction:
    relevant = set(relevant)
    found = sum(1 for sid in ranked_ids[:k] if sid in relevant)
    return Fraction(found, len(relevant))


def knn_oracle(coords, ids, query, metric="euclidean"):
    """Full sort by (distance, id)."""
    coords = np.asarray(coords, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    dists = []
    for row in coords:
        if metric == "euclidean":
            dists.append(float(np.linalg.norm(row - query)))
        else:
            nr, nq = np.linalg.norm(row), np.linalg.norm(query)
            if nq == 0.0:
                dists.append(1.0)
            elif nr == 0.0:
                dists.append(float("inf"))
            else:
                dists.append(1.0 - float(row @ query) / (nr * nq))
    return sorted(zip(ids, dists), key=lambda item: (item[1], item[0]))


def calibration_lstsq_oracle(x: np.ndarray, y: np.ndarray):
    """Per-axis least squares for y ~ s*x + t via the generic solver."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    k = x.shape[1]
    s = np.empty(k)
    t = np.empty(k)
    for axis in range(k):
        design = np.stack([x[:, axis], np.ones(x.shape[0])], axis=1)
        coef, *_ = np.linalg.lstsq(design, y[:, axis], rcond=None)
        s[axis], t[axis] = coef
    return s, t
