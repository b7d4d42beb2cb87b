import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorastyle import embedding
from lorastyle.embedding import (
    EmbeddingMatrix,
    EvalTask,
    compare_embeddings,
    embed_vectors,
    explained_variance_report,
    fit_pca,
    load_index,
    project,
    save_index,
    select_num_pcs,
)
from lorastyle.errors import (
    AlignmentError,
    ConfigError,
    FitError,
    LayoutError,
    NumericError,
    RankError,
)
from lorastyle.lora_io import WeightVector
from oracles import align_signs, pca_covariance_oracle


def vecs_from(X, layout="L"):
    return [WeightVector(values=np.asarray(row, dtype=np.float64), layout_hash=layout) for row in X]


def test_single_axis_data():
    X = np.zeros((3, 5))
    X[:, 0] = [-1.0, 0.0, 1.0]
    model = fit_pca(vecs_from(X), 1)
    assert model.explained_variance[0] == pytest.approx(1.0)
    np.testing.assert_allclose(model.components[0], [1, 0, 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(model.mean, 0, atol=1e-12)
    assert explained_variance_report(model) == pytest.approx([1.0])


def test_matches_covariance_oracle():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 200))
    model = fit_pca(vecs_from(X), 10)
    mean_o, comps_o, vars_o = pca_covariance_oracle(X, 10)
    np.testing.assert_allclose(model.mean, mean_o, atol=1e-12)
    np.testing.assert_allclose(model.explained_variance, vars_o, rtol=1e-9)
    comps_o = align_signs(model.components, comps_o)
    np.testing.assert_allclose(model.components, comps_o, atol=1e-8)
    proj = (X - mean_o) @ comps_o.T
    ours = np.stack([project(model, v) for v in vecs_from(X)])
    scale = np.abs(proj).max(axis=0)
    assert (np.abs(ours - proj) <= 1e-6 * np.maximum(scale, 1.0)).all()


def test_duplicating_samples_keeps_model():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((12, 30))
    a = fit_pca(vecs_from(X), 5)
    b = fit_pca(vecs_from(np.vstack([X, X])), 5)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)
    np.testing.assert_allclose(a.components, align_signs(a.components, b.components), atol=1e-7)


def test_project_mean_is_zero():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((8, 20))
    model = fit_pca(vecs_from(X), 3)
    np.testing.assert_allclose(project(model, WeightVector(model.mean, "L")), 0, atol=1e-9)


def test_project_single_component_direction():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((8, 20))
    model = fit_pca(vecs_from(X), 3)
    theta = WeightVector(model.mean + 2.5 * model.components[0], "L")
    np.testing.assert_allclose(project(model, theta), [2.5, 0, 0], atol=1e-9)


def test_reconstruction_error_equals_tail_mass():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((20, 40))
    k = 6
    model = fit_pca(vecs_from(X), k)
    Xc = X - model.mean
    proj = Xc @ model.components.T
    residual = float(((Xc - proj @ model.components) ** 2).sum())
    _, _, all_vars = pca_covariance_oracle(X, 19)
    tail = float(all_vars[k:].sum()) * (X.shape[0] - 1)
    assert residual == pytest.approx(tail, rel=1e-6)


def test_orthonormality():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 100))
    model = fit_pca(vecs_from(X), 12)
    gram = model.components @ model.components.T
    assert np.abs(gram - np.eye(12)).max() <= 1e-6


def test_projection_affine_combination():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((10, 25))
    model = fit_pca(vecs_from(X), 4)
    t1, t2 = rng.standard_normal(25), rng.standard_normal(25)
    alpha = 0.3
    mixed = project(model, WeightVector(alpha * t1 + (1 - alpha) * t2, "L"))
    split = alpha * project(model, WeightVector(t1, "L")) + (1 - alpha) * project(
        model, WeightVector(t2, "L")
    )
    np.testing.assert_allclose(mixed, split, atol=1e-9)


def test_train_projections_centered():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((15, 30))
    model = fit_pca(vecs_from(X), 5)
    emb = embed_vectors(model, vecs_from(X), [str(i) for i in range(15)])
    assert np.abs(emb.coords.mean(axis=0)).max() <= 1e-8


def test_isotropic_fractions():
    rng = np.random.default_rng(8)
    X = np.zeros((4000, 6))
    X[:, :2] = rng.standard_normal((4000, 2))
    model = fit_pca(vecs_from(X), 2)
    np.testing.assert_allclose(explained_variance_report(model), [0.5, 0.5], atol=0.05)


def test_zero_variance_rejected():
    X = np.ones((5, 10)) * 3.0
    with pytest.raises(FitError):
        fit_pca(vecs_from(X), 2)


def test_rank_deficient_reports_available():
    X = np.zeros((6, 10))
    X[:3, 0] = [1, 2, 3]
    X[3:, 1] = [1, 2, 3]  # rank 2 after centering... keep generous
    with pytest.raises(FitError) as exc:
        fit_pca(vecs_from(X), 5)
    assert exc.value.available >= 1


def test_k_above_n_minus_one():
    X = np.random.default_rng(9).standard_normal((4, 10))
    with pytest.raises(RankError):
        fit_pca(vecs_from(X), 4)


def test_layout_mismatch():
    rng = np.random.default_rng(10)
    vecs = vecs_from(rng.standard_normal((4, 6)))
    vecs[2] = WeightVector(vecs[2].values, "OTHER")
    with pytest.raises(LayoutError):
        fit_pca(vecs, 2)
    model = fit_pca(vecs_from(rng.standard_normal((4, 6))), 2)
    with pytest.raises(LayoutError):
        project(model, WeightVector(np.zeros(6), "OTHER"))


def test_non_finite_rejected():
    X = np.random.default_rng(11).standard_normal((5, 8))
    X[1, 3] = np.nan
    with pytest.raises(NumericError):
        fit_pca(vecs_from(X), 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gram_equals_covariance_oracle_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 40))
    d = int(rng.integers(n, 120))
    k = int(rng.integers(1, min(n - 1, 10) + 1))
    X = rng.standard_normal((n, d)) * rng.uniform(0.1, 5)
    model = fit_pca(vecs_from(X), k)
    mean_o, comps_o, _ = pca_covariance_oracle(X, k)
    proj_o = (X - mean_o) @ align_signs(model.components, comps_o).T
    proj = (X - model.mean) @ model.components.T
    scale = np.maximum(np.abs(proj_o).max(axis=0), 1.0)
    assert (np.abs(proj - proj_o) <= 1e-6 * scale).all()


# -- compare_embeddings ------------------------------------------------------


def _emb(coords, ids=None):
    coords = np.asarray(coords, dtype=np.float64)
    ids = ids or [f"s{i}" for i in range(coords.shape[0])]
    return EmbeddingMatrix(coords=coords, sample_ids=ids, num_pcs=coords.shape[1])


def test_compare_identity():
    rng = np.random.default_rng(12)
    a = _emb(rng.standard_normal((9, 4)))
    for j in range(1, 5):
        assert compare_embeddings(a, a, j) == pytest.approx(1.0)


def test_compare_sign_flips_undone():
    rng = np.random.default_rng(13)
    coords = rng.standard_normal((9, 4))
    a = _emb(coords)
    b = _emb(coords * np.array([-1, 1, -1, -1.0]))
    assert compare_embeddings(a, b, 4) == pytest.approx(1.0)


def test_compare_symmetric_and_alignment_helps():
    rng = np.random.default_rng(14)
    a = _emb(rng.standard_normal((12, 5)))
    b = _emb(rng.standard_normal((12, 5)) - 0.8 * np.asarray(a.coords))
    ab = compare_embeddings(a, b, 5)
    ba = compare_embeddings(b, a, 5)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab >= compare_embeddings(a, b, 5, align_signs=False) - 1e-12
    assert -1.0 <= ab <= 1.0


def test_compare_zero_rows_count_as_zero():
    a = _emb([[1.0, 0.0], [0.0, 0.0]])
    b = _emb([[1.0, 0.0], [0.0, 0.0]])
    assert compare_embeddings(a, b, 2) == pytest.approx(0.5)


def test_compare_id_mismatch():
    a = _emb(np.ones((3, 2)))
    b = _emb(np.ones((3, 2)), ids=["x", "y", "z"])
    with pytest.raises(AlignmentError):
        compare_embeddings(a, b, 2)


# -- select_num_pcs ----------------------------------------------------------


def _signal_coords(rng, n_artists=20, per_artist=6, signal=5, total=12, noise=0.05):
    centers = rng.standard_normal((n_artists, signal)) * 10
    rows, labels = [], []
    for a in range(n_artists):
        for _ in range(per_artist):
            row = np.zeros(total)
            row[:signal] = centers[a] + rng.standard_normal(signal)
            row[signal:] = rng.standard_normal(total - signal) * noise
            rows.append(row)
            labels.append(f"artist{a}")
    return np.asarray(rows), labels


def test_select_num_pcs_finds_signal_dim():
    rng = np.random.default_rng(15)
    coords, labels = _signal_coords(rng)
    result = select_num_pcs(coords, labels, EvalTask.CLUSTER, range(1, 13), seeds=range(3))
    assert 3 <= result.best_num_pcs <= 7
    curve = dict(result.curve)
    assert curve[result.best_num_pcs] >= 0.99
    assert curve[1] < curve[result.best_num_pcs]  # sharp early rise


def test_select_num_pcs_retrieval_leave_one_out():
    rng = np.random.default_rng(16)
    coords, labels = _signal_coords(rng, n_artists=6, per_artist=5)
    result = select_num_pcs(coords, labels, EvalTask.RETRIEVAL, range(1, 9), top_k=4)
    assert 2 <= result.best_num_pcs <= 7
    assert dict(result.curve)[result.best_num_pcs] >= 0.99


def test_select_num_pcs_single_candidate():
    rng = np.random.default_rng(17)
    coords, labels = _signal_coords(rng, n_artists=4, per_artist=4)
    result = select_num_pcs(coords, labels, EvalTask.CLUSTER, [3], seeds=[0])
    assert result.best_num_pcs == 3


def test_select_num_pcs_empty_range():
    with pytest.raises(ConfigError):
        select_num_pcs(np.ones((4, 3)), ["a"] * 4, EvalTask.CLUSTER, [])


def test_select_num_pcs_out_of_range():
    with pytest.raises(ConfigError):
        select_num_pcs(np.ones((4, 3)), ["a"] * 4, EvalTask.CLUSTER, [5])


# -- index persistence -------------------------------------------------------


def test_index_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(18)
    X = rng.standard_normal((10, 40)).astype(np.float32).astype(np.float64)
    model = fit_pca(vecs_from(X), 4)
    emb = embed_vectors(model, vecs_from(X), [f"s{i}" for i in range(10)])
    labels = [f"a{i % 3}" for i in range(10)]
    save_index(tmp_path / "idx", model, emb, labels, creation={"subnet": "full"})
    loaded = load_index(tmp_path / "idx")
    assert loaded.manifest["layout_hash"] == model.layout_hash
    assert loaded.labels == labels
    assert loaded.embedding.sample_ids == emb.sample_ids
    np.testing.assert_array_equal(loaded.embedding.coords, emb.coords)
    # binary blobs are float32-quantized
    np.testing.assert_allclose(loaded.model.mean, model.mean, atol=1e-6)
    np.testing.assert_allclose(loaded.model.components, model.components, atol=1e-6)
    np.testing.assert_array_equal(loaded.model.explained_variance, model.explained_variance)


def test_index_save_is_deterministic(tmp_path):
    rng = np.random.default_rng(19)
    X = rng.standard_normal((8, 20))
    model = fit_pca(vecs_from(X), 3)
    emb = embed_vectors(model, vecs_from(X), [f"s{i}" for i in range(8)])
    for name in ("one", "two"):
        save_index(tmp_path / name, model, emb, ["a"] * 8, creation={"k": 3})
    for fname in ("manifest.json", "mean.bin", "components.bin", "projections.csv", "variance.csv"):
        assert (tmp_path / "one" / fname).read_bytes() == (tmp_path / "two" / fname).read_bytes()
