import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorastyle.errors import ConfigError, CoverageError, LengthError
from lorastyle.retrieval import (
    LabeledQueries,
    Metric,
    RankedResult,
    RetrievalIndex,
    Scenario,
    aggregate_features,
    average_precision,
    knn_query,
    read_feature_vector,
    recall_at_k,
    retrieval_eval,
    write_feature_vector,
)
from oracles import ap_oracle, knn_oracle, recall_oracle


def index_of(coords, metric=Metric.EUCLIDEAN, labels=None):
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    ids = [f"s{i:04d}" for i in range(n)]
    return RetrievalIndex(coords, ids, labels or ["x"] * n, metric)


def test_exact_match_first():
    rng = np.random.default_rng(0)
    coords = rng.standard_normal((20, 5))
    index = index_of(coords)
    result = knn_query(index, coords[7], top_k=3)
    assert result.entries[0] == ("s0007", 0.0)


def test_cosine_scale_invariance():
    coords = np.asarray([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    index = index_of(coords, Metric.COSINE)
    result = knn_query(index, 2.0 * coords[0], top_k=3)
    assert result.entries[0][0] == "s0000"
    assert result.entries[0][1] == pytest.approx(0.0, abs=1e-15)


def test_zero_norm_rows_sort_last():
    coords = np.asarray([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    index = index_of(coords, Metric.COSINE)
    result = knn_query(index, np.asarray([1.0, 0.0]), top_k=3)
    assert result.ids() == ["s0001", "s0002", "s0000"]
    assert result.entries[-1][1] == np.inf


def test_zero_norm_query_is_deterministic():
    coords = np.asarray([[1.0, 0.0], [0.0, 1.0]])
    index = index_of(coords, Metric.COSINE)
    result = knn_query(index, np.zeros(2), top_k=2)
    assert result.ids() == ["s0000", "s0001"]  # ties broken by id
    assert all(d == 1.0 for _, d in result.entries)


def test_tie_break_by_id():
    coords = np.asarray([[1.0], [-1.0], [1.0]])
    index = index_of(coords)
    result = knn_query(index, np.asarray([0.0]), top_k=3)
    assert result.ids() == ["s0000", "s0001", "s0002"]


def test_matches_full_sort_oracle():
    rng = np.random.default_rng(1)
    coords = rng.standard_normal((1000, 8))
    index = index_of(coords)
    query = rng.standard_normal(8)
    mine = knn_query(index, query, top_k=24)
    expected = knn_oracle(coords, index.sample_ids, query)[:24]
    assert mine.ids() == [sid for sid, _ in expected]
    for (_, da), (_, db) in zip(mine.entries, expected):
        assert da == pytest.approx(db, abs=1e-12)


def test_knn_validation():
    index = index_of(np.ones((4, 3)))
    with pytest.raises(LengthError):
        knn_query(index, np.ones(2), top_k=2)
    with pytest.raises(ConfigError):
        knn_query(index, np.ones(3), top_k=5)


def test_euclidean_translation_invariance():
    rng = np.random.default_rng(2)
    coords = rng.standard_normal((50, 4))
    query = rng.standard_normal(4)
    shift = rng.standard_normal(4) * 10
    a = knn_query(index_of(coords), query, top_k=50).ids()
    b = knn_query(index_of(coords + shift), query + shift, top_k=50).ids()
    assert a == b


def test_rigid_rotation_invariance():
    rng = np.random.default_rng(3)
    coords = rng.standard_normal((60, 5))
    labels = [f"a{i % 6}" for i in range(60)]
    rot, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    queries = LabeledQueries(["q0", "q1"], ["a0", "a3"], rng.standard_normal((2, 5)))
    base = retrieval_eval(index_of(coords, labels=labels), queries, 10)
    rotated = retrieval_eval(
        index_of(coords @ rot.T, labels=labels),
        LabeledQueries(queries.ids, queries.labels, queries.coords @ rot.T),
        10,
    )
    assert base.mean_ap == pytest.approx(rotated.mean_ap, abs=1e-9)
    assert base.mean_recall == pytest.approx(rotated.mean_recall, abs=1e-9)


# -- average precision / recall ----------------------------------------------


def ranked(ids):
    return RankedResult(query_id="q", entries=[(sid, float(i)) for i, sid in enumerate(ids)])


def test_ap_perfect_prefix():
    assert average_precision(ranked(["a", "b", "c", "x"]), {"a", "b", "c"}) == 1.0


def test_ap_hand_value():
    # relevant at ranks 1 and 3: (1/1 + 2/3) / 2 = 5/6
    assert average_precision(ranked(["r1", "x", "r2", "y"]), {"r1", "r2"}) == pytest.approx(5 / 6)


def test_ap_none_retrieved():
    assert average_precision(ranked(["x", "y"]), {"a"}) == 0.0


def test_ap_empty_relevant():
    with pytest.raises(ConfigError):
        average_precision(ranked(["x"]), set())


def test_recall_basics():
    r = ranked([f"s{i}" for i in range(30)])
    relevant = {f"s{i}" for i in range(0, 48, 2)}  # 24 relevant, 15 in list
    assert recall_at_k(r, relevant, 30) == pytest.approx(15 / 24)
    assert recall_at_k(r, {"s0"}, 1) == 1.0
    with pytest.raises(ConfigError):
        recall_at_k(r, {"s0"}, 31)


def test_recall_full_database():
    r = ranked(["a", "b", "c"])
    assert recall_at_k(r, {"a", "c"}, 3) == 1.0


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ap_recall_match_oracles(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    ids = [f"item{i}" for i in range(n)]
    order = rng.permutation(n)
    listed = [ids[i] for i in order[: int(rng.integers(1, n + 1))]]
    relevant = set(rng.choice(ids, size=int(rng.integers(1, n + 1)), replace=False).tolist())
    k = int(rng.integers(1, len(listed) + 1))
    assert average_precision(ranked(listed), relevant) == pytest.approx(
        float(ap_oracle(listed, relevant)), abs=1e-12
    )
    assert recall_at_k(ranked(listed), relevant, k) == pytest.approx(
        float(recall_oracle(listed, relevant, k)), abs=1e-12
    )


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_recall_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    ids = [f"i{i}" for i in range(20)]
    relevant = set(rng.choice(ids, size=5, replace=False).tolist())
    r = ranked(list(rng.permutation(ids)))
    values = [recall_at_k(r, relevant, k) for k in range(1, 21)]
    assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))


# -- retrieval_eval -----------------------------------------------------------


def test_eval_mutually_closest_clusters():
    rng = np.random.default_rng(4)
    coords, labels = [], []
    for a in range(5):
        center = np.zeros(4)
        center[a % 4] = 40 * (a + 1)
        for _ in range(24):
            coords.append(center + rng.standard_normal(4))
            labels.append(f"artist{a}")
    index = RetrievalIndex(np.asarray(coords), [f"s{i}" for i in range(120)], labels)
    queries = LabeledQueries(
        ["q0", "q1"], ["artist0", "artist3"],
        np.stack([coords[0] + 0.1, coords[3 * 24] + 0.1]),
    )
    report = retrieval_eval(index, queries, 24, Scenario.GEN_GEN)
    assert report.mean_ap == 1.0
    assert report.mean_recall == 1.0
    assert report.scenario is Scenario.GEN_GEN


def test_eval_single_relevant_first():
    index = RetrievalIndex(np.asarray([[0.0], [5.0]]), ["a", "b"], ["lbl", "other"])
    report = retrieval_eval(index, LabeledQueries(["q"], ["lbl"], np.asarray([[0.1]])), 1)
    assert report.mean_ap == 1.0


def test_eval_unknown_label():
    index = RetrievalIndex(np.ones((2, 2)), ["a", "b"], ["x", "x"])
    with pytest.raises(CoverageError):
        retrieval_eval(index, LabeledQueries(["q"], ["unknown"], np.ones((1, 2))), 1)


def test_index_validation():
    with pytest.raises(LengthError):
        RetrievalIndex(np.ones((3, 2)), ["a"], ["x"] * 3)
    from lorastyle.errors import NumericError
    with pytest.raises(NumericError):
        RetrievalIndex(np.full((2, 2), np.nan), ["a", "b"], ["x", "x"])


# -- aggregation and file IO ---------------------------------------------------


def test_aggregate_idempotent():
    v = np.asarray([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(aggregate_features([v, v, v]), v)


def test_aggregate_mean():
    np.testing.assert_array_equal(
        aggregate_features([np.asarray([1.0, 0.0]), np.asarray([0.0, 1.0])]), [0.5, 0.5]
    )


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(5)
    vs = [rng.standard_normal(6) for _ in range(5)]
    a = aggregate_features(vs)
    b = aggregate_features(vs[::-1])
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_aggregate_linear():
    rng = np.random.default_rng(6)
    xs = [rng.standard_normal(4) for _ in range(3)]
    ys = [rng.standard_normal(4) for _ in range(3)]
    lhs = aggregate_features([x + y for x, y in zip(xs, ys)])
    rhs = aggregate_features(xs) + aggregate_features(ys)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_aggregate_validation():
    with pytest.raises(ConfigError):
        aggregate_features([])
    with pytest.raises(LengthError):
        aggregate_features([np.ones(3), np.ones(4)])


def test_feature_vector_file_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    vec = rng.standard_normal(16).astype(np.float32).astype(np.float64)
    write_feature_vector(tmp_path / "v.bin", vec)
    np.testing.assert_array_equal(read_feature_vector(tmp_path / "v.bin"), vec)
    write_feature_vector(tmp_path / "v.csv", vec)
    np.testing.assert_array_equal(read_feature_vector(tmp_path / "v.csv"), vec)
