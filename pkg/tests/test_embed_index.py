import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvli.embed_index import (
    EncoderSpace,
    HashingEmbedder,
    Ranking,
    VectorIndex,
    VectorLoadError,
    build_space,
    decode_vector,
    encode_vector,
    read_vector_file,
    write_vector_file,
)


def f32(values):
    # vectors live on disk as float32, so test fixtures stay representable
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def make_index(vectors, metric="cosine-distance", ids=None):
    dim = len(vectors[0])
    space = EncoderSpace("m", dim, metric)
    ids = ids or [f"v{i}" for i in range(len(vectors))]
    return VectorIndex(space, [(i, f32(v)) for i, v in zip(ids, vectors)])


class TestVectorFile:
    def test_round_trip_exact(self, tmp_path):
        space = EncoderSpace("enc-a", 3, "cosine-distance")
        items = [("a", f32([0.25, -1.5, 3.0])), ("b", f32([0.1, 0.2, 0.3]))]
        path = tmp_path / "vecs.tsv"
        write_vector_file(path, space, items)
        space2, items2 = read_vector_file(path)
        assert space2 == space
        assert [i for i, _ in items2] == ["a", "b"]
        for (_, v1), (_, v2) in zip(items, items2):
            assert np.array_equal(v1, v2)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "vecs.tsv"
        write_vector_file(path, EncoderSpace("enc-a", 2, "negative-dot"),
                          [("x", f32([1, 2]))])
        first = path.read_text().splitlines()[0]
        assert first == "enc-a\t2\tnegative-dot"

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("enc-a\t3\n")
        with pytest.raises(VectorLoadError, match="header"):
            read_vector_file(path)

    def test_unknown_metric_in_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("enc-a\t3\teuclidean\n")
        with pytest.raises(VectorLoadError, match="euclidean"):
            read_vector_file(path)

    def test_nan_component_names_record(self):
        b64 = encode_vector(np.array([1.0, np.nan]))
        with pytest.raises(VectorLoadError, match="vec-7"):
            decode_vector(b64, 2, "vec-7")

    def test_wrong_length_names_record(self):
        b64 = encode_vector(np.array([1.0, 2.0]))
        with pytest.raises(VectorLoadError, match="vec-9"):
            decode_vector(b64, 3, "vec-9")

    def test_bad_base64_names_record(self):
        with pytest.raises(VectorLoadError, match="vec-3"):
            decode_vector("!!notbase64!!", 2, "vec-3")

    def test_row_without_tab(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("enc-a\t2\tcosine-distance\nnotab\n")
        with pytest.raises(VectorLoadError, match="bad.tsv:2"):
            read_vector_file(path)


class TestIndex:
    def test_self_match_comes_first(self):
        rng = np.random.default_rng(0)
        vecs = rng.normal(size=(20, 8))
        index = make_index(vecs)
        got = index.query(f32(vecs[7]), k=3, query_id="q")
        assert got.entries[0][0] == "v7"
        assert got.entries[0][1] == pytest.approx(0.0, abs=1e-9)

    def test_orthogonal_pair_distances(self):
        index = make_index([[1.0, 0.0], [0.0, 1.0]], ids=["a", "b"])
        got = index.query(np.array([1.0, 0.0]), k=2)
        assert got.entries == (("a", 0.0), ("b", 1.0))

    def test_k_exceeding_size_returns_all(self):
        index = make_index([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert len(index.query(np.array([1.0, 0.0]), k=50).entries) == 3

    def test_ties_break_by_ascending_id(self):
        index = make_index([[1.0, 0.0]] * 4, ids=["d", "b", "c", "a"])
        got = index.query(np.array([1.0, 0.0]), k=4)
        assert got.ids == ["a", "b", "c", "d"]

    def test_negative_dot_metric(self):
        index = make_index([[2.0, 0.0], [1.0, 0.0]], metric="negative-dot",
                           ids=["big", "small"])
        got = index.query(np.array([1.0, 0.0]), k=2)
        assert got.entries == (("big", -2.0), ("small", -1.0))

    def test_cosine_scaling_invariance(self):
        rng = np.random.default_rng(3)
        vecs = rng.normal(size=(12, 5))
        q = f32(rng.normal(size=5))
        base = make_index(vecs).query(q, k=12)
        scaled_db = make_index([f32(v) * 4.0 for v in vecs]).query(q, k=12)
        scaled_q = make_index(vecs).query(q * 7.0, k=12)
        assert scaled_db.ids == base.ids
        assert scaled_q.ids == base.ids
        for (_, d1), (_, d2) in zip(base.entries, scaled_q.entries):
            assert d1 == pytest.approx(d2, abs=1e-12)

    def test_empty_index(self):
        index = VectorIndex(EncoderSpace("m", 4, "cosine-distance"), [])
        assert index.query(np.zeros(4), k=5).entries == ()

    def test_query_validation(self):
        index = make_index([[1.0, 0.0]])
        with pytest.raises(ValueError):
            index.query(np.array([1.0, 0.0]), k=0)
        with pytest.raises(ValueError):
            index.query(np.array([1.0, 0.0, 0.0]))
        with pytest.raises(ValueError):
            index.query(np.array([np.inf, 0.0]))

    def test_duplicate_id_rejected(self):
        with pytest.raises(VectorLoadError, match="dup"):
            make_index([[1.0, 0.0], [0.0, 1.0]], ids=["dup", "dup"])

    def test_dimension_mismatch_rejected(self):
        space = EncoderSpace("m", 3, "cosine-distance")
        with pytest.raises(VectorLoadError, match="v0"):
            VectorIndex(space, [("v0", f32([1.0, 0.0]))])

    def test_matrix_is_read_only(self):
        index = make_index([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError):
            index.matrix[0, 0] = 5.0

    def test_queries_do_not_interfere(self):
        rng = np.random.default_rng(9)
        index = make_index(rng.normal(size=(15, 6)))
        q1, q2 = f32(rng.normal(size=6)), f32(rng.normal(size=6))
        first = index.query(q1, k=5).entries
        index.query(q2, k=15)
        assert index.query(q1, k=5).entries == first


def brute_force(index, q, k):
    if index.space.metric == "cosine-distance":
        qn = np.linalg.norm(q)
        dists = 1.0 - index.matrix @ (q / qn if qn else q)
    else:
        dists = -(index.matrix @ q)
    ranked = sorted(zip(dists, index.ids))
    return [(cid, float(d)) for d, cid in ranked[:k]]


class TestBruteForceEquivalence:
    @pytest.mark.parametrize("metric", ["cosine-distance", "negative-dot"])
    @pytest.mark.parametrize("n", [1, 2, 3, 7, 31, 200])
    def test_matches_full_sort(self, metric, n):
        rng = np.random.default_rng(n)
        index = make_index(rng.normal(size=(n, 6)), metric=metric)
        for k in {1, 2, n, n + 5}:
            q = f32(rng.normal(size=6))
            got = index.query(q, k=k)
            assert list(got.entries) == brute_force(index, q, k)

    @given(st.integers(1, 20), st.integers(1, 25), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_full_sort_random(self, n, k, seed):
        rng = np.random.default_rng(seed)
        # coarse values make distance ties common
        vecs = rng.integers(-2, 3, size=(n, 4)).astype(np.float64)
        vecs[np.all(vecs == 0, axis=1)] = 1.0
        index = make_index(vecs, metric="negative-dot")
        q = f32(rng.integers(-2, 3, size=4))
        assert list(index.query(q, k=k).entries) == brute_force(index, q, k)


class TestRanking:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            Ranking("q", "m", (("a", 0.1), ("a", 0.2)))

    def test_disorder_rejected(self):
        with pytest.raises(ValueError, match="not ordered"):
            Ranking("q", "m", (("a", 0.2), ("b", 0.1)))
        with pytest.raises(ValueError, match="not ordered"):
            Ranking("q", "m", (("b", 0.1), ("a", 0.1)))

    def test_record_round_trip(self):
        r = Ranking("q", "m", (("a", 0.1), ("b", 0.25)))
        assert Ranking.from_record(r.to_record()) == r

    def test_distance_lookup(self):
        r = Ranking("q", "m", (("a", 0.1), ("b", 0.25)))
        assert r.distance_of("b") == 0.25
        assert r.distance_of("zzz") is None


class TestHashingEmbedder:
    def test_deterministic(self):
        e = HashingEmbedder(dim=64)
        assert np.array_equal(e.embed("a dog runs"), e.embed("a dog runs"))

    def test_unit_norm(self):
        e = HashingEmbedder(dim=64)
        assert np.linalg.norm(e.embed("the cat naps")) == pytest.approx(1.0, abs=1e-6)

    def test_whitespace_and_case_insensitive(self):
        e = HashingEmbedder(dim=64)
        assert np.array_equal(e.embed("A  Dog\truns"), e.embed("a dog runs"))

    def test_model_id_round_trip(self):
        e = HashingEmbedder(dim=128, ngram=4)
        assert e.space.model_id == "hash4g-128"
        e2 = HashingEmbedder.from_model_id("hash4g-128")
        assert (e2.dim, e2.ngram) == (128, 4)
        with pytest.raises(ValueError):
            HashingEmbedder.from_model_id("bert-base")

    def test_file_round_trip_is_exact(self, tmp_path):
        e = HashingEmbedder(dim=32)
        path = tmp_path / "vecs.tsv"
        e.write_vector_file(path, [("c1", "a dog runs"), ("c2", "rain falls")])
        index = build_space(path)
        live = e.embed("a dog runs")
        got = index.query(live, k=1)
        assert got.entries[0] == ("c1", pytest.approx(0.0, abs=1e-12))

    def test_distinct_texts_differ(self):
        e = HashingEmbedder(dim=256)
        assert not np.array_equal(e.embed("a dog runs"), e.embed("rain falls hard"))
