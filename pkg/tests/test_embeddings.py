import math

import numpy as np
import pytest

from common.errors import DataError
from embeddings.clustering import (
    KMeansClusterer,
    cluster_semantic_embedding,
    cluster_semantic_embeddings,
    kmeans,
    load_clusters,
    save_clusters,
)
from embeddings.embedder import SemanticEmbedder, item_semantic_embedding
from embeddings.tfidf import fit_tfidf, tokenize
from embeddings.token_table import TokenEmbeddingTable, load_token_table, save_token_table

CORPUS = ["red fox red", "blue fox", "zebra"]


def test_tokenize_lowercases_and_splits_on_punctuation():
    assert tokenize("Red-Fox, red_fox!") == ["red", "fox", "red", "fox"]


def test_tfidf_matches_smoothed_formula():
    model = fit_tfidf(CORPUS, verbose=False)
    assert model.idf_of("fox") == pytest.approx(math.log(4 / 3) + 1)
    assert model.idf_of("zebra") == pytest.approx(math.log(4 / 2) + 1)
    assert model.tf_of("red", 0) == pytest.approx(2 / 3)
    assert model.tf_of("red", 1) == 0.0
    assert model.tf_of("unseen", 0) == 0.0


def test_tfidf_transform_skips_unknown_tokens():
    model = fit_tfidf(CORPUS, verbose=False)
    weights = model.transform("fox dragon")
    assert set(weights) == {"fox"}
    assert weights["fox"] == pytest.approx(0.5 * model.idf_of("fox"))


def test_tfidf_needs_tokens():
    with pytest.raises(DataError):
        fit_tfidf([], verbose=False)
    with pytest.raises(DataError):
        fit_tfidf(["", "!!"], verbose=False)


def _table():
    return TokenEmbeddingTable.from_dict({
        "red": np.array([1.0, 0.0]),
        "fox": np.array([0.0, 1.0]),
        "blue": np.array([2.0, 2.0]),
    })


def test_item_vector_is_tfidf_weighted_sum():
    model = fit_tfidf(CORPUS, verbose=False)
    vec = item_semantic_embedding("red fox red", model, _table())
    expected = (2 / 3) * model.idf_of("red") * np.array([1.0, 0.0]) + (1 / 3) * model.idf_of("fox") * np.array([0.0, 1.0])
    np.testing.assert_allclose(vec, expected)


def test_corpus_embedding_agrees_with_single_documents_and_flags_oov():
    model = fit_tfidf(CORPUS, verbose=False)
    embedder = SemanticEmbedder(_table(), verbose=False)
    vectors = embedder.embed_corpus(CORPUS, model)

    for i, doc in enumerate(CORPUS):
        np.testing.assert_allclose(vectors[i], item_semantic_embedding(doc, model, _table()))
    np.testing.assert_array_equal(vectors[2], np.zeros(2))
    assert embedder.oov_items.tolist() == [False, False, True]
    assert embedder.oov_tokens == 1


def test_token_table_file(tmp_path):
    path = str(tmp_path / "tokens.txt")
    save_token_table(_table(), path)
    loaded = load_token_table(path)
    assert loaded.dim == 2
    np.testing.assert_array_equal(loaded.vector("blue"), [2.0, 2.0])
    assert "zebra" not in loaded


@pytest.mark.parametrize(
    "body, message",
    [
        ("x\n", "header"),
        ("2\nred\t1 2 3\n", "expected 2"),
        ("2\nred\t1 nan\n", "non-finite"),
        ("2\nred\t1 2\nred\t3 4\n", "duplicate"),
    ],
)
def test_token_table_validation(tmp_path, body, message):
    path = tmp_path / "tokens.txt"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(DataError, match=message):
        load_token_table(str(path))


# ------------------------------------------------------------
# k-means
# ------------------------------------------------------------
def _blobs(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.1, size=(20, 3))
    b = rng.normal(5.0, 0.1, size=(20, 3))
    return np.vstack([a, b])


def test_kmeans_separates_blobs():
    model = kmeans(_blobs(), k=2, seed=1)
    assert model.converged
    assert len(set(model.assignment[:20])) == 1
    assert len(set(model.assignment[20:])) == 1
    assert model.assignment[0] != model.assignment[20]
    assert np.all(np.diff(model.inertia_trace) <= 1e-9)


def test_kmeans_is_deterministic_for_a_seed():
    first = kmeans(_blobs(), k=4, seed=7)
    second = kmeans(_blobs(), k=4, seed=7)
    np.testing.assert_array_equal(first.assignment, second.assignment)
    np.testing.assert_array_equal(first.centroids, second.centroids)


def test_kmeans_leaves_no_empty_cluster():
    X = np.vstack([np.zeros((10, 2)), np.ones((2, 2))])
    model = KMeansClusterer(verbose=False).fit(X, k=3, seed=0)
    assert np.all(model.sizes() > 0)


def test_kmeans_rejects_bad_k():
    with pytest.raises(DataError):
        kmeans(np.zeros((3, 2)), k=4)
    with pytest.raises(DataError):
        kmeans(np.zeros((3, 2)), k=1)


def test_cluster_vector_is_member_mean(tmp_path):
    X = _blobs()
    model = kmeans(X, k=2, seed=1)
    c = int(model.assignment[0])
    np.testing.assert_allclose(cluster_semantic_embedding(c, model, X), X[model.assignment == c].mean(axis=0))

    cvec = cluster_semantic_embeddings(model, X)
    path = str(tmp_path / "clusters.bin")
    save_clusters(path, model, X, cvec, np.zeros(len(X), dtype=bool), seed=1)
    loaded, item_vectors, cluster_vectors, oov = load_clusters(path)
    np.testing.assert_array_equal(loaded.assignment, model.assignment)
    np.testing.assert_array_equal(cluster_vectors, cvec)
    assert loaded.k == 2 and not oov.any()


@pytest.mark.parametrize("seed", range(100))
def test_inertia_never_increases(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(int(rng.integers(10, 40)), 3))
    model = kmeans(X, k=int(rng.integers(2, 6)), seed=seed)
    trace = np.array(model.inertia_trace)
    assert np.all(trace[1:] <= trace[:-1] * (1 + 1e-12))
