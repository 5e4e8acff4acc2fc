import math

import numpy as np
import pytest

from newsatlas.kernels import available_backends, get_backend
from newsatlas.preprocess import TokenizedArticle
from newsatlas.vectorize import (
    SparseVector,
    _sqrt_prob_csr,
    build_vocabulary,
    hellinger,
    hellinger_matrix,
    tfidf,
)


def docs_from(token_lists):
    return [
        TokenizedArticle(article_id=str(i), tokens=toks)
        for i, toks in enumerate(token_lists)
    ]


# -- build_vocabulary -----------------------------------------------------------


def test_rare_term_excluded():
    docs = docs_from([["rare", "common"]] + [["common"]] * 5)
    vocab = build_vocabulary(docs, min_count=5)
    assert "common" in vocab and "rare" not in vocab


def test_identical_documents():
    docs = docs_from([["alpha", "beta", "gamma"]] * 6)
    vocab = build_vocabulary(docs, min_count=5)
    assert sorted(vocab.terms) == ["alpha", "beta", "gamma"]


def test_max_size_keeps_top_document_counts():
    docs = docs_from(
        [["a", "b", "c"]] * 5 + [["a", "b"]] * 3 + [["a"]] * 2
    )  # df: a=10, b=8, c=5
    vocab = build_vocabulary(docs, max_size=2, min_count=5)
    assert vocab.terms == ["a", "b"]


def test_terms_sorted_by_doc_freq_then_term():
    docs = docs_from([["zed", "ant"]] * 5 + [["ant"], ["zed"]])
    vocab = build_vocabulary(docs, min_count=5)
    assert vocab.terms == ["ant", "zed"]  # equal df: alphabetical
    assert vocab.doc_freq == [6, 6]


def test_placeholder_excluded():
    docs = docs_from([["__loc__", "word"]] * 6)
    vocab = build_vocabulary(docs, min_count=5)
    assert vocab.terms == ["word"]


def test_empty_vocabulary_raises():
    docs = docs_from([["one"], ["two"]])
    with pytest.raises(ValueError, match="min_count"):
        build_vocabulary(docs, min_count=5)


def test_vocabulary_deterministic():
    lists = [[f"w{i % 7}", f"w{(i * 3) % 7}"] for i in range(30)]
    a = build_vocabulary(docs_from(lists), min_count=2)
    b = build_vocabulary(docs_from(lists), min_count=2)
    assert a.terms == b.terms and a.doc_freq == b.doc_freq


# -- tfidf -----------------------------------------------------------------------


def test_tfidf_empty_tokens():
    docs = docs_from([["cat"]] * 5)
    vocab = build_vocabulary(docs, min_count=5)
    vec = tfidf([], vocab, 5)
    assert len(vec) == 0


def test_tfidf_single_document_closed_form():
    docs = docs_from([["cat", "cat"]])
    vocab = build_vocabulary(docs, min_count=1)
    vec = tfidf(["cat", "cat"], vocab, 1)
    # weight = 2 * (ln(2/2) + 1) = 2.0
    assert vec.values.tolist() == [2.0]


def test_tfidf_out_of_vocabulary_ignored():
    docs = docs_from([["cat"]] * 5)
    vocab = build_vocabulary(docs, min_count=5)
    vec = tfidf(["dog", "cat"], vocab, 5)
    assert len(vec) == 1


def test_tfidf_token_order_invariant():
    docs = docs_from([["a", "b", "c"]] * 5)
    vocab = build_vocabulary(docs, min_count=5)
    v1 = tfidf(["a", "b", "c", "a"], vocab, 5)
    v2 = tfidf(["a", "a", "c", "b"], vocab, 5)
    assert np.array_equal(v1.indices, v2.indices)
    assert np.array_equal(v1.values, v2.values)


def test_tfidf_weights_positive_finite():
    docs = docs_from([[f"w{i}", "shared"] for i in range(8)])
    vocab = build_vocabulary(docs, min_count=1)
    for doc in docs:
        vec = tfidf(doc.tokens, vocab, len(docs))
        assert np.all(vec.values > 0) and np.all(np.isfinite(vec.values))


def test_sparse_vector_validation():
    with pytest.raises(ValueError):
        SparseVector(np.array([2, 1]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SparseVector(np.array([0]), np.array([-1.0]))


# -- hellinger ---------------------------------------------------------------------


def sv(indices, values):
    return SparseVector(np.array(indices, dtype=np.int64), np.array(values, float))


def test_hellinger_identity():
    v = sv([0, 3], [0.2, 0.8])
    assert hellinger(v, v) == 0.0


def test_hellinger_disjoint_support():
    assert hellinger(sv([0], [1.0]), sv([1], [1.0])) == 1.0


def test_hellinger_derived_value():
    d = hellinger(sv([0, 1], [0.5, 0.5]), sv([0, 1], [0.25, 0.75]))
    # (1/sqrt(2)) * ||sqrt(p) - sqrt(q)||_2 evaluated independently
    expected = math.sqrt(
        ((math.sqrt(0.5) - math.sqrt(0.25)) ** 2 + (math.sqrt(0.5) - math.sqrt(0.75)) ** 2)
        / 2.0
    )
    assert d == pytest.approx(expected, abs=1e-12)
    assert d == pytest.approx(0.18460, abs=1e-4)


def test_hellinger_normalises_inputs():
    # Scaling either vector must not matter.
    a = hellinger(sv([0, 1], [1.0, 3.0]), sv([0, 1], [2.0, 2.0]))
    b = hellinger(sv([0, 1], [10.0, 30.0]), sv([0, 1], [5.0, 5.0]))
    assert a == pytest.approx(b, abs=1e-15)


def test_hellinger_empty_conventions():
    empty = sv([], [])
    assert hellinger(empty, empty) == 0.0
    assert hellinger(empty, sv([0], [1.0])) == 1.0


def test_hellinger_negative_component_rejected():
    bad = SparseVector.__new__(SparseVector)
    bad.indices = np.array([0], dtype=np.int64)
    bad.values = np.array([-0.5])
    with pytest.raises(ValueError, match="non-negative"):
        hellinger(bad, sv([0], [1.0]))


def _random_vectors(rng, count, width=12):
    out = []
    for _ in range(count):
        size = int(rng.integers(1, 6))
        idx = np.sort(rng.choice(width, size=size, replace=False))
        out.append(sv(idx, rng.uniform(0.1, 2.0, size=size)))
    return out


def test_hellinger_symmetry_and_triangle():
    rng = np.random.default_rng(17)
    vecs = _random_vectors(rng, 40)
    for _ in range(1000):
        a, b, c = (vecs[int(i)] for i in rng.integers(0, len(vecs), 3))
        dab, dba = hellinger(a, b), hellinger(b, a)
        assert dab == pytest.approx(dba, abs=1e-15)
        assert hellinger(a, c) <= dab + hellinger(b, c) + 1e-9
        assert 0.0 <= dab <= 1.0


@pytest.mark.parametrize("backend", available_backends())
def test_hellinger_matrix_matches_scalar(backend):
    rng = np.random.default_rng(3)
    vecs = _random_vectors(rng, 15)
    vecs.append(sv([], []))  # one empty row
    indptr, indices, data = _sqrt_prob_csr(vecs, 12)
    dist = get_backend(backend).pairwise_hellinger(indptr, indices, data, 12)
    n = len(vecs)
    for i in range(n):
        for j in range(n):
            assert dist[i, j] == pytest.approx(hellinger(vecs[i], vecs[j]), abs=1e-12)
    assert np.allclose(dist, dist.T)
    assert np.all(np.diag(dist) == 0.0)


def test_hellinger_matrix_default_backend():
    rng = np.random.default_rng(4)
    vecs = _random_vectors(rng, 10)
    dist = hellinger_matrix(vecs, 12)
    assert dist.shape == (10, 10)
    assert np.all(np.isfinite(dist))
