import numpy as np
import pytest

from newsatlas.corpus import Article
from newsatlas.preprocess import TokenizedArticle
from newsatlas.synthgen import SynthSpec, build
from newsatlas.vectorize import build_vocabulary, tfidf


def make_article(aid, body, title="Title here", keywords=(), date="2019-06-01"):
    from datetime import date as date_cls

    return Article(
        id=aid,
        title=title,
        body=body,
        published=date_cls.fromisoformat(date),
        keywords=list(keywords),
    )


@pytest.fixture(scope="session")
def tiny_synth():
    """Small planted corpus shared by unit tests (120 articles, 4 topics)."""
    spec = SynthSpec(
        seed=11,
        n_articles=120,
        n_topics=4,
        core_vocab_size=25,
        filler_vocab_size=60,
        zone_grid=(3, 3),
        places_per_zone=2,
        n_annotation_pairs=150,
    )
    return build(spec)


def doc_blobs(n_per_blob=50, n_blobs=2, seed=0, core_mass=0.75, n_tokens=80):
    """Synthetic tf-idf documents in ``n_blobs`` disjoint-vocabulary blobs."""
    rng = np.random.default_rng(seed)
    cores = [[f"blob{b}_w{i}" for i in range(30)] for b in range(n_blobs)]
    shared = [f"shared{i}" for i in range(20)]
    docs, truth = [], []
    for b in range(n_blobs):
        for i in range(n_per_blob):
            tokens = [
                cores[b][rng.integers(30)]
                if rng.random() < core_mass
                else shared[rng.integers(20)]
                for _ in range(n_tokens)
            ]
            docs.append(
                TokenizedArticle(article_id=f"doc-{b}-{i}", tokens=tokens)
            )
            truth.append(b)
    vocab = build_vocabulary(docs, max_size=5000, min_count=2)
    vectors = [tfidf(d.tokens, vocab, len(docs)) for d in docs]
    ids = [d.article_id for d in docs]
    return ids, vectors, vocab, np.array(truth)


@pytest.fixture(scope="session")
def two_blob_docs():
    return doc_blobs(n_per_blob=50, seed=3)


def gaussian_blobs(n_per_blob, centers, scale=1.0, dim=None, seed=0):
    """Well-separated Gaussian point clouds with ground-truth labels."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    if dim is None:
        dim = centers.shape[1]
    points = []
    labels = []
    for b, center in enumerate(centers):
        points.append(rng.normal(loc=center, scale=scale, size=(n_per_blob, dim)))
        labels.extend([b] * n_per_blob)
    return np.vstack(points), np.array(labels)


def adjusted_rand_index(a, b) -> float:
    """Plain contingency-table ARI; test-side oracle helper."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    labels_a = {v: i for i, v in enumerate(sorted(set(a.tolist())))}
    labels_b = {v: i for i, v in enumerate(sorted(set(b.tolist())))}
    table = np.zeros((len(labels_a), len(labels_b)), dtype=np.int64)
    for x, y in zip(a, b):
        table[labels_a[x], labels_b[y]] += 1

    def comb2(v):
        return v * (v - 1) / 2.0

    sum_ij = sum(comb2(v) for v in table.ravel())
    sum_a = sum(comb2(v) for v in table.sum(axis=1))
    sum_b = sum(comb2(v) for v in table.sum(axis=0))
    expected = sum_a * sum_b / comb2(n)
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))
