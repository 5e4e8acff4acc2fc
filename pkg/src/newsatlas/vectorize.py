"""tf-idf article representations and the Hellinger metric.

The vocabulary keeps terms by document frequency (rare terms truncated,
ties broken alphabetically).  Weights use the smoothed-idf variant
``tf * (ln((1 + N) / (1 + df)) + 1)``.  Distances between articles treat
the L1-normalised weight vectors as distributions and apply Hellinger,
``sqrt(1 - sum(sqrt(p * q)))``, which is bounded in [0, 1].
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .kernels import pairwise_hellinger
from .preprocess import PLACEHOLDER

__all__ = [
    "Vocabulary",
    "SparseVector",
    "build_vocabulary",
    "tfidf",
    "hellinger",
    "hellinger_matrix",
]

_PLACEHOLDER_LOWER = PLACEHOLDER.lower()


@dataclass
class Vocabulary:
    """Terms ordered by (-document frequency, term); index is derived."""

    terms: list[str]
    doc_freq: list[int]

    def __post_init__(self):
        self.index = {term: i for i, term in enumerate(self.terms)}

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.index


@dataclass
class SparseVector:
    indices: np.ndarray  # strictly increasing int64 term ids
    values: np.ndarray  # positive float64 weights

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.indices) != len(self.values):
            raise ValueError("indices/values length mismatch")
        if len(self.indices) > 1 and not np.all(np.diff(self.indices) > 0):
            raise ValueError("indices must be strictly increasing")
        if len(self.values) and (
            not np.all(np.isfinite(self.values)) or np.any(self.values <= 0)
        ):
            raise ValueError("values must be finite and positive")

    def __len__(self):
        return len(self.indices)


def build_vocabulary(tokenized_corpus, max_size: int = 20000, min_count: int = 5) -> Vocabulary:
    """Vocabulary over the corpus, by document counts.

    Terms appearing in fewer than ``min_count`` documents are dropped; if
    more than ``max_size`` remain, the highest-document-count terms win
    (alphabetical on ties).  The mask placeholder never enters.
    """
    doc_counts: Counter = Counter()
    for doc in tokenized_corpus:
        tokens = doc.tokens if hasattr(doc, "tokens") else doc
        doc_counts.update(set(tokens) - {_PLACEHOLDER_LOWER})
    survivors = [(term, count) for term, count in doc_counts.items() if count >= min_count]
    if not survivors:
        raise ValueError(
            f"no terms reach min_count={min_count}; vocabulary would be empty"
        )
    survivors.sort(key=lambda tc: (-tc[1], tc[0]))
    survivors = survivors[:max_size]
    return Vocabulary(
        terms=[term for term, _ in survivors],
        doc_freq=[count for _, count in survivors],
    )


def tfidf(tokens, vocabulary: Vocabulary, corpus_size: int) -> SparseVector:
    """Smoothed tf-idf vector; out-of-vocabulary tokens contribute nothing."""
    counts: Counter = Counter()
    for token in tokens:
        idx = vocabulary.index.get(token)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return SparseVector(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array(
        [
            counts[i]
            * (math.log((1.0 + corpus_size) / (1.0 + vocabulary.doc_freq[i])) + 1.0)
            for i in indices
        ],
        dtype=np.float64,
    )
    return SparseVector(indices, values)


def hellinger(u: SparseVector, v: SparseVector) -> float:
    """Hellinger distance between two non-negative sparse vectors.

    Both are L1-normalised first.  Two empty vectors are at distance 0,
    an empty and a non-empty vector at distance 1.
    """
    for vec in (u, v):
        if len(vec.values) and np.any(vec.values < 0):
            raise ValueError("hellinger requires non-negative components")
    su = float(u.values.sum()) if len(u) else 0.0
    sv = float(v.values.sum()) if len(v) else 0.0
    if su == 0.0 and sv == 0.0:
        return 0.0
    if su == 0.0 or sv == 0.0:
        return 1.0
    if np.array_equal(u.indices, v.indices) and np.array_equal(
        u.values / su, v.values / sv
    ):
        return 0.0
    bc = 0.0
    i = j = 0
    while i < len(u) and j < len(v):
        if u.indices[i] == v.indices[j]:
            bc += math.sqrt((u.values[i] / su) * (v.values[j] / sv))
            i += 1
            j += 1
        elif u.indices[i] < v.indices[j]:
            i += 1
        else:
            j += 1
    return math.sqrt(min(max(1.0 - bc, 0.0), 1.0))


def _sqrt_prob_csr(vectors, n_terms: int):
    """CSR arrays holding sqrt of each vector's L1-normalised weights."""
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    chunks_idx = []
    chunks_val = []
    total = 0
    for row, vec in enumerate(vectors):
        norm = float(vec.values.sum()) if len(vec) else 0.0
        if norm > 0.0:
            chunks_idx.append(vec.indices)
            chunks_val.append(np.sqrt(vec.values / norm))
            total += len(vec)
        indptr[row + 1] = total
    if chunks_idx:
        indices = np.concatenate(chunks_idx)
        data = np.concatenate(chunks_val)
    else:
        indices = np.empty(0, dtype=np.int64)
        data = np.empty(0, dtype=np.float64)
    return indptr, indices, data


def hellinger_matrix(vectors, n_terms: int) -> np.ndarray:
    """Dense pairwise Hellinger distances over a list of SparseVectors."""
    indptr, indices, data = _sqrt_prob_csr(vectors, n_terms)
    return pairwise_hellinger(indptr, indices, data, n_terms)
