"""Dimensionality reduction of tf-idf vectors (UMAP, exact neighbours).

The reference graph construction is followed: exact k-nearest neighbours
under the Hellinger metric, a per-point bandwidth solved by binary search
so the smoothed neighbourhood cardinality hits log2(k), fuzzy-union
symmetrisation ``a + b - ab``, and a negative-sampling SGD layout with the
standard low-dimensional curve fitted for (min_dist, spread).  Exact
neighbour search keeps the whole path deterministic and testable at corpus
sizes in the tens of thousands.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import curve_fit

from . import kernels
from .vectorize import hellinger_matrix

__all__ = [
    "Embedding",
    "umap_reduce",
    "find_curve_params",
    "save_embedding",
    "load_embedding",
]

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3


@dataclass
class Embedding:
    article_ids: list[str]
    coordinates: np.ndarray  # (N, d) float64

    def __post_init__(self):
        self.coordinates = np.asarray(self.coordinates, dtype=np.float64)
        if self.coordinates.ndim != 2:
            raise ValueError("coordinates must be 2-dimensional")
        if len(self.article_ids) != self.coordinates.shape[0]:
            raise ValueError("article_ids/coordinates length mismatch")


def find_curve_params(spread: float = 1.0, min_dist: float = 0.1) -> tuple[float, float]:
    """Fit (a, b) of 1/(1 + a*x^(2b)) to the offset exponential target curve."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0.0, spread * 3.0, 300)
    yv = np.zeros(xv.shape)
    yv[xv < min_dist] = 1.0
    yv[xv >= min_dist] = np.exp(-(xv[xv >= min_dist] - min_dist) / spread)
    params, _ = curve_fit(curve, xv, yv)
    return float(params[0]), float(params[1])


def _exact_knn(dist: np.ndarray, k: int):
    """Indices/distances of the k nearest other points per row (stable ties)."""
    n = dist.shape[0]
    masked = dist.copy()
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")[:, :k]
    knn_dists = np.take_along_axis(masked, order, axis=1)
    return order.astype(np.int64), knn_dists


def smooth_knn_calibration(knn_dists: np.ndarray, k: int, n_iter: int = 64):
    """Per-point (sigma, rho) with sum(exp(-max(0, d - rho)/sigma)) = log2(k)."""
    n = knn_dists.shape[0]
    target = np.log2(k)
    rho = np.zeros(n)
    sigma = np.zeros(n)
    mean_all = float(np.mean(knn_dists)) if knn_dists.size else 0.0
    for i in range(n):
        row = knn_dists[i]
        nonzero = row[row > 0.0]
        rho[i] = nonzero[0] if nonzero.size else 0.0
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(n_iter):
            psum = 0.0
            for d in row:
                gap = d - rho[i]
                psum += np.exp(-(gap / mid)) if gap > 0 else 1.0
            if abs(psum - target) < SMOOTH_K_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = mid
        if rho[i] > 0.0:
            floor = MIN_K_DIST_SCALE * float(np.mean(row))
        else:
            floor = MIN_K_DIST_SCALE * mean_all
        if sigma[i] < floor:
            sigma[i] = floor
    return sigma, rho


def fuzzy_graph(dist: np.ndarray, n_neighbors: int) -> sparse.coo_matrix:
    """Symmetrised fuzzy neighbourhood graph from a distance matrix."""
    n = dist.shape[0]
    knn_idx, knn_dists = _exact_knn(dist, n_neighbors)
    sigma, rho = smooth_knn_calibration(knn_dists, n_neighbors)
    rows = np.repeat(np.arange(n), n_neighbors)
    cols = knn_idx.ravel()
    gaps = knn_dists - rho[:, None]
    vals = np.where(
        (gaps <= 0.0) | (sigma[:, None] == 0.0),
        1.0,
        np.exp(-gaps / sigma[:, None]),
    ).ravel()
    w = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    transpose = w.T.tocsr()
    graph = w + transpose - w.multiply(transpose)
    return graph.tocoo()


def umap_reduce(
    vectors,
    d: int = 10,
    n_neighbors: int = 5,
    epochs: int = 1000,
    seed: int | None = None,
    *,
    article_ids=None,
    n_terms: int | None = None,
    min_dist: float = 0.1,
    spread: float = 1.0,
    negative_sample_rate: float = 5.0,
    initial_alpha: float = 1.0,
    gamma: float = 1.0,
    distances: np.ndarray | None = None,
) -> Embedding:
    """Embed sparse tf-idf vectors into ``d`` dimensions.

    ``seed`` is required; the random layout initialisation and the SGD's
    negative sampling both derive from it, so a fixed seed reproduces the
    embedding exactly (per kernel backend).  A precomputed Hellinger
    ``distances`` matrix may be supplied to skip that step.
    """
    if seed is None:
        raise ValueError("umap_reduce requires a seed")
    n = len(vectors) if distances is None else distances.shape[0]
    if n < n_neighbors + 1:
        raise ValueError(f"need at least n_neighbors+1={n_neighbors + 1} points, got {n}")
    if distances is None:
        if n_terms is None:
            n_terms = int(max((int(v.indices[-1]) for v in vectors if len(v)), default=-1)) + 1
        distances = hellinger_matrix(vectors, n_terms)
    if not np.all(np.isfinite(distances)):
        raise ValueError("non-finite distances")
    if article_ids is None:
        article_ids = [str(i) for i in range(n)]

    graph = fuzzy_graph(distances, n_neighbors)

    # Edges too weak to be sampled even once in `epochs` are dropped,
    # mirroring the reference implementation.
    data = graph.data.copy()
    if epochs > 10:
        data[data < data.max() / float(epochs)] = 0.0
    keep = data > 0.0
    head = graph.row[keep].astype(np.int64)
    tail = graph.col[keep].astype(np.int64)
    weights = data[keep]
    epochs_per_sample = weights.max() / weights

    a, b = find_curve_params(spread, min_dist)
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-10.0, 10.0, size=(n, d)).astype(np.float64)
    coords = np.ascontiguousarray(coords)
    sgd_seed = (int(seed) * 2654435761 + 1) % (2**63)
    kernels.optimize_embedding(
        coords,
        head,
        tail,
        epochs_per_sample,
        epochs,
        n,
        a,
        b,
        gamma,
        initial_alpha,
        negative_sample_rate,
        sgd_seed,
    )
    if not np.all(np.isfinite(coords)):
        raise RuntimeError("embedding diverged to non-finite coordinates")
    return Embedding(article_ids=list(article_ids), coordinates=coords)


def save_embedding(embedding: Embedding, csv_path, bin_path=None, *, seed=None, params=None):
    """Write article_id,x0..xK CSV plus an optional binary sidecar.

    The sidecar is raw row-major float64 with a JSON header alongside it
    describing shape, seed and parameters.
    """
    n, d = embedding.coordinates.shape
    with open(csv_path, "w", encoding="utf-8") as handle:
        handle.write("article_id," + ",".join(f"x{i}" for i in range(d)) + "\n")
        for aid, row in zip(embedding.article_ids, embedding.coordinates):
            handle.write(aid + "," + ",".join(repr(float(x)) for x in row) + "\n")
    if bin_path is not None:
        embedding.coordinates.astype("<f8").tofile(bin_path)
        header = {
            "shape": [n, d],
            "dtype": "<f8",
            "order": "C",
            "seed": seed,
            "params": params or {},
            "article_ids": embedding.article_ids,
        }
        with open(str(bin_path) + ".json", "w", encoding="utf-8") as handle:
            json.dump(header, handle, indent=2)
            handle.write("\n")


def load_embedding(csv_path) -> Embedding:
    ids = []
    rows = []
    with open(csv_path, encoding="utf-8") as handle:
        next(handle)  # header
        for line in handle:
            parts = line.rstrip("\n").split(",")
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    return Embedding(article_ids=ids, coordinates=np.array(rows, dtype=np.float64))
