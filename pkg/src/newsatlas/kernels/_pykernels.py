"""NumPy/SciPy kernel implementations (fallback backend).

Same contracts as the Cython backend in ``_ckernels.pyx``.  The SGD kernel
applies each epoch's gradient updates in one vectorised batch rather than
edge-by-edge, so its trajectories differ numerically from the sequential
compiled kernel while optimising the same objective.
"""

import numpy as np
from scipy import sparse


def pairwise_hellinger(indptr, indices, data, n_cols):
    """Dense Hellinger distance matrix from CSR rows of sqrt-probabilities.

    Rows must hold the elementwise square root of L1-normalised vectors,
    so the Bhattacharyya coefficient is a plain dot product.  Empty rows
    are at distance 1 from non-empty rows and 0 from each other.
    """
    n = len(indptr) - 1
    rows = sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), indices, indptr), shape=(n, n_cols)
    )
    bc = np.asarray((rows @ rows.T).todense(), dtype=np.float64)
    dist = np.sqrt(np.clip(1.0 - bc, 0.0, 1.0))
    empty = np.diff(indptr) == 0
    if empty.any():
        dist[empty, :] = 1.0
        dist[:, empty] = 1.0
        dist[np.ix_(empty, empty)] = 0.0
    np.fill_diagonal(dist, 0.0)
    return dist


def prim_mst(dist):
    """Minimum spanning tree of a dense symmetric distance matrix.

    Prim's algorithm from vertex 0.  Returns an ``(n-1, 3)`` array of
    ``(a, b, weight)`` rows in the order edges were added, ``a`` being the
    endpoint already in the tree.  Ties resolve to the lowest vertex index.
    """
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    edges = np.empty((max(n - 1, 0), 3), dtype=np.float64)
    if n <= 1:
        return edges
    in_tree = np.zeros(n, dtype=bool)
    best_w = np.full(n, np.inf)
    best_src = np.zeros(n, dtype=np.int64)
    in_tree[0] = True
    current = 0
    for step in range(n - 1):
        row = dist[current]
        better = ~in_tree & (row < best_w)
        best_w[better] = row[better]
        best_src[better] = current
        candidate = np.where(in_tree, np.inf, best_w)
        nxt = int(np.argmin(candidate))
        edges[step, 0] = best_src[nxt]
        edges[step, 1] = nxt
        edges[step, 2] = best_w[nxt]
        in_tree[nxt] = True
        current = nxt
    return edges


def optimize_embedding(
    embedding,
    head,
    tail,
    epochs_per_sample,
    n_epochs,
    n_vertices,
    a,
    b,
    gamma,
    initial_alpha,
    negative_sample_rate,
    seed,
):
    """Negative-sampling SGD over the fuzzy graph, batched per epoch.

    ``embedding`` (n, d) float64 is modified in place.  Each directed edge
    ``head[i] -> tail[i]`` is sampled every ``epochs_per_sample[i]`` epochs;
    attractive moves update both endpoints, repulsive moves (against
    uniformly drawn vertices) update only the head.  Deterministic for a
    fixed seed.
    """
    rng = np.random.default_rng(seed)
    head = np.asarray(head, dtype=np.int64)
    tail = np.asarray(tail, dtype=np.int64)
    eps = np.asarray(epochs_per_sample, dtype=np.float64)
    ep_neg = eps / negative_sample_rate
    next_sample = eps.copy()
    next_neg = ep_neg.copy()
    alpha = initial_alpha
    n_dim = embedding.shape[1]

    def scatter_add(targets, grad):
        # bincount per dimension beats np.add.at by a wide margin
        for dim in range(n_dim):
            embedding[:, dim] += np.bincount(
                targets, weights=grad[:, dim], minlength=n_vertices
            )

    for n in range(n_epochs):
        due = next_sample <= n
        if due.any():
            h = head[due]
            t = tail[due]
            diff = embedding[h] - embedding[t]
            dsq = np.einsum("ij,ij->i", diff, diff)
            coeff = np.zeros_like(dsq)
            pos = dsq > 0.0
            dpos = dsq[pos]
            coeff[pos] = (-2.0 * a * b * dpos ** (b - 1.0)) / (
                a * dpos**b + 1.0
            )
            grad = np.clip(coeff[:, None] * diff, -4.0, 4.0) * alpha
            scatter_add(h, grad)
            scatter_add(t, -grad)
            next_sample[due] += eps[due]

            n_neg = ((n - next_neg[due]) / ep_neg[due]).astype(np.int64)
            total = int(n_neg.sum())
            if total > 0:
                rep = np.repeat(np.arange(len(h)), n_neg)
                hh = h[rep]
                targets = rng.integers(0, n_vertices, size=total)
                keep = targets != hh
                hh = hh[keep]
                targets = targets[keep]
                diff = embedding[hh] - embedding[targets]
                dsq = np.einsum("ij,ij->i", diff, diff)
                coeff = np.zeros_like(dsq)
                pos = dsq > 0.0
                dpos = dsq[pos]
                coeff[pos] = (2.0 * gamma * b) / (
                    (0.001 + dpos) * (a * dpos**b + 1.0)
                )
                grad = np.where(
                    coeff[:, None] > 0.0,
                    np.clip(coeff[:, None] * diff, -4.0, 4.0),
                    4.0,
                )
                scatter_add(hh, grad * alpha)
            next_neg[due] += n_neg * ep_neg[due]
        alpha = initial_alpha * (1.0 - float(n) / float(n_epochs))
    return embedding
