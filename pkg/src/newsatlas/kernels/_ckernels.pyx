# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel implementations (fast backend).

Sequential scalar loops; contracts documented in ``_pykernels``.  The SGD
kernel follows the classic per-edge update order, drawing negative samples
from an embedded xorshift64* generator so runs are reproducible per seed.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()

ctypedef unsigned long long uint64


cdef inline uint64 _mix_seed(uint64 seed) noexcept nogil:
    cdef uint64 z = seed + <uint64>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <uint64>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64>0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    if z == 0:
        z = <uint64>0x9E3779B97F4A7C15ULL
    return z


cdef inline uint64 _next_rand(uint64* state) noexcept nogil:
    cdef uint64 x = state[0]
    x ^= x >> 12
    x ^= x << 25
    x ^= x >> 27
    state[0] = x
    return x * <uint64>2685821657736338717ULL


cdef inline double _clip4(double v) noexcept nogil:
    if v > 4.0:
        return 4.0
    if v < -4.0:
        return -4.0
    return v


def pairwise_hellinger(indptr, indices, data, n_cols):
    cdef cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef double[::1] vals = np.ascontiguousarray(data, dtype=np.float64)
    cdef Py_ssize_t n = ip.shape[0] - 1
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, pa, pb, ea, eb
    cdef double bc, d
    cdef bint empty_i, empty_j
    with nogil:
        for i in range(n):
            empty_i = ip[i] == ip[i + 1]
            for j in range(i + 1, n):
                empty_j = ip[j] == ip[j + 1]
                if empty_i and empty_j:
                    d = 0.0
                elif empty_i or empty_j:
                    d = 1.0
                else:
                    bc = 0.0
                    pa = ip[i]
                    ea = ip[i + 1]
                    pb = ip[j]
                    eb = ip[j + 1]
                    while pa < ea and pb < eb:
                        if ix[pa] == ix[pb]:
                            bc += vals[pa] * vals[pb]
                            pa += 1
                            pb += 1
                        elif ix[pa] < ix[pb]:
                            pa += 1
                        else:
                            pb += 1
                    d = 1.0 - bc
                    if d < 0.0:
                        d = 0.0
                    elif d > 1.0:
                        d = 1.0
                    d = sqrt(d)
                out[i, j] = d
                out[j, i] = d
    return out_arr


def prim_mst(dist):
    dist_arr = np.ascontiguousarray(dist, dtype=np.float64)
    cdef double[:, ::1] dm = dist_arr
    cdef Py_ssize_t n = dm.shape[0]
    edges_arr = np.empty((max(n - 1, 0), 3), dtype=np.float64)
    if n <= 1:
        return edges_arr
    cdef double[:, ::1] edges = edges_arr
    in_tree_arr = np.zeros(n, dtype=np.uint8)
    best_w_arr = np.full(n, np.inf, dtype=np.float64)
    best_src_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.uint8_t[::1] in_tree = in_tree_arr
    cdef double[::1] best_w = best_w_arr
    cdef cnp.int64_t[::1] best_src = best_src_arr
    cdef Py_ssize_t step, v, current, nxt
    cdef double w, min_w
    in_tree[0] = 1
    current = 0
    with nogil:
        for step in range(n - 1):
            for v in range(n):
                if not in_tree[v]:
                    w = dm[current, v]
                    if w < best_w[v]:
                        best_w[v] = w
                        best_src[v] = current
            nxt = -1
            min_w = 0.0
            for v in range(n):
                if not in_tree[v] and (nxt == -1 or best_w[v] < min_w):
                    nxt = v
                    min_w = best_w[v]
            edges[step, 0] = <double>best_src[nxt]
            edges[step, 1] = <double>nxt
            edges[step, 2] = best_w[nxt]
            in_tree[nxt] = 1
            current = nxt
    return edges_arr


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
    cdef double[:, ::1] emb = embedding
    cdef cnp.int64_t[::1] hd = np.ascontiguousarray(head, dtype=np.int64)
    cdef cnp.int64_t[::1] tl = np.ascontiguousarray(tail, dtype=np.int64)
    cdef double[::1] eps = np.ascontiguousarray(
        epochs_per_sample, dtype=np.float64
    )
    cdef Py_ssize_t n_edges = eps.shape[0]
    cdef Py_ssize_t dim = emb.shape[1]
    ep_neg_arr = np.asarray(epochs_per_sample, dtype=np.float64) / float(
        negative_sample_rate
    )
    next_sample_arr = np.asarray(epochs_per_sample, dtype=np.float64).copy()
    next_neg_arr = ep_neg_arr.copy()
    cdef double[::1] ep_neg = ep_neg_arr
    cdef double[::1] next_sample = next_sample_arr
    cdef double[::1] next_neg = next_neg_arr

    cdef double aa = a, bb = b, gam = gamma
    cdef double alpha = initial_alpha
    cdef double init_alpha = initial_alpha
    cdef Py_ssize_t epochs = n_epochs
    cdef Py_ssize_t n_vert = n_vertices
    cdef uint64 rng_state = _mix_seed(<uint64>seed)

    cdef Py_ssize_t n, i, d, p, n_neg
    cdef Py_ssize_t j, k, other
    cdef double dsq, coeff, grad_d, diff

    with nogil:
        for n in range(epochs):
            for i in range(n_edges):
                if next_sample[i] > n:
                    continue
                j = hd[i]
                k = tl[i]
                dsq = 0.0
                for d in range(dim):
                    diff = emb[j, d] - emb[k, d]
                    dsq += diff * diff
                if dsq > 0.0:
                    coeff = (-2.0 * aa * bb * pow(dsq, bb - 1.0)) / (
                        aa * pow(dsq, bb) + 1.0
                    )
                else:
                    coeff = 0.0
                for d in range(dim):
                    grad_d = _clip4(coeff * (emb[j, d] - emb[k, d]))
                    emb[j, d] += grad_d * alpha
                    emb[k, d] -= grad_d * alpha
                next_sample[i] += eps[i]

                n_neg = <Py_ssize_t>((n - next_neg[i]) / ep_neg[i])
                for p in range(n_neg):
                    other = <Py_ssize_t>(_next_rand(&rng_state) % <uint64>n_vert)
                    if other == j:
                        continue
                    dsq = 0.0
                    for d in range(dim):
                        diff = emb[j, d] - emb[other, d]
                        dsq += diff * diff
                    if dsq > 0.0:
                        coeff = (2.0 * gam * bb) / (
                            (0.001 + dsq) * (aa * pow(dsq, bb) + 1.0)
                        )
                    else:
                        coeff = 0.0
                    for d in range(dim):
                        if coeff > 0.0:
                            grad_d = _clip4(coeff * (emb[j, d] - emb[other, d]))
                        else:
                            grad_d = 4.0
                        emb[j, d] += grad_d * alpha
                next_neg[i] += n_neg * ep_neg[i]
            alpha = init_alpha * (1.0 - (<double>n) / (<double>epochs))
    return embedding
