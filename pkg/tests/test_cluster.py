import numpy as np
import pytest

from newsatlas.cluster import (
    ArticleMembership,
    ClusterHierarchy,
    ClusterModel,
    CondensedEdge,
    core_distances,
    extract_hierarchy,
    hdbscan_fit,
    mutual_reachability,
    pairwise_euclidean,
    single_linkage,
    soft_memberships,
    top_terms,
)
from newsatlas.embedding import Embedding
from newsatlas.kernels import prim_mst

from .conftest import adjusted_rand_index, gaussian_blobs


# -- mutual reachability -------------------------------------------------------


def test_mutual_reachability_matches_brute_force():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(10, 3))
    dist = pairwise_euclidean(X)
    k = 4
    mr = mutual_reachability(dist, k)
    for i in range(10):
        # independent core computation: sorted distances to the other points
        others_i = np.sort(np.delete(dist[i], i))
        core_i = others_i[k - 1]
        for j in range(10):
            if i == j:
                assert mr[i, j] == 0.0
                continue
            others_j = np.sort(np.delete(dist[j], j))
            core_j = others_j[k - 1]
            assert mr[i, j] == pytest.approx(
                max(core_i, core_j, dist[i, j]), abs=1e-14
            )


def test_core_distances_clamped_to_available_points():
    X = np.array([[0.0], [1.0], [2.0]])
    dist = pairwise_euclidean(X)
    core = core_distances(dist, 10)  # only 2 other points exist
    assert core[0] == 2.0


# -- single linkage vs naive O(n^3) oracle ---------------------------------------


def naive_single_linkage_heights_and_partitions(dist):
    """Naive agglomerative min-merge; returns merge heights and the partition
    (as a set of frozensets) after all merges at or below each height."""
    n = dist.shape[0]
    d = dist.astype(float).copy()
    np.fill_diagonal(d, np.inf)
    clusters = {i: {i} for i in range(n)}
    active = list(range(n))
    matrix = {(i, j): d[i, j] for i in range(n) for j in range(n) if i < j}
    heights = []
    partitions = []
    while len(active) > 1:
        (a, b), h = min(matrix.items(), key=lambda kv: (kv[1], kv[0]))
        heights.append(h)
        clusters[a] |= clusters[b]
        del clusters[b]
        active.remove(b)
        for c in active:
            if c == a:
                continue
            key_ac = (min(a, c), max(a, c))
            key_bc = (min(b, c), max(b, c))
            matrix[key_ac] = min(matrix[key_ac], matrix.pop(key_bc))
        matrix.pop((min(a, b), max(a, b)))
        partitions.append((h, frozenset(frozenset(s) for s in clusters.values())))
    return heights, partitions


def linkage_heights_and_partitions(linkage, n):
    heights = linkage[:, 2].tolist()
    members = {i: {i} for i in range(n)}
    partitions = []
    current = {i: {i} for i in range(n)}
    for row_idx, row in enumerate(linkage):
        a, b = int(row[0]), int(row[1])
        merged = members[a] | members[b]
        members[n + row_idx] = merged
        del current[a], current[b]
        current[n + row_idx] = merged
        partitions.append(
            (row[2], frozenset(frozenset(s) for s in current.values()))
        )
    return heights, partitions


@pytest.mark.parametrize("seed", range(6))
def test_single_linkage_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(12, 40))
    X = rng.normal(size=(n, int(rng.integers(2, 5))))
    mr = mutual_reachability(pairwise_euclidean(X), 3)
    linkage = single_linkage(prim_mst(mr), n)
    got_h, got_p = linkage_heights_and_partitions(linkage, n)
    exp_h, exp_p = naive_single_linkage_heights_and_partitions(mr)
    assert np.allclose(sorted(got_h), sorted(exp_h), atol=1e-12)
    # partitions after all merges <= h must agree at every distinct height
    got_at = {h: p for h, p in got_p}
    exp_at = {h: p for h, p in exp_p}
    for h in sorted(exp_at):
        assert got_at[h] == exp_at[h]


# -- hdbscan fit -------------------------------------------------------------------


def test_all_noise_below_min_cluster_size():
    X = np.random.default_rng(0).normal(size=(100, 5))
    with pytest.warns(UserWarning, match="noise"):
        model = hdbscan_fit(X, min_cluster_size=250)
    assert (model.labels == -1).all()
    assert model.selected_clusters == []


def test_two_blobs_recovered_exactly():
    X, truth = gaussian_blobs(300, [[0.0] * 5, [20.0] * 5], scale=1.0, seed=1)
    model = hdbscan_fit(X, min_cluster_size=250, min_samples=5)
    assert model.n_clusters == 2
    assert adjusted_rand_index(truth, model.labels) >= 0.99


def test_selected_clusters_have_min_size():
    X, _ = gaussian_blobs(120, [[0.0, 0.0], [15.0, 0.0], [0.0, 15.0]], seed=2)
    model = hdbscan_fit(X, min_cluster_size=30, min_samples=5)
    for cid in model.selected_clusters:
        assert int((model.labels == cid).sum()) >= 30


def test_fit_deterministic():
    X, _ = gaussian_blobs(100, [[0.0] * 3, [12.0] * 3], seed=3)
    m1 = hdbscan_fit(X, min_cluster_size=40)
    m2 = hdbscan_fit(X, min_cluster_size=40)
    assert np.array_equal(m1.labels, m2.labels)
    assert m1.stabilities == m2.stabilities


def test_cluster_ids_ordered_by_stability():
    X, _ = gaussian_blobs(150, [[0.0] * 2, [30.0] * 2], scale=1.0, seed=4)
    model = hdbscan_fit(X, min_cluster_size=50)
    stabilities = [model.stabilities[c] for c in model.selected_clusters]
    assert stabilities == sorted(stabilities, reverse=True)
    assert model.selected_clusters == list(range(model.n_clusters))


def test_non_finite_embedding_rejected():
    X = np.full((50, 2), np.inf)
    with pytest.raises(ValueError, match="finite"):
        hdbscan_fit(X, min_cluster_size=10)


# -- soft memberships ----------------------------------------------------------------


def _fit_blob_model(seed=5):
    X, truth = gaussian_blobs(100, [[0.0] * 4, [25.0] * 4], seed=seed)
    emb = Embedding(article_ids=[str(i) for i in range(len(X))], coordinates=X)
    model = hdbscan_fit(emb, min_cluster_size=40, min_samples=5)
    return emb, model, truth


def test_memberships_sum_to_one():
    emb, model, _ = _fit_blob_model()
    for m in soft_memberships(model, emb):
        assert m.probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(m.probs >= 0.0)


def test_argmax_equals_hard_label():
    emb, model, _ = _fit_blob_model()
    memberships = soft_memberships(model, emb)
    for m, label in zip(memberships, model.labels):
        if label >= 0:
            assert int(np.argmax(m.probs)) == int(label)


def test_exemplar_point_peaks_at_its_cluster():
    emb, model, _ = _fit_blob_model()
    memberships = soft_memberships(model, emb)
    for cid, exemplar_ids in model.exemplars.items():
        for p in exemplar_ids:
            assert int(np.argmax(memberships[p].probs)) == cid


def test_all_noise_membership_is_pure_noise():
    X = np.random.default_rng(1).normal(size=(60, 3))
    with pytest.warns(UserWarning):
        model = hdbscan_fit(X, min_cluster_size=100)
    memberships = soft_memberships(model, X)
    for m in memberships:
        assert m.probs.tolist() == [1.0]


def test_two_blob_in_cluster_mass():
    emb, model, truth = _fit_blob_model()
    memberships = soft_memberships(model, emb)
    label_of_blob = {}
    for m, label, blob in zip(memberships, model.labels, truth):
        if label >= 0:
            label_of_blob.setdefault(blob, label)
    mass = [
        m.probs[label_of_blob[blob]]
        for m, blob in zip(memberships, truth)
        if blob in label_of_blob
    ]
    assert np.mean(mass) >= 0.9


def test_membership_persistence_range():
    _, model, _ = _fit_blob_model()
    assert np.all(model.persistence >= 0.0)
    assert np.all(model.persistence <= 1.0)
    assert np.all(model.persistence[model.labels >= 0] > 0.0)


# -- hierarchy ------------------------------------------------------------------------


def _hand_model(edges, n, selected):
    stab = {i: float(i) for i in selected}
    return ClusterModel(
        labels=np.full(n, -1, dtype=np.int64),
        condensed_tree=edges,
        stabilities=stab,
        selected_clusters=list(range(len(selected))),
        persistence=np.zeros(n),
        exemplars={},
        raw_selected={pub: raw for pub, raw in enumerate(selected)},
        linkage=np.empty((0, 4)),
        n_points=n,
        min_cluster_size=2,
        min_samples=2,
    )


def test_single_cluster_hierarchy_has_one_leaf():
    n = 4
    edges = [CondensedEdge(n, n + 1, 0.5, 3)] + [
        CondensedEdge(n + 1, p, 1.0, 1) for p in range(3)
    ] + [CondensedEdge(n, 3, 0.5, 1)]
    model = _hand_model(edges, n, selected=[n + 1])
    hierarchy = extract_hierarchy(model)
    leaves = hierarchy.leaves()
    assert len(leaves) == 1
    assert leaves[0].id == n + 1 and leaves[0].selected


def test_two_blob_hierarchy_shares_root():
    X, _ = gaussian_blobs(100, [[0.0] * 3, [25.0] * 3], seed=6)
    model = hdbscan_fit(X, min_cluster_size=40)
    hierarchy = extract_hierarchy(model)
    selected = [node for node in hierarchy.nodes if node.selected]
    assert len(selected) == 2
    root = [node.id for node in hierarchy.nodes if node.parent is None]
    assert len(root) == 1
    assert all(node.parent == root[0] for node in selected)


def test_dot_roundtrip_preserves_nodes_and_edges():
    X, _ = gaussian_blobs(100, [[0.0] * 3, [25.0] * 3], seed=7)
    model = hdbscan_fit(X, min_cluster_size=40)
    hierarchy = extract_hierarchy(model)
    parsed = ClusterHierarchy.from_dot(hierarchy.to_dot())
    assert {n.id for n in parsed.nodes} == {n.id for n in hierarchy.nodes}
    assert parsed.edge_set() == hierarchy.edge_set()
    assert {n.id: n.selected for n in parsed.nodes} == {
        n.id: n.selected for n in hierarchy.nodes
    }


def test_hierarchy_json_fields():
    import json

    X, _ = gaussian_blobs(80, [[0.0] * 2, [20.0] * 2], seed=8)
    model = hdbscan_fit(X, min_cluster_size=30)
    payload = json.loads(extract_hierarchy(model).to_json())
    assert all({"id", "parent", "size", "selected", "cluster_id"} <= set(n) for n in payload)


# -- top terms ----------------------------------------------------------------------


def _membership(aid, probs):
    return ArticleMembership(article_id=aid, probs=np.asarray(probs, dtype=float))


def test_top_terms_single_token_cluster():
    from newsatlas.preprocess import TokenizedArticle
    from newsatlas.vectorize import build_vocabulary, tfidf

    docs = [TokenizedArticle(str(i), ["tram"] * 4) for i in range(3)]
    docs += [TokenizedArticle(str(i + 3), ["panda"] * 4) for i in range(3)]
    vocab = build_vocabulary(docs, min_count=1)
    vectors = [tfidf(d.tokens, vocab, 6) for d in docs]
    memberships = [_membership(d.article_id, [1.0, 0.0, 0.0] if i < 3 else [0.0, 1.0, 0.0]) for i, d in enumerate(docs)]
    terms0 = top_terms(0, memberships, vectors, vocab, k=5)
    terms1 = top_terms(1, memberships, vectors, vocab, k=5)
    assert terms0[0][0] == "tram"
    assert terms1[0][0] == "panda"
    assert {t for t, _ in terms0}.isdisjoint({t for t, _ in terms1})


def test_top_terms_k_larger_than_vocab():
    from newsatlas.preprocess import TokenizedArticle
    from newsatlas.vectorize import build_vocabulary, tfidf

    docs = [TokenizedArticle("0", ["a", "b"]), TokenizedArticle("1", ["a"])]
    vocab = build_vocabulary(docs, min_count=1)
    vectors = [tfidf(d.tokens, vocab, 2) for d in docs]
    memberships = [_membership("0", [1.0, 0.0]), _membership("1", [1.0, 0.0])]
    ranked = top_terms(0, memberships, vectors, vocab, k=50)
    assert len(ranked) == 2
    assert ranked[0][1] >= ranked[1][1]


def test_top_terms_unknown_cluster():
    memberships = [_membership("0", [1.0, 0.0])]
    with pytest.raises(KeyError):
        top_terms(5, memberships, [], None, k=3)
