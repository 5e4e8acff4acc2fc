"""Density clustering of the embedding with soft memberships.

The classic hierarchical density pipeline: core distances at ``min_samples``
neighbours, mutual-reachability distances, a minimum spanning tree, the
single-linkage dendrogram, a condensed tree at ``min_cluster_size``, and
excess-of-mass cluster selection.  Points outside every selected cluster
carry the noise label -1.  Soft memberships blend an exemplar-distance
softmax with condensed-tree membership and add an explicit noise slot.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import prim_mst

__all__ = [
    "CondensedEdge",
    "ClusterModel",
    "ArticleMembership",
    "HierarchyNode",
    "ClusterHierarchy",
    "hdbscan_fit",
    "soft_memberships",
    "extract_hierarchy",
    "top_terms",
    "pairwise_euclidean",
    "mutual_reachability",
    "single_linkage",
]


@dataclass(frozen=True)
class CondensedEdge:
    """One condensed-tree row; ``child`` < n means a point falling out."""

    parent: int
    child: int
    lam: float
    child_size: int


@dataclass
class ClusterModel:
    labels: np.ndarray  # (n,) int64, -1 = noise
    condensed_tree: list[CondensedEdge]
    stabilities: dict[int, float]  # public cluster id -> stability
    selected_clusters: list[int]  # public ids, by decreasing stability
    persistence: np.ndarray  # (n,) per-point strength in its cluster, 0 for noise
    exemplars: dict[int, np.ndarray]  # public id -> point indices
    raw_selected: dict[int, int]  # public id -> condensed-tree node id
    linkage: np.ndarray  # (n-1, 4) single-linkage matrix
    n_points: int
    min_cluster_size: int
    min_samples: int

    @property
    def n_clusters(self) -> int:
        return len(self.selected_clusters)


@dataclass
class ArticleMembership:
    """Distribution over selected clusters plus a final noise slot."""

    article_id: str
    probs: np.ndarray

    @property
    def noise(self) -> float:
        return float(self.probs[-1])


def pairwise_euclidean(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    np.fill_diagonal(dist, 0.0)
    return dist


def core_distances(dist: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest other point, per row."""
    n = dist.shape[0]
    k = min(k, n - 1)
    masked = dist.copy()
    np.fill_diagonal(masked, np.inf)
    return np.partition(masked, k - 1, axis=1)[:, k - 1]


def mutual_reachability(dist: np.ndarray, min_samples: int) -> np.ndarray:
    """max(core_i, core_j, d_ij) with a zero diagonal."""
    core = core_distances(dist, min_samples)
    mr = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mr, 0.0)
    return mr


def single_linkage(mst_edges: np.ndarray, n: int) -> np.ndarray:
    """Edge list -> scipy-style linkage matrix [left, right, dist, size].

    Edges are processed in ascending weight (stable on ties); merged
    clusters get ids n, n+1, ... in merge order.
    """
    order = np.argsort(mst_edges[:, 2], kind="stable")
    parent = np.arange(2 * n - 1, dtype=np.int64)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    linkage = np.empty((n - 1, 4), dtype=np.float64)
    nxt = n
    for row, e in enumerate(order):
        a = find(int(mst_edges[e, 0]))
        b = find(int(mst_edges[e, 1]))
        linkage[row, 0] = a
        linkage[row, 1] = b
        linkage[row, 2] = mst_edges[e, 2]
        linkage[row, 3] = size[a] + size[b]
        parent[a] = nxt
        parent[b] = nxt
        size[nxt] = size[a] + size[b]
        nxt += 1
    return linkage


def _bfs(linkage: np.ndarray, n: int, start: int) -> list[int]:
    out = []
    queue = [start]
    while queue:
        node = queue.pop(0)
        out.append(node)
        if node >= n:
            row = linkage[node - n]
            queue.append(int(row[0]))
            queue.append(int(row[1]))
    return out


def condense_tree(linkage: np.ndarray, n: int, min_cluster_size: int) -> list[CondensedEdge]:
    """Collapse the dendrogram into clusters of >= min_cluster_size points.

    Splits where both sides are big enough spawn two new clusters; smaller
    side-shoots fall out of their parent cluster point by point at the
    lambda (= 1/distance) of the split.
    """
    root = 2 * n - 2
    edges: list[CondensedEdge] = []
    relabel = {root: n}
    next_label = n + 1
    ignore: set[int] = set()

    def node_size(node: int) -> int:
        return 1 if node < n else int(linkage[node - n, 3])

    def shed_points(subtree_root: int, parent_label: int, lam: float):
        for sub in _bfs(linkage, n, subtree_root):
            if sub < n:
                edges.append(CondensedEdge(parent_label, sub, lam, 1))
            ignore.add(sub)

    for node in _bfs(linkage, n, root):
        if node in ignore or node < n:
            continue
        row = linkage[node - n]
        left, right, dist = int(row[0]), int(row[1]), float(row[2])
        lam = 1.0 / dist if dist > 0.0 else np.inf
        left_big = node_size(left) >= min_cluster_size
        right_big = node_size(right) >= min_cluster_size
        label = relabel[node]
        if left_big and right_big:
            for child in (left, right):
                relabel[child] = next_label
                edges.append(CondensedEdge(label, next_label, lam, node_size(child)))
                next_label += 1
        elif not left_big and not right_big:
            shed_points(left, label, lam)
            shed_points(right, label, lam)
        elif left_big:
            relabel[left] = label
            shed_points(right, label, lam)
        else:
            relabel[right] = label
            shed_points(left, label, lam)
    return edges


def compute_stability(edges: list[CondensedEdge], n: int) -> dict[int, float]:
    """Per-cluster sum of (lambda_child - lambda_birth) * child_size."""
    births = {n: 0.0}
    for edge in edges:
        if edge.child >= n:
            births[edge.child] = edge.lam
    stability: dict[int, float] = {cid: 0.0 for cid in births}
    for edge in edges:
        stability[edge.parent] += (edge.lam - births[edge.parent]) * edge.child_size
    return stability


def select_clusters_eom(
    edges: list[CondensedEdge], stability: dict[int, float], n: int
) -> list[int]:
    """Excess-of-mass selection over candidate clusters (root excluded).

    Processing children before parents: a parent replaces its subtree when
    its own stability is at least the subtree's aggregate.
    """
    children: dict[int, list[int]] = {}
    for edge in edges:
        if edge.child >= n:
            children.setdefault(edge.parent, []).append(edge.child)
    candidates = sorted((cid for cid in stability if cid != n), reverse=True)
    is_selected = {cid: True for cid in candidates}
    agg: dict[int, float] = {}
    for cid in candidates:
        subtree = sum(agg[ch] for ch in children.get(cid, []))
        if subtree > stability[cid]:
            is_selected[cid] = False
            agg[cid] = subtree
        else:
            queue = list(children.get(cid, []))
            while queue:
                node = queue.pop()
                is_selected[node] = False
                queue.extend(children.get(node, []))
            agg[cid] = stability[cid]
    return [cid for cid in candidates if is_selected[cid]]


def _point_assignments(edges: list[CondensedEdge], selected_raw: set[int], n: int):
    """(raw cluster or -1, fall-out lambda) per point, via the condensed tree."""
    parent_of = {edge.child: edge.parent for edge in edges}
    point_lambda = np.zeros(n)
    raw_label = np.full(n, -1, dtype=np.int64)
    for edge in edges:
        if edge.child < n:
            point_lambda[edge.child] = edge.lam
    for p in range(n):
        node = p
        while node in parent_of:
            node = parent_of[node]
            if node in selected_raw:
                raw_label[p] = node
                break
    return raw_label, point_lambda


def hdbscan_fit(
    embedding, min_cluster_size: int = 250, min_samples: int = 5
) -> ClusterModel:
    """Fit the density hierarchy and select flat clusters.

    ``embedding`` is an Embedding or a plain (n, d) array.  When n is not
    greater than ``min_cluster_size`` the model is all noise (with a
    warning).  Public cluster ids are assigned by decreasing stability.
    """
    X = embedding.coordinates if hasattr(embedding, "coordinates") else np.asarray(embedding)
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("embedding contains non-finite coordinates")
    n = X.shape[0]
    if n <= min_cluster_size:
        warnings.warn(
            f"{n} points with min_cluster_size={min_cluster_size}: all points "
            "labelled noise",
            stacklevel=2,
        )
        return ClusterModel(
            labels=np.full(n, -1, dtype=np.int64),
            condensed_tree=[],
            stabilities={},
            selected_clusters=[],
            persistence=np.zeros(n),
            exemplars={},
            raw_selected={},
            linkage=np.empty((0, 4)),
            n_points=n,
            min_cluster_size=min_cluster_size,
            min_samples=min_samples,
        )

    dist = pairwise_euclidean(X)
    mr = mutual_reachability(dist, min_samples)
    mst = prim_mst(mr)
    linkage = single_linkage(mst, n)
    edges = condense_tree(linkage, n, min_cluster_size)
    stability = compute_stability(edges, n)
    selected_raw = select_clusters_eom(edges, stability, n)

    ranked = sorted(selected_raw, key=lambda cid: (-stability[cid], cid))
    raw_to_public = {raw: public for public, raw in enumerate(ranked)}
    raw_label, point_lambda = _point_assignments(edges, set(selected_raw), n)
    labels = np.array(
        [raw_to_public.get(raw, -1) if raw >= 0 else -1 for raw in raw_label],
        dtype=np.int64,
    )

    persistence = np.zeros(n)
    exemplars: dict[int, np.ndarray] = {}
    cluster_children: dict[int, list[int]] = {}
    for edge in edges:
        if edge.child >= n:
            cluster_children.setdefault(edge.parent, []).append(edge.child)
    points_by_parent: dict[int, list[tuple[int, float]]] = {}
    for edge in edges:
        if edge.child < n:
            points_by_parent.setdefault(edge.parent, []).append((edge.child, edge.lam))

    for raw, public in raw_to_public.items():
        members = np.flatnonzero(labels == public)
        lams = point_lambda[members]
        finite = lams[np.isfinite(lams)]
        max_lambda = float(finite.max()) if finite.size else 0.0
        if max_lambda > 0.0:
            persistence[members] = np.minimum(lams / max_lambda, 1.0)
        else:
            persistence[members] = 1.0

        # Exemplars: the most-persistent points of each leaf cluster under raw.
        leaves = []
        queue = [raw]
        while queue:
            node = queue.pop()
            subs = cluster_children.get(node, [])
            if subs:
                queue.extend(subs)
            else:
                leaves.append(node)
        chosen: list[int] = []
        for leaf in leaves:
            rows = points_by_parent.get(leaf, [])
            if not rows:
                continue
            leaf_max = max(lam for _, lam in rows)
            chosen.extend(p for p, lam in rows if lam == leaf_max)
        exemplars[public] = np.array(sorted(chosen), dtype=np.int64)

    return ClusterModel(
        labels=labels,
        condensed_tree=edges,
        stabilities={raw_to_public[raw]: stability[raw] for raw in ranked},
        selected_clusters=[raw_to_public[raw] for raw in ranked],
        persistence=persistence,
        exemplars=exemplars,
        raw_selected={raw_to_public[raw]: raw for raw in ranked},
        linkage=linkage,
        n_points=n,
        min_cluster_size=min_cluster_size,
        min_samples=min_samples,
    )


def soft_memberships(model: ClusterModel, embedding) -> list[ArticleMembership]:
    """Per-point distribution over selected clusters plus a noise slot.

    Cluster affinities blend, half and half, a softmax over negated
    distances to each cluster's exemplars with the point's condensed-tree
    cluster membership; the noise slot is one minus the largest cluster
    affinity, and the vector is renormalised.  The hard label is always
    the argmax for non-noise points.
    """
    X = embedding.coordinates if hasattr(embedding, "coordinates") else np.asarray(embedding)
    ids = (
        embedding.article_ids
        if hasattr(embedding, "article_ids")
        else [str(i) for i in range(len(X))]
    )
    n = X.shape[0]
    k = model.n_clusters
    if k == 0:
        return [
            ArticleMembership(article_id=ids[i], probs=np.array([1.0])) for i in range(n)
        ]

    exemplar_dist = np.empty((n, k))
    for public in model.selected_clusters:
        E = X[model.exemplars[public]]
        diffs = X[:, None, :] - E[None, :, :]
        exemplar_dist[:, public] = np.sqrt((diffs * diffs).sum(axis=2)).min(axis=1)

    logits = -exemplar_dist
    logits -= logits.max(axis=1, keepdims=True)
    softmax = np.exp(logits)
    softmax /= softmax.sum(axis=1, keepdims=True)

    tree_part = np.zeros((n, k))
    clustered = model.labels >= 0
    tree_part[np.flatnonzero(clustered), model.labels[clustered]] = 1.0

    affinity = 0.5 * softmax + 0.5 * tree_part
    noise = 1.0 - affinity.max(axis=1)
    probs = np.hstack([affinity, noise[:, None]])
    probs /= probs.sum(axis=1, keepdims=True)
    return [ArticleMembership(article_id=ids[i], probs=probs[i]) for i in range(n)]


@dataclass
class HierarchyNode:
    id: int  # condensed-tree node id
    parent: int | None
    size: int
    selected: bool
    cluster_id: int | None = None  # public id when selected


@dataclass
class ClusterHierarchy:
    nodes: list[HierarchyNode] = field(default_factory=list)

    def leaves(self) -> list[HierarchyNode]:
        parents = {node.parent for node in self.nodes if node.parent is not None}
        return [node for node in self.nodes if node.id not in parents]

    def edge_set(self) -> set[tuple[int, int]]:
        return {
            (node.parent, node.id) for node in self.nodes if node.parent is not None
        }

    def to_dot(self) -> str:
        lines = ["digraph cluster_hierarchy {"]
        for node in self.nodes:
            shape = "box" if node.selected else "ellipse"
            label = f"{node.id} (n={node.size})"
            if node.cluster_id is not None:
                label = f"cluster {node.cluster_id}\\n{label}"
            lines.append(
                f'  n{node.id} [label="{label}", shape={shape}, '
                f"selected={str(node.selected).lower()}, size={node.size}];"
            )
        for parent, child in sorted(self.edge_set()):
            lines.append(f"  n{parent} -> n{child};")
        lines.append("}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dot(cls, text: str) -> "ClusterHierarchy":
        node_re = re.compile(
            r"n(\d+)\s*\[label=\"(?:cluster (\d+)\\n)?\d+ \(n=(\d+)\)\", "
            r"shape=\w+, selected=(true|false), size=(\d+)\];"
        )
        edge_re = re.compile(r"n(\d+)\s*->\s*n(\d+);")
        nodes: dict[int, HierarchyNode] = {}
        for match in node_re.finditer(text):
            nid = int(match.group(1))
            cluster_id = int(match.group(2)) if match.group(2) else None
            nodes[nid] = HierarchyNode(
                id=nid,
                parent=None,
                size=int(match.group(5)),
                selected=match.group(4) == "true",
                cluster_id=cluster_id,
            )
        for match in edge_re.finditer(text):
            parent, child = int(match.group(1)), int(match.group(2))
            nodes[child].parent = parent
        return cls(nodes=sorted(nodes.values(), key=lambda nd: nd.id))

    def to_json(self) -> str:
        return json.dumps(
            [
                {
                    "id": node.id,
                    "parent": node.parent,
                    "size": node.size,
                    "selected": node.selected,
                    "cluster_id": node.cluster_id,
                }
                for node in self.nodes
            ],
            indent=2,
        )


def extract_hierarchy(model: ClusterModel) -> ClusterHierarchy:
    """Candidate-cluster skeleton of the condensed tree, selected marked."""
    n = model.n_points
    public_by_raw = {raw: public for public, raw in model.raw_selected.items()}
    sizes: dict[int, int] = {}
    parents: dict[int, int | None] = {}
    for edge in model.condensed_tree:
        if edge.child >= n:
            parents[edge.child] = edge.parent
            sizes[edge.child] = edge.child_size
        parents.setdefault(edge.parent, None)
        sizes.setdefault(edge.parent, n)
    if not parents and n > 0:
        parents[n] = None
        sizes[n] = n
    nodes = [
        HierarchyNode(
            id=nid,
            parent=parents[nid],
            size=sizes[nid],
            selected=nid in public_by_raw,
            cluster_id=public_by_raw.get(nid),
        )
        for nid in sorted(parents)
    ]
    return ClusterHierarchy(nodes=nodes)


def top_terms(
    cluster_id: int,
    memberships: list[ArticleMembership],
    vectors,
    vocabulary,
    k: int = 30,
) -> list[tuple[str, float]]:
    """Terms ranked by membership-weighted tf-idf mass for one cluster.

    ``score(t) = sum_art membership(art, cluster) * tfidf(art, t)``.  Ties
    break alphabetically; asking for more terms than exist returns all of
    them ranked.
    """
    n_clusters = len(memberships[0].probs) - 1 if memberships else 0
    if not (0 <= cluster_id < n_clusters):
        raise KeyError(f"unknown cluster id {cluster_id}")
    scores = np.zeros(len(vocabulary.terms))
    for membership, vec in zip(memberships, vectors):
        weight = float(membership.probs[cluster_id])
        if weight > 0.0 and len(vec):
            scores[vec.indices] += weight * vec.values
    present = np.flatnonzero(scores > 0.0)
    ranked = sorted(present, key=lambda i: (-scores[i], vocabulary.terms[i]))
    return [(vocabulary.terms[i], float(scores[i])) for i in ranked[:k]]
