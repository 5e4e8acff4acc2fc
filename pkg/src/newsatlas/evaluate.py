"""Clustering evaluation: annotated pairs, Macro-F1, rank correlation, grid.

Annotated article pairs carry a four-level relatedness stratum that
binarises to "should share a cluster" (the top stratum only).  Predictions
come from hard labels; by default the noise label behaves as one more
cluster, so two noise articles predict "same".  Macro-F1 averages the F1
of the same-pair and different-pair classes.  Zone statistics are compared
to per-cluster zone scores with Spearman's rho using average ranks on
ties.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

__all__ = [
    "Stratum",
    "AnnotatedPair",
    "PairConfusion",
    "MacroF1",
    "CorrelationReport",
    "GridRow",
    "sample_annotation_pairs",
    "pair_confusion",
    "macro_f1",
    "spearman_per_cluster",
    "spearman_rho",
    "error_partition",
    "grid_search",
    "load_annotations",
    "save_annotations",
]


class Stratum(IntEnum):
    NOT_RELATED = 0
    VAGUELY = 1
    SOMEWHAT = 2
    VERY = 3


@dataclass(frozen=True)
class AnnotatedPair:
    article_a: str
    article_b: str
    stratum: Stratum

    def __post_init__(self):
        if self.article_a == self.article_b:
            raise ValueError("pair must join two distinct articles")

    @property
    def binary_label(self) -> bool:
        """True when the pair should share a cluster."""
        return self.stratum == Stratum.VERY


@dataclass
class PairConfusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MacroF1:
    score: float
    f1_same: float
    f1_diff: float
    zero_support: tuple[str, ...] = ()


@dataclass
class CorrelationReport:
    rho: dict[int, float]  # cluster id -> Spearman's rho
    n_zones: int
    n_suppressed: int

    def ranked(self) -> list[tuple[int, float]]:
        return sorted(self.rho.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass
class GridRow:
    macro_f1: float | None
    n_clusters: int | None
    umap_d: int
    umap_neighbors: int
    vocab_size: int
    error: str | None = None


def sample_annotation_pairs(articles, n: int, bias: float = 0.0, seed=None):
    """Sample ``n`` distinct unordered article pairs for annotation.

    Each pair's weight is ``1 + bias * |shared keywords|``; sampling is
    without replacement and deterministic for a fixed seed.  With bias 0
    this is uniform over all pairs.
    """
    if seed is None:
        raise ValueError("sample_annotation_pairs requires a seed")
    ids = [a.id for a in articles]
    keyword_sets = {a.id: frozenset(a.keywords) for a in articles}
    pairs = []
    weights = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            pairs.append((ids[i], ids[j]))
            shared = len(keyword_sets[ids[i]] & keyword_sets[ids[j]])
            weights.append(1.0 + bias * shared)
    if n > len(pairs):
        raise ValueError(f"asked for {n} pairs but only {len(pairs)} exist")
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    p = np.asarray(weights) / float(np.sum(weights))
    picks = rng.choice(len(pairs), size=n, replace=False, p=p)
    return [pairs[i] for i in picks]


def pair_confusion(
    labels: dict[str, int],
    pairs: list[AnnotatedPair],
    outlier_policy: str = "treat_as_cluster",
) -> PairConfusion:
    """Confusion counts of predicted-same vs annotated very-related.

    ``treat_as_cluster``: noise (-1) acts as one more cluster, so two noise
    articles predict "same".  ``ignore_double_noise``: pairs with both
    labels -1 are dropped from the counts.
    """
    if outlier_policy not in ("treat_as_cluster", "ignore_double_noise"):
        raise ValueError(f"unknown outlier policy {outlier_policy!r}")
    out = PairConfusion()
    for pair in pairs:
        try:
            la, lb = labels[pair.article_a], labels[pair.article_b]
        except KeyError as exc:
            raise KeyError(f"pair references unlabelled article {exc}") from None
        if outlier_policy == "ignore_double_noise" and la == -1 and lb == -1:
            continue
        predicted_same = la == lb
        if predicted_same and pair.binary_label:
            out.tp += 1
        elif predicted_same:
            out.fp += 1
        elif pair.binary_label:
            out.fn += 1
        else:
            out.tn += 1
    return out


def macro_f1(confusion: PairConfusion) -> MacroF1:
    """Mean of the same-pair and different-pair F1 scores.

    The different-pair class swaps roles: its precision is tn/(tn+fn) and
    recall tn/(tn+fp).  A class with zero support scores 0 and is flagged.
    """
    if confusion.total == 0:
        raise ValueError("macro_f1 needs at least one evaluated pair")
    flags = []
    same_support = confusion.tp + confusion.fn
    diff_support = confusion.tn + confusion.fp
    if same_support == 0:
        f1_same = 0.0
        flags.append("same")
    else:
        f1_same = 2.0 * confusion.tp / (2.0 * confusion.tp + confusion.fp + confusion.fn)
    if diff_support == 0:
        f1_diff = 0.0
        flags.append("diff")
    else:
        f1_diff = 2.0 * confusion.tn / (2.0 * confusion.tn + confusion.fn + confusion.fp)
    return MacroF1(
        score=(f1_same + f1_diff) / 2.0,
        f1_same=f1_same,
        f1_diff=f1_diff,
        zero_support=tuple(flags),
    )


def _average_ranks(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x, y) -> float:
    """Spearman's rho via Pearson correlation of average ranks."""
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        return 0.0
    return float((rx * ry).sum() / denom)


def spearman_per_cluster(zone_profiles, zone_statistic: dict[str, int | None]) -> CorrelationReport:
    """Per-cluster rank correlation of zone scores against a zone statistic.

    ``zone_profiles`` is a list of LocationProfile keyed by zone id;
    zones with a suppressed (None) or missing statistic are excluded.
    """
    usable = [
        p for p in zone_profiles if zone_statistic.get(p.location_id) is not None
    ]
    n_suppressed = len(zone_profiles) - len(usable)
    if len(usable) < 3:
        raise ValueError(f"need >= 3 usable zones, have {len(usable)}")
    stats = np.array([float(zone_statistic[p.location_id]) for p in usable])
    n_clusters = len(usable[0].probs) - 1
    rho = {}
    for cluster_id in range(n_clusters):
        scores = np.array([float(p.probs[cluster_id]) for p in usable])
        rho[cluster_id] = spearman_rho(scores, stats)
    return CorrelationReport(rho=rho, n_zones=len(usable), n_suppressed=n_suppressed)


@dataclass
class ErrorPartition:
    outlier: list[AnnotatedPair] = field(default_factory=list)
    same_cluster: list[AnnotatedPair] = field(default_factory=list)
    different_cluster: list[AnnotatedPair] = field(default_factory=list)

    def histograms(self) -> dict[str, dict[int, int]]:
        out = {}
        for name in ("outlier", "same_cluster", "different_cluster"):
            bucket = getattr(self, name)
            hist = {s.value: 0 for s in Stratum}
            for pair in bucket:
                hist[pair.stratum.value] += 1
            out[name] = hist
        return out


def error_partition(labels: dict[str, int], pairs: list[AnnotatedPair]) -> ErrorPartition:
    """Split pairs into outlier / same-cluster / different-cluster buckets.

    The outlier bucket holds pairs where both articles are noise; a pair
    with exactly one noise article lands in different-cluster, since noise
    never shares a label with a real cluster.
    """
    out = ErrorPartition()
    for pair in pairs:
        la, lb = labels[pair.article_a], labels[pair.article_b]
        if la == -1 and lb == -1:
            out.outlier.append(pair)
        elif la == lb:
            out.same_cluster.append(pair)
        else:
            out.different_cluster.append(pair)
    return out


def grid_search(
    tokenized,
    pairs: list[AnnotatedPair],
    vocab_sizes,
    umap_dims,
    umap_neighbors,
    *,
    seed,
    min_count: int = 5,
    umap_epochs: int = 200,
    min_cluster_size: int = 25,
    min_samples: int = 5,
    outlier_policy: str = "treat_as_cluster",
) -> list[GridRow]:
    """Run vectorise -> reduce -> cluster -> Macro-F1 over the grid.

    Every combination is re-seeded identically so rows differ only through
    their parameters.  A failing combination is recorded with its error and
    the run continues.  Rows sort by descending score, then parameters.
    """
    from .cluster import hdbscan_fit
    from .embedding import umap_reduce
    from .vectorize import build_vocabulary, tfidf

    ids = [doc.article_id for doc in tokenized]
    rows: list[GridRow] = []
    for vocab_size in vocab_sizes:
        for dim in umap_dims:
            for nbrs in umap_neighbors:
                try:
                    vocab = build_vocabulary(tokenized, max_size=vocab_size, min_count=min_count)
                    vectors = [tfidf(doc.tokens, vocab, len(tokenized)) for doc in tokenized]
                    emb = umap_reduce(
                        vectors,
                        d=dim,
                        n_neighbors=nbrs,
                        epochs=umap_epochs,
                        seed=seed,
                        article_ids=ids,
                        n_terms=len(vocab),
                    )
                    model = hdbscan_fit(
                        emb, min_cluster_size=min_cluster_size, min_samples=min_samples
                    )
                    labels = {aid: int(lab) for aid, lab in zip(ids, model.labels)}
                    result = macro_f1(pair_confusion(labels, pairs, outlier_policy))
                    rows.append(
                        GridRow(
                            macro_f1=result.score,
                            n_clusters=model.n_clusters,
                            umap_d=dim,
                            umap_neighbors=nbrs,
                            vocab_size=vocab_size,
                        )
                    )
                except Exception as exc:
                    rows.append(
                        GridRow(
                            macro_f1=None,
                            n_clusters=None,
                            umap_d=dim,
                            umap_neighbors=nbrs,
                            vocab_size=vocab_size,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    rows.sort(
        key=lambda r: (
            -(r.macro_f1 if r.macro_f1 is not None else -1.0),
            r.umap_d,
            r.umap_neighbors,
            r.vocab_size,
        )
    )
    return rows


def save_grid_csv(rows: list[GridRow], path) -> None:
    """Columns follow the cross-validation table: score, clusters, d, nbrs, vocab."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["macro_f1", "n_clusters", "umap_d", "umap_neighbors", "vocab_size", "error"])
        for row in rows:
            writer.writerow(
                [
                    "" if row.macro_f1 is None else f"{100.0 * row.macro_f1:.2f}",
                    "" if row.n_clusters is None else row.n_clusters,
                    row.umap_d,
                    row.umap_neighbors,
                    row.vocab_size,
                    row.error or "",
                ]
            )


def load_annotations(path) -> list[AnnotatedPair]:
    """CSV with columns article_a, article_b, stratum (0-3)."""
    pairs = []
    with open(path, encoding="utf-8", newline="") as handle:
        for record in csv.DictReader(handle):
            pairs.append(
                AnnotatedPair(
                    article_a=record["article_a"],
                    article_b=record["article_b"],
                    stratum=Stratum(int(record["stratum"])),
                )
            )
    return pairs


def save_annotations(pairs: list[AnnotatedPair], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["article_a", "article_b", "stratum"])
        for pair in pairs:
            writer.writerow([pair.article_a, pair.article_b, pair.stratum.value])
