import numpy as np
import pytest
from scipy import stats

from newsatlas.characterise import LocationProfile
from newsatlas.evaluate import (
    AnnotatedPair,
    PairConfusion,
    Stratum,
    error_partition,
    grid_search,
    load_annotations,
    macro_f1,
    pair_confusion,
    sample_annotation_pairs,
    save_annotations,
    spearman_per_cluster,
    spearman_rho,
)

from .conftest import make_article


def pair(a, b, stratum):
    return AnnotatedPair(article_a=a, article_b=b, stratum=Stratum(stratum))


# -- sampling -----------------------------------------------------------------


def _articles_with_keywords(n=10):
    return [
        make_article(f"a{i}", "Body text right here.", keywords=[f"k{i % 3}"])
        for i in range(n)
    ]


def test_sample_zero_pairs():
    assert sample_annotation_pairs(_articles_with_keywords(), 0, seed=1) == []


def test_sample_too_many_pairs():
    with pytest.raises(ValueError, match="only"):
        sample_annotation_pairs(_articles_with_keywords(3), 10, seed=1)


def test_sample_deterministic():
    articles = _articles_with_keywords()
    one = sample_annotation_pairs(articles, 5, bias=2.0, seed=9)
    two = sample_annotation_pairs(articles, 5, bias=2.0, seed=9)
    assert one == two


def test_sample_pairs_distinct_and_unordered():
    articles = _articles_with_keywords()
    picks = sample_annotation_pairs(articles, 20, seed=3)
    assert len(set(picks)) == 20
    assert all(a != b for a, b in picks)


def test_uniform_sampling_chi_square():
    articles = [make_article(f"a{i}", "Body text right here.") for i in range(10)]
    counts = {}
    for draw in range(10000):
        (picked,) = sample_annotation_pairs(articles, 1, bias=0.0, seed=draw)
        counts[picked] = counts.get(picked, 0) + 1
    observed = np.array([counts.get(p, 0) for p in sorted(counts)])
    assert len(observed) == 45
    _, p_value = stats.chisquare(observed)
    assert p_value > 0.01


def test_bias_prefers_shared_keywords():
    articles = [
        make_article("s1", "B.", keywords=["x", "y", "z"]),
        make_article("s2", "B.", keywords=["x", "y", "z"]),
        make_article("u1", "B.", keywords=["p"]),
        make_article("u2", "B.", keywords=["q"]),
    ]
    shared = unshared = 0
    for draw in range(10000):
        (picked,) = sample_annotation_pairs(articles, 1, bias=10.0, seed=draw)
        if picked == ("s1", "s2"):
            shared += 1
        elif picked == ("u1", "u2"):
            unshared += 1
    assert shared > 5 * unshared


# -- pair confusion -------------------------------------------------------------


LABELS = {"a": 0, "b": 0, "c": 1, "n1": -1, "n2": -1}


def test_same_cluster_very_related_is_tp():
    confusion = pair_confusion(LABELS, [pair("a", "b", 3)])
    assert (confusion.tp, confusion.fp, confusion.tn, confusion.fn) == (1, 0, 0, 0)


def test_double_noise_counts_as_same_by_default():
    confusion = pair_confusion(LABELS, [pair("n1", "n2", 0)])
    assert confusion.fp == 1


def test_double_noise_dropped_under_ignore_policy():
    confusion = pair_confusion(LABELS, [pair("n1", "n2", 0)], "ignore_double_noise")
    assert confusion.total == 0


def test_single_noise_pair_kept_under_ignore_policy():
    confusion = pair_confusion(LABELS, [pair("a", "n1", 3)], "ignore_double_noise")
    assert confusion.fn == 1


def test_missing_label_raises():
    with pytest.raises(KeyError, match="unlabelled"):
        pair_confusion({}, [pair("a", "b", 3)])


def test_unknown_policy_rejected():
    with pytest.raises(ValueError, match="policy"):
        pair_confusion(LABELS, [], "whatever")


def test_totals_conserved():
    pairs = [
        pair("a", "b", 3),
        pair("a", "c", 2),
        pair("b", "c", 3),
        pair("n1", "n2", 1),
        pair("a", "n1", 0),
    ]
    confusion = pair_confusion(LABELS, pairs)
    assert confusion.total == len(pairs)
    dropped = pair_confusion(LABELS, pairs, "ignore_double_noise")
    assert dropped.total == len(pairs) - 1


# -- macro F1 -----------------------------------------------------------------


def test_perfect_predictions():
    result = macro_f1(PairConfusion(tp=5, fp=0, tn=7, fn=0))
    assert result.score == 1.0 and result.zero_support == ()


def test_derived_value_16_21():
    result = macro_f1(PairConfusion(tp=2, fp=1, tn=6, fn=1))
    assert abs(result.score - 16.0 / 21.0) < 1e-12
    assert result.f1_same == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert result.f1_diff == pytest.approx(6.0 / 7.0, abs=1e-12)


def test_zero_support_flagged():
    result = macro_f1(PairConfusion(tp=0, fp=0, tn=4, fn=2))
    assert result.f1_same == 0.0
    assert "same" not in result.zero_support  # fn>0 means support exists
    result = macro_f1(PairConfusion(tp=0, fp=2, tn=4, fn=0))
    assert result.zero_support == ("same",)
    assert result.f1_same == 0.0


def test_zero_pairs_rejected():
    with pytest.raises(ValueError, match="at least one"):
        macro_f1(PairConfusion())


def test_relabelling_invariance():
    rng = np.random.default_rng(2)
    ids = [f"x{i}" for i in range(30)]
    labels = {i: int(rng.integers(-1, 4)) for i in ids}
    pairs = []
    while len(pairs) < 40:
        a, b = (ids[int(i)] for i in rng.integers(0, 30, 2))
        if a != b:
            pairs.append(pair(a, b, int(rng.integers(0, 4))))
    permutation = {-1: -1, 0: 2, 1: 3, 2: 0, 3: 1}
    relabelled = {k: permutation[v] for k, v in labels.items()}
    a = macro_f1(pair_confusion(labels, pairs)).score
    b = macro_f1(pair_confusion(relabelled, pairs)).score
    assert a == pytest.approx(b, abs=1e-15)


# -- Spearman -----------------------------------------------------------------


def test_spearman_identical_order():
    assert spearman_rho([1, 2, 3, 4, 5], [10, 20, 30, 40, 50]) == 1.0


def test_spearman_reversed_order():
    assert spearman_rho([1, 2, 3, 4, 5], [5, 4, 3, 2, 1]) == -1.0


def test_spearman_derived_08():
    # rank-distance formula: 1 - 6*sum(d^2)/(n(n^2-1)) with d^2 sum = 4
    assert spearman_rho([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]) == 0.8


def test_spearman_ties_match_scipy():
    rng = np.random.default_rng(4)
    for _ in range(25):
        x = rng.integers(0, 5, size=12).astype(float)
        y = rng.integers(0, 5, size=12).astype(float)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        expected = stats.spearmanr(x, y).statistic
        assert spearman_rho(x, y) == pytest.approx(expected, abs=1e-12)


def test_spearman_monotone_transform_invariant():
    rng = np.random.default_rng(5)
    x = rng.normal(size=20)
    y = rng.normal(size=20)
    base = spearman_rho(x, y)
    assert spearman_rho(np.exp(x), y) == pytest.approx(base, abs=1e-12)
    assert spearman_rho(x, 3.0 * y + 7.0) == pytest.approx(base, abs=1e-12)


def _zone_profiles(scores_by_zone):
    return [
        LocationProfile(location_id=z, article_ids=["a"], probs=np.array(list(p) + [0.0]))
        for z, p in scores_by_zone.items()
    ]


def test_spearman_per_cluster_excludes_suppressed():
    profiles = _zone_profiles(
        {"Z1": [0.1], "Z2": [0.2], "Z3": [0.3], "Z4": [0.4], "Z5": [0.5]}
    )
    statistic = {"Z1": 10, "Z2": 20, "Z3": 30, "Z4": 40, "Z5": None}
    report = spearman_per_cluster(profiles, statistic)
    assert report.n_zones == 4 and report.n_suppressed == 1
    assert report.rho[0] == 1.0


def test_spearman_per_cluster_needs_three_zones():
    profiles = _zone_profiles({"Z1": [0.1], "Z2": [0.2], "Z3": [0.3]})
    with pytest.raises(ValueError, match="usable"):
        spearman_per_cluster(profiles, {"Z1": 1, "Z2": None, "Z3": 3})


# -- error partition -------------------------------------------------------------


def test_all_noise_goes_to_outlier_bucket():
    labels = {"a": -1, "b": -1, "c": -1}
    partition = error_partition(labels, [pair("a", "b", 0), pair("b", "c", 3)])
    assert len(partition.outlier) == 2
    assert partition.same_cluster == [] and partition.different_cluster == []


def test_hand_computed_buckets():
    labels = {"a": 0, "b": 0, "c": 1, "d": -1, "e": 2, "f": 0, "g": -1}
    pairs = [
        pair("a", "b", 3),  # same
        pair("a", "c", 2),  # different
        pair("a", "d", 1),  # one noise article -> different
        pair("d", "g", 0),  # both noise -> outlier
        pair("b", "f", 3),  # same
        pair("c", "e", 0),  # different
    ]
    partition = error_partition(labels, pairs)
    assert len(partition.same_cluster) == 2
    assert len(partition.different_cluster) == 3
    assert len(partition.outlier) == 1
    hist = partition.histograms()
    assert hist["same_cluster"][3] == 2
    assert sum(hist["outlier"].values()) == len(partition.outlier)
    total = sum(sum(h.values()) for h in hist.values())
    assert total == len(pairs)


# -- annotations io ----------------------------------------------------------------


def test_annotations_roundtrip(tmp_path):
    pairs = [pair("a", "b", 3), pair("a", "c", 0)]
    path = tmp_path / "ann.csv"
    save_annotations(pairs, path)
    assert load_annotations(path) == pairs


def test_pair_rejects_self():
    with pytest.raises(ValueError):
        pair("a", "a", 3)


def test_binary_label():
    assert pair("a", "b", 3).binary_label is True
    assert pair("a", "b", 2).binary_label is False


# -- grid search ------------------------------------------------------------------


def _grid_inputs(tiny_synth):
    from newsatlas.preprocess import TokenizedArticle

    docs = []
    for raw in tiny_synth.articles:
        tokens = (raw["title"] + " " + raw["body"]).lower().split()
        tokens = [t.strip(".") for t in tokens]
        docs.append(TokenizedArticle(article_id=raw["id"], tokens=tokens))
    return docs, tiny_synth.annotations


def test_grid_single_combination(tiny_synth):
    docs, pairs = _grid_inputs(tiny_synth)
    rows = grid_search(
        docs, pairs, [500], [5], [5], seed=3, umap_epochs=50, min_cluster_size=10
    )
    assert len(rows) == 1
    assert rows[0].error is None
    assert rows[0].vocab_size == 500 and rows[0].umap_d == 5


def test_grid_sorted_and_deterministic(tiny_synth):
    docs, pairs = _grid_inputs(tiny_synth)
    kwargs = dict(seed=3, umap_epochs=50, min_cluster_size=10)
    rows1 = grid_search(docs, pairs, [300, 500], [2, 5], [5], **kwargs)
    rows2 = grid_search(docs, pairs, [300, 500], [2, 5], [5], **kwargs)
    assert rows1 == rows2
    scores = [r.macro_f1 for r in rows1]
    assert scores == sorted(scores, reverse=True)
    assert len(rows1) == 4


def test_grid_records_errors_and_continues(tiny_synth):
    docs, pairs = _grid_inputs(tiny_synth)
    # n_neighbors larger than the corpus forces a per-row failure
    rows = grid_search(
        docs, pairs, [500], [2], [5, 10_000], seed=3, umap_epochs=20, min_cluster_size=10
    )
    assert len(rows) == 2
    failed = [r for r in rows if r.error is not None]
    assert len(failed) == 1 and failed[0].macro_f1 is None
    assert rows[-1] is failed[0]  # failures sort last
