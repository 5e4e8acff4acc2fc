"""Corpus loading, sentence segmentation and near-duplicate removal.

Articles arrive as JSONL or CSV records.  Republished items are detected by
sentence overlap: two articles are duplicates when the smaller of their
eligible sentence sets shares at least half its sentences with the other,
where short sentences and boilerplate (sentences appearing in many
articles) are ineligible.  Duplicate groups are closed transitively and the
longest article of each group is kept.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from datetime import date

__all__ = [
    "Article",
    "DedupReport",
    "CorpusError",
    "load_corpus",
    "split_sentences",
    "dedup",
]

_REQUIRED_FIELDS = ("id", "title", "body", "date")


class CorpusError(ValueError):
    """Raised for unreadable corpora or malformed records."""


@dataclass
class Article:
    """One news item; ``sentences`` is derived from the body."""

    id: str
    title: str
    body: str
    published: date
    keywords: list[str] = field(default_factory=list)
    sentences: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.sentences:
            self.sentences = split_sentences(self.body)


@dataclass
class DedupReport:
    retrieved_count: int
    unique_count: int
    duplicate_groups: list[tuple[str, list[str]]]

    def to_json(self) -> str:
        return json.dumps(
            {
                "retrieved_count": self.retrieved_count,
                "unique_count": self.unique_count,
                "duplicate_groups": [
                    {"kept": kept, "dropped": dropped}
                    for kept, dropped in self.duplicate_groups
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DedupReport":
        raw = json.loads(text)
        return cls(
            retrieved_count=raw["retrieved_count"],
            unique_count=raw["unique_count"],
            duplicate_groups=[
                (g["kept"], list(g["dropped"])) for g in raw["duplicate_groups"]
            ],
        )


def _parse_record(raw: dict, where: str) -> Article:
    for name in _REQUIRED_FIELDS:
        if name not in raw or raw[name] is None:
            raise CorpusError(f"{where}: missing required field {name!r}")
    try:
        published = date.fromisoformat(str(raw["date"]))
    except ValueError as exc:
        raise CorpusError(f"{where}: bad date {raw['date']!r} ({exc})") from None
    keywords = raw.get("keywords") or []
    if isinstance(keywords, str):
        keywords = [k.strip() for k in keywords.split(";") if k.strip()]
    return Article(
        id=str(raw["id"]),
        title=str(raw["title"]),
        body=str(raw["body"]),
        published=published,
        keywords=[str(k) for k in keywords],
    )


def load_corpus(path, format: str = "jsonl") -> list[Article]:
    """Read articles from ``path`` in file order.

    JSONL: one object per line with fields id, title, body, date and an
    optional keywords list.  CSV: a header row with the same columns,
    keywords ``;``-separated.  A malformed record raises ``CorpusError``
    naming its line/record index; nothing is silently dropped.
    """
    if format not in ("jsonl", "csv"):
        raise ValueError(f"unknown corpus format {format!r}")
    articles: list[Article] = []
    seen_ids: set[str] = set()
    try:
        handle = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from None
    with handle:
        if format == "jsonl":
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"line {lineno}: invalid JSON ({exc})") from None
                if not isinstance(raw, dict):
                    raise CorpusError(f"line {lineno}: record is not an object")
                articles.append(_parse_record(raw, f"line {lineno}"))
        else:
            reader = csv.DictReader(handle)
            for index, raw in enumerate(reader, start=1):
                articles.append(_parse_record(raw, f"record {index}"))
    for art in articles:
        if art.id in seen_ids:
            raise CorpusError(f"duplicate article id {art.id!r}")
        seen_ids.add(art.id)
    return articles


_TERMINATORS = frozenset(".!?")


def split_sentences(text: str) -> list[str]:
    """Split ``text`` into sentences on '.', '!' or '?'.

    A terminator ends a sentence when followed by whitespace and then an
    uppercase letter, or by end-of-text.  Anything else (digits, lowercase
    continuations, decimal points) does not split, so "3.5 million" stays
    inside one sentence.  Joining the sentences with the whitespace removed
    at each boundary reproduces the input.
    """
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _TERMINATORS:
            j = i + 1
            while j < n and text[j].isspace():
                j = j + 1
            if j > i + 1 and (j == n or text[j].isupper()):
                chunk = text[start : i + 1].strip()
                if chunk:
                    sentences.append(chunk)
                start = j
                i = j
                continue
            if j == n:
                break
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


_WS = re.compile(r"\s+")


def _sentence_key(sentence: str) -> str:
    return _WS.sub(" ", sentence.lower()).strip()


def eligible_sentences(
    article: Article,
    doc_counts: dict[str, int],
    min_sentence_words: int,
    boilerplate_doc_count: int,
) -> frozenset[str]:
    """Sentence keys of ``article`` usable for overlap comparison."""
    keys = set()
    for sentence in article.sentences:
        key = _sentence_key(sentence)
        if len(key.split()) < min_sentence_words:
            continue
        if doc_counts.get(key, 0) > boilerplate_doc_count:
            continue
        keys.add(key)
    return frozenset(keys)


class _UnionFind:
    def __init__(self, items):
        self.parent = {item: item for item in items}

    def find(self, item):
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _is_duplicate_pair(sa: frozenset, sb: frozenset, min_shared_fraction: float) -> bool:
    smaller = min(len(sa), len(sb))
    if smaller == 0:
        return False
    shared = len(sa & sb)
    return shared > 0 and shared >= min_shared_fraction * smaller


def _duplicate_round(
    articles: list[Article],
    uf: "_UnionFind",
    min_shared_fraction: float,
    min_sentence_words: int,
    boilerplate_doc_count: int,
) -> bool:
    """One overlap pass over ``articles``; True when any pair merged."""
    doc_counts: dict[str, int] = {}
    for art in articles:
        for key in {_sentence_key(s) for s in art.sentences}:
            doc_counts[key] = doc_counts.get(key, 0) + 1

    eligible = {
        art.id: eligible_sentences(
            art, doc_counts, min_sentence_words, boilerplate_doc_count
        )
        for art in articles
    }

    # Inverted index keeps the pass over candidate pairs near-linear for
    # corpora without heavy duplication.
    by_sentence: dict[str, list[str]] = {}
    for art in articles:
        for key in eligible[art.id]:
            by_sentence.setdefault(key, []).append(art.id)

    merged = False
    compared: set[tuple[str, str]] = set()
    for ids in by_sentence.values():
        for pos, id_a in enumerate(ids):
            for id_b in ids[pos + 1 :]:
                pair = (id_a, id_b)
                if pair in compared:
                    continue
                compared.add(pair)
                if _is_duplicate_pair(
                    eligible[id_a], eligible[id_b], min_shared_fraction
                ):
                    uf.union(id_a, id_b)
                    merged = True
    return merged


def dedup(
    articles: list[Article],
    min_shared_fraction: float = 0.5,
    min_sentence_words: int = 10,
    boilerplate_doc_count: int = 20,
) -> tuple[list[Article], DedupReport]:
    """Drop near-duplicate articles, keeping the longest per group.

    Sentences are compared by exact text after lowercasing and whitespace
    collapsing.  Sentences shorter than ``min_sentence_words`` words or
    occurring in more than ``boilerplate_doc_count`` of the compared
    articles are excluded.  Two articles are duplicates when the smaller
    eligible set shares at least ``min_shared_fraction`` of its sentences
    with the other (articles with no eligible sentences never match).  The
    relation is closed transitively; each group keeps the article with the
    longest body, ties broken by the lexicographically smallest id.

    Removal runs to a fixed point: dropping duplicates can push a
    boilerplate sentence below the occurrence threshold, making it
    comparable, so the pass repeats over the survivors until stable.  This
    keeps the operation idempotent.
    """
    uf = _UnionFind([art.id for art in articles])
    current = list(articles)
    while True:
        merged = _duplicate_round(
            current, uf, min_shared_fraction, min_sentence_words, boilerplate_doc_count
        )
        if not merged:
            break
        survivors: dict[str, Article] = {}
        for art in current:
            root = uf.find(art.id)
            best = survivors.get(root)
            if best is None or (-len(art.body), art.id) < (-len(best.body), best.id):
                survivors[root] = art
        next_round = [art for art in current if survivors[uf.find(art.id)] is art]
        if len(next_round) == len(current):
            break
        current = next_round

    kept_ids = {art.id for art in current}
    groups: dict[str, list[Article]] = {}
    for art in articles:
        groups.setdefault(uf.find(art.id), []).append(art)

    duplicate_groups: list[tuple[str, list[str]]] = []
    for members in groups.values():
        if len(members) < 2:
            continue
        (kept,) = [a.id for a in members if a.id in kept_ids]
        duplicate_groups.append(
            (kept, sorted(a.id for a in members if a.id != kept))
        )
    duplicate_groups.sort(key=lambda g: g[0])

    unique = [art for art in articles if art.id in kept_ids]
    report = DedupReport(
        retrieved_count=len(articles),
        unique_count=len(unique),
        duplicate_groups=duplicate_groups,
    )
    return unique, report
