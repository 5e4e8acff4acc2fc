"""Token stream preparation for clustering.

Text is lowercased, overlong tokens dropped, surrounding punctuation
trimmed, and closed-class function words removed via a bundled lexicon.
Location mentions are masked with a placeholder before tokenisation so
clusters cannot form around place names, and articles naming too many
distinct places (schedules, sports round-ups) are filtered out.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources

__all__ = [
    "PLACEHOLDER",
    "REMOVED_CATEGORIES",
    "TokenizedArticle",
    "normalize",
    "pos_filter",
    "load_function_word_lexicon",
    "load_blocklist",
    "mask_locations",
    "distinct_resolved_surfaces",
    "filter_articles",
]

PLACEHOLDER = "__LOC__"
_PLACEHOLDER_LOWER = PLACEHOLDER.lower()

REMOVED_CATEGORIES = frozenset(
    {
        "determiner",
        "conjunction",
        "symbol",
        "pronoun",
        "adverb",
        "adposition",
        "auxiliary",
    }
)


@dataclass
class TokenizedArticle:
    article_id: str
    tokens: list[str]
    masked_spans: list[tuple[str, int, int]] = field(default_factory=list)
    distinct_mention_count: int = 0


def normalize(text: str) -> list[str]:
    """Lowercased whitespace tokens with surrounding punctuation trimmed.

    Space-delimited tokens longer than 25 characters are dropped before any
    trimming.  Underscores survive trimming so the mask placeholder comes
    through as ``__loc__``.
    """
    tokens = []
    for word in text.split():
        if len(word) > 25:
            continue
        word = word.lower()
        left, right = 0, len(word)
        while left < right and not (word[left].isalnum() or word[left] == "_"):
            left += 1
        while right > left and not (word[right - 1].isalnum() or word[right - 1] == "_"):
            right -= 1
        if left < right:
            tokens.append(word[left:right])
    return tokens


def pos_filter(tokens: list[str], lexicon: dict[str, frozenset[str]]) -> list[str]:
    """Drop tokens whose lexicon categories are all removable.

    Unknown tokens are kept; so is any word the lexicon also marks with an
    open-class category.
    """
    return [
        tok
        for tok in tokens
        if tok not in lexicon or not lexicon[tok] <= REMOVED_CATEGORIES
    ]


def load_function_word_lexicon(path=None) -> dict[str, frozenset[str]]:
    """word -> POS-category set, from ``path`` or the bundled CSV."""
    if path is None:
        source = resources.files("newsatlas.data").joinpath("function_words.csv")
        text = source.read_text(encoding="utf-8")
        rows = list(csv.reader(text.splitlines()))
    else:
        with open(path, encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
    lexicon: dict[str, set[str]] = {}
    for row in rows:
        if not row or row[0].startswith("#") or row[0] == "word":
            continue
        word, category = row[0].strip().lower(), row[1].strip().lower()
        lexicon.setdefault(word, set()).add(category)
    return {word: frozenset(cats) for word, cats in lexicon.items()}


def load_blocklist(path=None) -> list[str]:
    """Broad-mention surfaces, one per line; defaults to ["Edinburgh"]."""
    if path is None:
        return ["Edinburgh"]
    with open(path, encoding="utf-8") as handle:
        return [line.strip() for line in handle if line.strip()]


def _merge_spans(spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for start, end in sorted(spans):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _mask_text(text: str, spans: list[tuple[int, int]]) -> str:
    out = []
    cursor = 0
    for start, end in spans:
        out.append(text[cursor:start])
        out.append(f" {PLACEHOLDER} ")
        cursor = end
    out.append(text[cursor:])
    return "".join(out)


def distinct_resolved_surfaces(mentions, blocklist=()) -> set[str]:
    """Normalised resolved surfaces of an article, minus broad mentions."""
    blocked = {" ".join(s.lower().split()) for s in blocklist}
    surfaces = set()
    for mention in mentions:
        if mention.resolved is None:
            continue
        surface = " ".join(mention.surface.lower().split())
        if surface in blocked:
            continue
        surfaces.add(surface)
    return surfaces


def mask_locations(article, mentions, blocklist=()) -> TokenizedArticle:
    """Tokenise the article with every mention span replaced by the placeholder.

    Overlapping or touching spans merge into a single placeholder.  All
    gazetteer mentions are masked, broad ones included; the blocklist only
    affects the distinct-mention count carried on the result.
    """
    by_source: dict[str, list[tuple[int, int]]] = {"title": [], "body": []}
    for mention in mentions:
        by_source[mention.source].append(mention.char_span)
    spans: list[tuple[str, int, int]] = []
    texts = {}
    for source, text in (("title", article.title), ("body", article.body)):
        merged = _merge_spans(by_source[source])
        spans.extend((source, s, e) for s, e in merged)
        texts[source] = _mask_text(text, merged)
    tokens = normalize(texts["title"]) + normalize(texts["body"])
    return TokenizedArticle(
        article_id=article.id,
        tokens=tokens,
        masked_spans=spans,
        distinct_mention_count=len(distinct_resolved_surfaces(mentions, blocklist)),
    )


def filter_articles(
    articles,
    mentions_by_article: dict[str, list],
    broad_blocklist=(),
    max_distinct_mentions: int = 40,
):
    """Articles whose distinct resolved surfaces stay within the limit.

    Blocklisted surfaces do not count towards the limit.
    """
    kept = []
    for article in articles:
        mentions = mentions_by_article.get(article.id, [])
        surfaces = distinct_resolved_surfaces(mentions, broad_blocklist)
        if len(surfaces) <= max_distinct_mentions:
            kept.append(article)
    return kept
