"""Synthetic corpora with planted topics, places and zone statistics.

Every pipeline stage gets a ground-truth oracle at desk scale: articles
draw tokens from disjoint per-topic core vocabularies plus shared filler;
place mentions are inserted as extra sentences with recorded spans, with
the mention's zone drawn from a planted zone-topic affinity matrix; zones
are an axis-aligned grid of squares whose names exercise the
neighbourhood rollup; and a synthetic crime rate follows one designated
topic's affinity.  Generation is single-threaded and byte-identical for a
fixed seed.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta

import numpy as np

from .evaluate import Stratum, sample_annotation_pairs, save_annotations
from .geoparse import DataZone, save_zones_geojson

__all__ = ["SynthSpec", "SynthResult", "build", "generate"]

_SYLLABLES = [
    c + v
    for c in "bdfgklmnprstvz"
    for v in ("a", "e", "i", "o", "u")
]

_PLACE_TYPES = [
    ("Road", "street"),
    ("Street", "street"),
    ("Park", "park"),
    ("Lane", "street"),
    ("Way", "street"),
]

BROAD_PLACE = "Blockton"


@dataclass
class SynthSpec:
    seed: int
    n_articles: int = 1000
    n_topics: int = 8
    core_vocab_size: int = 40
    filler_vocab_size: int = 150
    core_mass: float = 0.7
    zone_grid: tuple[int, int] = (5, 5)
    places_per_zone: int = 3
    mention_rate: float = 2.5
    crime_topic: int = 0
    broad_mention_prob: float = 0.25
    body_tokens: tuple[int, int] = (90, 150)
    n_annotation_pairs: int = 600
    annotation_bias: float = 25.0

    def validate(self):
        if self.n_articles < 1 or self.n_topics < 2:
            raise ValueError("need at least 1 article and 2 topics")
        if not (0.0 < self.core_mass < 1.0):
            raise ValueError("core_mass must be in (0, 1)")
        if not (0 <= self.crime_topic < self.n_topics):
            raise ValueError("crime_topic out of range")
        if self.zone_grid[0] < 1 or self.zone_grid[1] < 1:
            raise ValueError("zone grid must be non-empty")

    @property
    def n_zones(self) -> int:
        return self.zone_grid[0] * self.zone_grid[1]


@dataclass
class SynthResult:
    articles: list[dict]
    gazetteer_records: list[dict]
    zones: list[DataZone]
    ground_truth: dict
    annotations: list = field(default_factory=list)


def _pseudowords(rng, count: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < count:
        word = "".join(rng.choice(_SYLLABLES) for _ in range(3))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _affinity_matrix(rng, n_zones: int, n_topics: int, ratio: float = 0.55) -> np.ndarray:
    """Planted zone-topic affinities: permuted geometric rows, Sinkhorn-balanced.

    Column balancing keeps every topic equally likely overall, so the
    per-zone topic posterior shares each row's ranking; the final pass
    renormalises rows to sum to exactly 1.
    """
    base = ratio ** np.arange(n_topics)
    rows = np.empty((n_zones, n_topics))
    for z in range(n_zones):
        rows[z] = base[rng.permutation(n_topics)]
    for _ in range(50):
        rows /= rows.sum(axis=0, keepdims=True)
        rows /= rows.sum(axis=1, keepdims=True)
    return rows


def _zone_layout(spec: SynthSpec, neigh_stems: list[str]):
    """Grid squares named to exercise the rollup: "<Base> - NN" plus one plain name."""
    rows_n, cols_n = spec.zone_grid
    lat0, lon0, step = 55.90, -3.30, 0.01
    n = spec.n_zones
    # Groups of up to three suffixed zones, plus one plain-named singleton
    # so both rollup branches get exercised.
    group_sizes = []
    remaining = n - 1
    while remaining > 0:
        size = min(3, remaining)
        group_sizes.append(size)
        remaining -= size
    group_sizes.append(1)
    zone_names = []
    for g, size in enumerate(group_sizes):
        stem = neigh_stems[g % len(neigh_stems)].capitalize()
        if size == 1:
            zone_names.append(stem)
        else:
            zone_names.extend(f"{stem} - {k + 1:02d}" for k in range(size))
    zones = []
    for idx in range(n):
        r, c = divmod(idx, cols_n)
        south, west = lat0 + r * step, lon0 + c * step
        ring = (
            (south, west),
            (south, west + step),
            (south + step, west + step),
            (south + step, west),
            (south, west),
        )
        zones.append(DataZone(id=f"Z{idx:02d}", name=zone_names[idx], polygon=ring))
    bounds = {
        f"Z{idx:02d}": (
            lat0 + (idx // cols_n) * step,
            lon0 + (idx % cols_n) * step,
            step,
        )
        for idx in range(n)
    }
    centre = (lat0 + rows_n * step / 2.0, lon0 + cols_n * step / 2.0)
    return zones, bounds, centre


def build(spec: SynthSpec) -> SynthResult:
    """Generate the corpus, gazetteer, zones and ground truth in memory."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    taken: set[str] = set()
    topic_cores = [
        _pseudowords(rng, spec.core_vocab_size, taken) for _ in range(spec.n_topics)
    ]
    filler = _pseudowords(rng, spec.filler_vocab_size, taken)
    neigh_stems = _pseudowords(rng, 12, taken)
    place_stems = _pseudowords(rng, spec.n_zones * spec.places_per_zone, taken)

    zones, bounds, centre = _zone_layout(spec, neigh_stems)
    affinity = _affinity_matrix(rng, spec.n_zones, spec.n_topics)
    zone_ids = [zone.id for zone in zones]

    gazetteer_records = []
    places_by_zone: dict[str, list[dict]] = {zid: [] for zid in zone_ids}
    stem_iter = iter(place_stems)
    for z_idx, zid in enumerate(zone_ids):
        south, west, step = bounds[zid]
        for p in range(spec.places_per_zone):
            stem = next(stem_iter)
            type_name, kind = _PLACE_TYPES[(z_idx * spec.places_per_zone + p) % len(_PLACE_TYPES)]
            lat = south + step * (0.15 + 0.7 * rng.random())
            lon = west + step * (0.15 + 0.7 * rng.random())
            record = {
                "id": f"P{z_idx:02d}{p}",
                "name": f"{stem.capitalize()} {type_name}",
                "lat": round(lat, 6),
                "lon": round(lon, 6),
                "postcode_district": f"SZ{z_idx:02d}",
                "kind": kind,
                "priority": "",
            }
            gazetteer_records.append(record)
            places_by_zone[zid].append(record)
    gazetteer_records.append(
        {
            "id": "P-CITY",
            "name": BROAD_PLACE,
            "lat": round(centre[0], 6),
            "lon": round(centre[1], 6),
            "postcode_district": "SZ99",
            "kind": "settlement",
            "priority": "",
        }
    )

    # Balanced topic assignment, shuffled.
    topics = np.repeat(
        np.arange(spec.n_topics), int(np.ceil(spec.n_articles / spec.n_topics))
    )[: spec.n_articles]
    rng.shuffle(topics)

    # P(zone | topic) follows the affinity columns.
    zone_given_topic = affinity / affinity.sum(axis=0, keepdims=True)

    articles = []
    truth_topics: dict[str, int] = {}
    truth_mentions: dict[str, list[dict]] = {}
    truth_broad: dict[str, int] = {}  # article id -> broad mention count
    zone_articles: dict[str, set[str]] = {zid: set() for zid in zone_ids}
    start_date = date(2017, 1, 1)

    for i in range(spec.n_articles):
        art_id = f"art-{i:04d}"
        topic = int(topics[i])
        core = topic_cores[topic]

        def draw_token():
            if rng.random() < spec.core_mass:
                return core[int(rng.integers(len(core)))]
            return filler[int(rng.integers(len(filler)))]

        n_body = int(rng.integers(spec.body_tokens[0], spec.body_tokens[1] + 1))
        sentences: list[tuple[list[str], int | None]] = []
        used = 0
        while used < n_body:
            length = int(rng.integers(8, 15))
            sentences.append(([draw_token() for _ in range(length)], None))
            used += length

        n_mentions = max(1, min(6, int(rng.poisson(spec.mention_rate))))
        mention_info = []
        for _ in range(n_mentions):
            z_idx = int(rng.choice(spec.n_zones, p=zone_given_topic[:, topic]))
            zid = zone_ids[z_idx]
            place = places_by_zone[zid][int(rng.integers(spec.places_per_zone))]
            words = [filler[int(rng.integers(len(filler)))] for _ in range(7)]
            tokens = words[:4] + [place["name"]] + words[4:]
            pos = int(rng.integers(0, len(sentences) + 1))
            sentences.insert(pos, (tokens, 4))
            mention_info.append((pos, place, zid))
        if rng.random() < spec.broad_mention_prob:
            words = [filler[int(rng.integers(len(filler)))] for _ in range(7)]
            tokens = words[:4] + [BROAD_PLACE] + words[4:]
            pos = int(rng.integers(0, len(sentences) + 1))
            sentences.insert(pos, (tokens, None))  # broad: no span tracked
            truth_broad[art_id] = 1

        # Mention sentence indexes shift as later insertions land before them.
        rendered = []
        offsets = []
        cursor = 0
        for tokens, place_at in sentences:
            text_tokens = list(tokens)
            text_tokens[0] = text_tokens[0].capitalize()
            sent = " ".join(text_tokens) + "."
            if place_at is not None:
                prefix = " ".join(text_tokens[:place_at])
                start = cursor + len(prefix) + (1 if prefix else 0)
                offsets.append((start, start + len(tokens[place_at])))
            else:
                offsets.append(None)
            rendered.append(sent)
            cursor += len(sent) + 1  # joined by single spaces
        body = " ".join(rendered)

        # Insertion positions shifted as later sentences landed before
        # earlier ones, so recover each mention's final sentence by scanning
        # for an unclaimed sentence carrying its place name.
        mentions_out = []
        taken_sent: set[int] = set()
        for _pos, place, zid in mention_info:
            for s_idx, (tokens, place_at) in enumerate(sentences):
                if s_idx in taken_sent or place_at is None:
                    continue
                if tokens[place_at] == place["name"]:
                    start, end = offsets[s_idx]
                    mentions_out.append(
                        {
                            "surface": place["name"],
                            "start": start,
                            "end": end,
                            "zone": zid,
                            "entry": place["id"],
                        }
                    )
                    taken_sent.add(s_idx)
                    zone_articles[zid].add(art_id)
                    break

        title_tokens = [core[int(rng.integers(len(core)))] for _ in range(5)]
        title_tokens[0] = title_tokens[0].capitalize()
        published = start_date + timedelta(days=int(rng.integers(0, 1827)))
        articles.append(
            {
                "id": art_id,
                "title": " ".join(title_tokens),
                "body": body,
                "date": published.isoformat(),
                "keywords": [f"kw-{topic}"],
            }
        )
        truth_topics[art_id] = topic
        truth_mentions[art_id] = mentions_out

    zone_empirical = {}
    for zid in zone_ids:
        counts = [0] * spec.n_topics
        for art_id in zone_articles[zid]:
            counts[truth_topics[art_id]] += 1
        total = sum(counts)
        zone_empirical[zid] = (
            [c / total for c in counts] if total else [0.0] * spec.n_topics
        )

    crime_raw = {
        zid: int(round(8000.0 * affinity[z, spec.crime_topic]))
        for z, zid in enumerate(zone_ids)
    }
    crime_order = sorted(zone_ids, key=lambda z: (crime_raw[z], z))
    suppressed = set(crime_order[:2])
    zones = [
        DataZone(
            id=zone.id,
            name=zone.name,
            polygon=zone.polygon,
            crime_rate=None if zone.id in suppressed else crime_raw[zone.id],
        )
        for zone in zones
    ]

    ground_truth = {
        "spec": asdict(spec),
        "topic_names": [f"kw-{t}" for t in range(spec.n_topics)],
        "topics": truth_topics,
        "mentions": truth_mentions,
        "broad_mentions": truth_broad,
        "zone_article_ids": {z: sorted(zone_articles[z]) for z in zone_ids},
        "zone_topic_affinity": {z: list(map(float, affinity[i])) for i, z in enumerate(zone_ids)},
        "zone_topic_empirical": zone_empirical,
        "crime_rate_raw": crime_raw,
        "crime_suppressed": sorted(suppressed),
        "crime_topic": spec.crime_topic,
    }

    result = SynthResult(
        articles=articles,
        gazetteer_records=gazetteer_records,
        zones=zones,
        ground_truth=ground_truth,
    )

    from .corpus import Article

    article_objs = [
        Article(
            id=a["id"],
            title=a["title"],
            body=a["body"],
            published=date.fromisoformat(a["date"]),
            keywords=list(a["keywords"]),
        )
        for a in articles
    ]
    pairs = sample_annotation_pairs(
        article_objs,
        min(spec.n_annotation_pairs, spec.n_articles * (spec.n_articles - 1) // 2),
        bias=spec.annotation_bias,
        seed=spec.seed + 7,
    )
    from .evaluate import AnnotatedPair

    result.annotations = [
        AnnotatedPair(
            article_a=a,
            article_b=b,
            stratum=Stratum.VERY if truth_topics[a] == truth_topics[b] else Stratum.NOT_RELATED,
        )
        for a, b in pairs
    ]
    return result


def generate(spec: SynthSpec, out_dir) -> dict[str, str]:
    """Write corpus.jsonl, gazetteer.csv, zones.geojson, ground_truth.json,
    annotations.csv and blocklist.txt under ``out_dir``; returns the paths."""
    result = build(spec)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "corpus": os.path.join(out_dir, "corpus.jsonl"),
        "gazetteer": os.path.join(out_dir, "gazetteer.csv"),
        "zones": os.path.join(out_dir, "zones.geojson"),
        "ground_truth": os.path.join(out_dir, "ground_truth.json"),
        "annotations": os.path.join(out_dir, "annotations.csv"),
        "blocklist": os.path.join(out_dir, "blocklist.txt"),
    }
    with open(paths["corpus"], "w", encoding="utf-8") as handle:
        for article in result.articles:
            handle.write(json.dumps(article, sort_keys=True) + "\n")
    with open(paths["gazetteer"], "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(
            handle,
            fieldnames=["id", "name", "lat", "lon", "postcode_district", "kind", "priority"],
        )
        writer.writeheader()
        writer.writerows(result.gazetteer_records)
    save_zones_geojson(result.zones, paths["zones"])
    with open(paths["ground_truth"], "w", encoding="utf-8") as handle:
        json.dump(result.ground_truth, handle, indent=2, sort_keys=True)
        handle.write("\n")
    save_annotations(result.annotations, paths["annotations"])
    with open(paths["blocklist"], "w", encoding="utf-8") as handle:
        handle.write(BROAD_PLACE + "\n")
    return paths
