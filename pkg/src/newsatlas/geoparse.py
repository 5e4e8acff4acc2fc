"""Gazetteer matching, georesolution and data-zone assignment.

Place mentions are found by case-insensitive longest match of gazetteer
names over token sequences of the article title and body.  Ambiguous
surfaces (one name, several gazetteer points) are resolved jointly per
article: starting from the priority-best candidate of every surface, one
round of coordinate descent picks, for each surface in turn, the candidate
minimising the summed great-circle distance to the current choices of all
other surfaces.  Resolved points map to statistical zones by even-odd ray
casting; zones sharing a base name roll up into neighbourhoods.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field

__all__ = [
    "GazetteerEntry",
    "Gazetteer",
    "LocationMention",
    "DataZone",
    "Neighbourhood",
    "GazetteerError",
    "build_gazetteer",
    "load_gazetteer_csv",
    "find_mentions",
    "resolve",
    "assign_data_zone",
    "zone_mention_counts",
    "rollup_neighbourhoods",
    "load_zones_geojson",
    "save_zones_geojson",
    "haversine_m",
    "point_in_polygon",
]

EARTH_RADIUS_M = 6_371_000.0

KINDS = ("settlement", "street", "building", "park", "other")
_KIND_PRIORITY = {kind: rank for rank, kind in enumerate(KINDS)}


class GazetteerError(ValueError):
    pass


@dataclass(frozen=True)
class GazetteerEntry:
    id: str
    name: str
    lat: float
    lon: float
    postcode_district: str
    kind: str = "other"
    priority: int | None = None

    @property
    def effective_priority(self) -> int:
        if self.priority is not None:
            return self.priority
        return _KIND_PRIORITY.get(self.kind, len(KINDS))


@dataclass
class LocationMention:
    article_id: str
    source: str  # "title" or "body"
    char_span: tuple[int, int]
    surface: str
    resolved: str | None = None  # GazetteerEntry id
    zone: str | None = None  # DataZone id


@dataclass(frozen=True)
class DataZone:
    id: str
    name: str
    polygon: tuple[tuple[float, float], ...]  # closed (lat, lon) ring
    crime_rate: int | None = None

    def __post_init__(self):
        if len(self.polygon) < 4:
            raise ValueError(f"zone {self.id}: polygon needs >= 4 vertices")
        if self.polygon[0] != self.polygon[-1]:
            raise ValueError(f"zone {self.id}: ring is not closed")
        if self.crime_rate is not None and self.crime_rate < 0:
            raise ValueError(f"zone {self.id}: negative crime_rate")


@dataclass
class Neighbourhood:
    name: str
    zone_ids: frozenset[str]


_NORM_WS = re.compile(r"\s+")


def _norm_name(name: str) -> str:
    return _NORM_WS.sub(" ", name.lower()).strip()


def _name_tokens(name: str) -> tuple[str, ...]:
    return tuple(_norm_name(name).split())


class Gazetteer:
    """Immutable index of place entries supporting longest-match lookup."""

    def __init__(self, entries: list[GazetteerEntry]):
        self.entries = list(entries)
        self.by_id = {e.id: e for e in self.entries}
        self._by_tokens: dict[tuple[str, ...], list[GazetteerEntry]] = {}
        for entry in self.entries:
            self._by_tokens.setdefault(_name_tokens(entry.name), []).append(entry)
        for cands in self._by_tokens.values():
            cands.sort(key=lambda e: (e.effective_priority, e.id))
        self.max_tokens = max((len(t) for t in self._by_tokens), default=0)
        if self.entries:
            self.bbox = (
                min(e.lat for e in self.entries),
                max(e.lat for e in self.entries),
                min(e.lon for e in self.entries),
                max(e.lon for e in self.entries),
            )
        else:
            self.bbox = None

    def __len__(self):
        return len(self.entries)

    def candidates(self, tokens: tuple[str, ...]) -> list[GazetteerEntry]:
        """Entries whose name matches the token sequence, best priority first."""
        return list(self._by_tokens.get(tuple(tokens), []))


def build_gazetteer(records) -> tuple[Gazetteer, list[str]]:
    """Index gazetteer records, deduplicating per (name, postcode district).

    ``records`` are dicts with id, name, lat, lon, postcode_district and
    optional kind/priority.  Within one (normalised name, district) pair
    the entry with the lowest priority value wins, ties by lowest id.
    Records with out-of-range coordinates are rejected; the second return
    value lists one reason per rejected record.
    """
    rejected: list[str] = []
    best: dict[tuple[str, str], GazetteerEntry] = {}
    for record in records:
        try:
            lat = float(record["lat"])
            lon = float(record["lon"])
        except (KeyError, TypeError, ValueError):
            rejected.append(f"{record.get('id', '?')}: unparseable coordinates")
            continue
        if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
            rejected.append(f"{record.get('id', '?')}: coordinates out of range")
            continue
        raw_priority = record.get("priority")
        priority = None
        if raw_priority not in (None, ""):
            priority = int(raw_priority)
        entry = GazetteerEntry(
            id=str(record["id"]),
            name=str(record["name"]),
            lat=lat,
            lon=lon,
            postcode_district=str(record["postcode_district"]),
            kind=str(record.get("kind") or "other"),
            priority=priority,
        )
        key = (_norm_name(entry.name), entry.postcode_district)
        current = best.get(key)
        if current is None or (entry.effective_priority, entry.id) < (
            current.effective_priority,
            current.id,
        ):
            best[key] = entry
    entries = sorted(best.values(), key=lambda e: e.id)
    return Gazetteer(entries), rejected


def load_gazetteer_csv(path) -> tuple[Gazetteer, list[str]]:
    """Build a gazetteer from a CSV with columns id,name,lat,lon,postcode_district,kind,priority."""
    with open(path, encoding="utf-8", newline="") as handle:
        return build_gazetteer(csv.DictReader(handle))


def _tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Whitespace tokens as (core, start, end), punctuation trimmed from the core."""
    out = []
    for match in re.finditer(r"\S+", text):
        word = match.group()
        start, end = match.span()
        left = 0
        right = len(word)
        while left < right and not (word[left].isalnum() or word[left] == "_"):
            left += 1
        while right > left and not (word[right - 1].isalnum() or word[right - 1] == "_"):
            right -= 1
        if left == right:
            continue
        out.append((word[left:right].lower(), start + left, start + right))
    return out


def _match_in_text(article_id: str, source: str, text: str, gazetteer: Gazetteer):
    tokens = _tokenize_with_spans(text)
    candidates = []  # (length, start_token, end_char_span)
    for start in range(len(tokens)):
        limit = min(gazetteer.max_tokens, len(tokens) - start)
        for length in range(limit, 0, -1):
            seq = tuple(tok for tok, _, _ in tokens[start : start + length])
            if gazetteer.candidates(seq):
                candidates.append((length, start))
    # Longest match wins; on equal length the earlier start wins.
    candidates.sort(key=lambda c: (-c[0], c[1]))
    taken = [False] * len(tokens)
    mentions = []
    for length, start in candidates:
        if any(taken[start : start + length]):
            continue
        for i in range(start, start + length):
            taken[i] = True
        span = (tokens[start][1], tokens[start + length - 1][2])
        mentions.append(
            LocationMention(
                article_id=article_id,
                source=source,
                char_span=span,
                surface=text[span[0] : span[1]],
            )
        )
    mentions.sort(key=lambda m: m.char_span)
    return mentions


def find_mentions(article, gazetteer: Gazetteer) -> list[LocationMention]:
    """Unresolved gazetteer mentions in the article title and body."""
    return _match_in_text(article.id, "title", article.title, gazetteer) + _match_in_text(
        article.id, "body", article.body, gazetteer
    )


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in metres (haversine, R = 6371 km)."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def resolve(
    mentions: list[LocationMention], gazetteer: Gazetteer, article=None
) -> tuple[list[LocationMention], list[str]]:
    """Pick one gazetteer entry per distinct surface, in article context.

    All occurrences of a surface in one article resolve identically.
    Ambiguous surfaces start at their priority-best candidate; a single
    round of coordinate descent (surfaces in first-occurrence order) then
    re-picks each one to minimise the sum of haversine distances to the
    current choices of all other distinct surfaces.  Ties break by
    (distance, priority, id).  Surfaces with no candidates are left
    unresolved and reported.
    """
    order: list[tuple[str, ...]] = []
    surface_mentions: dict[tuple[str, ...], list[LocationMention]] = {}
    for mention in mentions:
        key = _name_tokens(mention.surface)
        if key not in surface_mentions:
            order.append(key)
            surface_mentions[key] = []
        surface_mentions[key].append(mention)

    candidates = {key: gazetteer.candidates(key) for key in order}
    unresolved = [key for key in order if not candidates[key]]
    chosen: dict[tuple[str, ...], GazetteerEntry] = {
        key: cands[0] for key, cands in candidates.items() if cands
    }

    resolvable = [key for key in order if candidates[key]]
    for key in resolvable:
        cands = candidates[key]
        if len(cands) == 1:
            continue
        others = [chosen[o] for o in resolvable if o != key]
        if not others:
            continue  # no anchors: stay at priority-best

        def objective(entry):
            return sum(
                haversine_m(entry.lat, entry.lon, o.lat, o.lon) for o in others
            )

        chosen[key] = min(
            cands, key=lambda e: (objective(e), e.effective_priority, e.id)
        )

    for key, picks in surface_mentions.items():
        entry = chosen.get(key)
        for mention in picks:
            mention.resolved = entry.id if entry else None
    report = [" ".join(key) for key in unresolved]
    return mentions, report


def point_in_polygon(lat: float, lon: float, ring) -> bool:
    """Even-odd ray-casting containment test for a closed (lat, lon) ring.

    Points exactly on an edge or vertex count as inside, so that edge
    ownership can be decided by the caller's tie-break.
    """
    n = len(ring) - 1  # last vertex repeats the first
    x, y = lon, lat
    inside = False
    for i in range(n):
        y1, x1 = ring[i]
        y2, x2 = ring[i + 1]
        if _on_segment(x, y, x1, y1, x2, y2):
            return True
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def _on_segment(x, y, x1, y1, x2, y2, eps=1e-12) -> bool:
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    scale = max(abs(x2 - x1), abs(y2 - y1), 1.0)
    if abs(cross) > eps * scale:
        return False
    if min(x1, x2) - eps <= x <= max(x1, x2) + eps and (
        min(y1, y2) - eps <= y <= max(y1, y2) + eps
    ):
        return True
    return False


def assign_data_zone(point: tuple[float, float], zones: list[DataZone]) -> str | None:
    """Zone id containing ``point`` (lat, lon), or None.

    Edge and vertex points belong to the touching zone with the smallest
    id; interior containment is decided by even-odd ray casting.
    """
    lat, lon = point
    hits = [zone.id for zone in zones if point_in_polygon(lat, lon, zone.polygon)]
    if not hits:
        return None
    return min(hits)


def zone_mention_counts(
    mentions: list[LocationMention], blocklist=()
) -> dict[str, int]:
    """Resolved-mention counts per zone, skipping blocklisted surfaces."""
    blocked = {_norm_name(s) for s in blocklist}
    counts: dict[str, int] = {}
    for mention in mentions:
        if mention.zone is None:
            continue
        if _norm_name(mention.surface) in blocked:
            continue
        counts[mention.zone] = counts.get(mention.zone, 0) + 1
    return counts


_ZONE_SUFFIX = re.compile(r"\s*-\s*\d+$")


def base_zone_name(name: str) -> str:
    return _ZONE_SUFFIX.sub("", name).strip()


def rollup_neighbourhoods(zones: list[DataZone]) -> list[Neighbourhood]:
    """Group zones into neighbourhoods by base name ("Oxgangs - 01" -> "Oxgangs")."""
    grouped: dict[str, set[str]] = {}
    for zone in zones:
        grouped.setdefault(base_zone_name(zone.name), set()).add(zone.id)
    return [
        Neighbourhood(name=name, zone_ids=frozenset(ids))
        for name, ids in sorted(grouped.items())
    ]


def load_zones_geojson(path) -> list[DataZone]:
    """Read zones from a GeoJSON FeatureCollection of Polygons.

    GeoJSON coordinates are [lon, lat]; they are swapped into the internal
    (lat, lon) vertex order.  A null crime_rate means the statistic was
    suppressed.
    """
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    zones = []
    for feature in raw["features"]:
        geometry = feature["geometry"]
        if geometry["type"] != "Polygon":
            raise ValueError(f"unsupported geometry {geometry['type']!r}")
        ring = tuple((lat, lon) for lon, lat in geometry["coordinates"][0])
        props = feature["properties"]
        rate = props.get("crime_rate")
        zones.append(
            DataZone(
                id=str(props["id"]),
                name=str(props["name"]),
                polygon=ring,
                crime_rate=None if rate is None else int(rate),
            )
        )
    return zones


def save_zones_geojson(zones: list[DataZone], path) -> None:
    features = []
    for zone in zones:
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "id": zone.id,
                    "name": zone.name,
                    "crime_rate": zone.crime_rate,
                },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[lon, lat] for lat, lon in zone.polygon]],
                },
            }
        )
    payload = {"type": "FeatureCollection", "features": features}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
