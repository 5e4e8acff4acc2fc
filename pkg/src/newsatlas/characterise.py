"""Location and neighbourhood topic profiles.

A location's profile is the plain average of the membership vectors of the
articles that mention it at least once; an article counts once however
often it repeats the mention.  Neighbourhood profiles apply the same
average to the union of the member zones' article sets (not an average of
zone profiles).  The noise slot is carried through and reported rather
than renormalised away, so locations with different outlier rates stay
comparable.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LocationProfile",
    "ThemeMap",
    "location_profile",
    "neighbourhood_profile",
    "theme_profile",
    "export_profiles",
    "suggest_theme_map",
    "load_theme_map",
]


@dataclass
class LocationProfile:
    location_id: str
    article_ids: list[str]  # the articles mentioning this location
    probs: np.ndarray  # over clusters, noise slot last

    @property
    def noise(self) -> float:
        return float(self.probs[-1])


@dataclass
class ThemeMap:
    themes: dict[str, frozenset[int]]

    def __post_init__(self):
        seen: set[int] = set()
        for name, ids in self.themes.items():
            overlap = seen & ids
            if overlap:
                raise ValueError(f"theme {name!r} reuses cluster ids {sorted(overlap)}")
            seen |= ids

    def theme_of(self, cluster_id: int) -> str | None:
        for name, ids in self.themes.items():
            if cluster_id in ids:
                return name
        return None


def _mean_membership(location_id, article_ids, memberships_by_id) -> LocationProfile | None:
    ids = sorted(set(article_ids))
    if not ids:
        return None
    rows = [memberships_by_id[aid].probs for aid in ids]
    return LocationProfile(
        location_id=location_id,
        article_ids=ids,
        probs=np.mean(np.asarray(rows, dtype=np.float64), axis=0),
    )


def location_profile(location_id, mention_index, memberships) -> LocationProfile | None:
    """Average membership of the articles mentioning ``location_id``.

    ``mention_index`` maps location id -> iterable of article ids (repeats
    allowed; they collapse to set semantics).  Returns None when nothing
    mentions the location.
    """
    by_id = {m.article_id: m for m in memberships} if not isinstance(memberships, dict) else memberships
    return _mean_membership(location_id, mention_index.get(location_id, ()), by_id)


def neighbourhood_profile(neighbourhood, mention_index, memberships) -> LocationProfile | None:
    """Profile over the union of the member zones' article sets."""
    by_id = {m.article_id: m for m in memberships} if not isinstance(memberships, dict) else memberships
    pooled: list[str] = []
    for zone_id in neighbourhood.zone_ids:
        pooled.extend(mention_index.get(zone_id, ()))
    return _mean_membership(neighbourhood.name, pooled, by_id)


def theme_profile(profile: LocationProfile, theme_map: ThemeMap) -> dict[str, float]:
    """Collapse cluster masses into theme masses.

    Unmapped clusters pool under "other"; the noise slot is reported
    separately under "noise".
    """
    masses = {name: 0.0 for name in theme_map.themes}
    masses["other"] = 0.0
    for cluster_id, mass in enumerate(profile.probs[:-1]):
        theme = theme_map.theme_of(cluster_id)
        masses[theme if theme is not None else "other"] += float(mass)
    masses["noise"] = profile.noise
    return masses


def suggest_theme_map(hierarchy) -> ThemeMap:
    """Draft theme map: one theme per deepest shared internal node.

    Groups selected clusters by their parent in the candidate hierarchy,
    naming each group "theme_<parent id>".  Meant as a starting point for
    a manually curated map.
    """
    groups: dict[int, set[int]] = {}
    for node in hierarchy.nodes:
        if node.cluster_id is not None:
            groups.setdefault(node.parent if node.parent is not None else -1, set()).add(
                node.cluster_id
            )
    return ThemeMap(
        themes={
            f"theme_{parent}": frozenset(ids) for parent, ids in sorted(groups.items())
        }
    )


def load_theme_map(path) -> ThemeMap:
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    return ThemeMap(themes={name: frozenset(ids) for name, ids in raw.items()})


def profiles_to_csv(profiles: list[LocationProfile], path) -> None:
    """CSV rows (location, cluster, prob); the noise slot is row "noise"."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["location", "cluster", "prob"])
        for profile in profiles:
            for cluster_id, mass in enumerate(profile.probs[:-1]):
                writer.writerow([profile.location_id, cluster_id, repr(float(mass))])
            writer.writerow([profile.location_id, "noise", repr(profile.noise)])


def profiles_from_csv(path) -> list[LocationProfile]:
    rows: dict[str, dict] = {}
    order: list[str] = []
    with open(path, encoding="utf-8", newline="") as handle:
        for record in csv.DictReader(handle):
            loc = record["location"]
            if loc not in rows:
                rows[loc] = {}
                order.append(loc)
            rows[loc][record["cluster"]] = float(record["prob"])
    profiles = []
    for loc in order:
        data = rows[loc]
        clusters = sorted(int(c) for c in data if c != "noise")
        probs = np.array([data[str(c)] for c in clusters] + [data["noise"]])
        profiles.append(LocationProfile(location_id=loc, article_ids=[], probs=probs))
    return profiles


def profiles_to_theme_json(
    profiles: list[LocationProfile], theme_map: ThemeMap, path
) -> None:
    payload = {}
    for profile in profiles:
        masses = theme_profile(profile, theme_map)
        payload[profile.location_id] = {
            "n_articles": len(profile.article_ids),
            "themes": {name: masses[name] for name in sorted(masses)},
        }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


_SVG_COLOURS = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
]


def profile_to_svg(profile: LocationProfile, path, labels=None) -> None:
    """Minimal pie chart; the noise slot gets an explicit grey wedge."""
    size, radius = 240, 100
    cx = cy = size / 2
    total = float(profile.probs.sum())
    if labels is None:
        labels = [f"cluster {i}" for i in range(len(profile.probs) - 1)] + ["noise"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">']
    angle = -math.pi / 2
    for i, mass in enumerate(profile.probs):
        frac = float(mass) / total if total > 0 else 0.0
        if frac <= 0.0:
            continue
        colour = "#999999" if i == len(profile.probs) - 1 else _SVG_COLOURS[i % len(_SVG_COLOURS)]
        if frac >= 1.0 - 1e-12:
            parts.append(f'<circle cx="{cx}" cy="{cy}" r="{radius}" fill="{colour}"/>')
            angle += 2 * math.pi
            continue
        end = angle + 2 * math.pi * frac
        x1, y1 = cx + radius * math.cos(angle), cy + radius * math.sin(angle)
        x2, y2 = cx + radius * math.cos(end), cy + radius * math.sin(end)
        large = 1 if frac > 0.5 else 0
        parts.append(
            f'<path d="M{cx:.3f},{cy:.3f} L{x1:.3f},{y1:.3f} '
            f'A{radius},{radius} 0 {large} 1 {x2:.3f},{y2:.3f} Z" '
            f'fill="{colour}"><title>{labels[i]}: {frac:.3f}</title></path>'
        )
        angle = end
    parts.append(f'<text x="{cx}" y="{size - 8}" text-anchor="middle" '
                 f'font-size="12">{profile.location_id}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts) + "\n")


def export_profiles(
    profiles: list[LocationProfile],
    out_dir,
    *,
    prefix: str = "profiles",
    theme_map: ThemeMap | None = None,
    svg: bool = False,
) -> list[str]:
    """Write profile artifacts under ``out_dir``; returns the paths written."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    csv_path = os.path.join(out_dir, f"{prefix}.csv")
    profiles_to_csv(profiles, csv_path)
    written.append(csv_path)
    if theme_map is not None:
        json_path = os.path.join(out_dir, f"{prefix}_themes.json")
        profiles_to_theme_json(profiles, theme_map, json_path)
        written.append(json_path)
    if svg:
        svg_dir = os.path.join(out_dir, f"{prefix}_svg")
        os.makedirs(svg_dir, exist_ok=True)
        for profile in profiles:
            safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in profile.location_id)
            svg_path = os.path.join(svg_dir, f"{safe}.svg")
            profile_to_svg(profile, svg_path)
            written.append(svg_path)
    return written
