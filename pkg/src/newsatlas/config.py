"""Pipeline configuration: TOML sections, validated before any work runs.

Unknown keys are rejected outright, every numeric parameter must be
positive, and a seed is mandatory.  Shipped defaults are the full-corpus
values (vocabulary 20000/min count 5, 10-d embedding with 5 neighbours and
1000 epochs, minimum cluster size 250); desk-scale overrides live in
example config files, not here.
"""

from __future__ import annotations

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from dataclasses import dataclass, field

__all__ = ["ConfigError", "PipelineConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _positive(kind):
    def check(value, key):
        if not isinstance(value, kind) or isinstance(value, bool) or value <= 0:
            raise ConfigError(f"config key {key!r} must be a positive {kind.__name__}", key)
        return value

    return check


def _fraction(value, key):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not (0 < value <= 1):
        raise ConfigError(f"config key {key!r} must be in (0, 1]", key)
    return float(value)


def _string(value, key):
    if not isinstance(value, str):
        raise ConfigError(f"config key {key!r} must be a string", key)
    return value


def _int_list(value, key):
    if (
        not isinstance(value, list)
        or not value
        or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in value)
    ):
        raise ConfigError(f"config key {key!r} must be a non-empty list of positive ints", key)
    return list(value)


def _seed(value, key):
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ConfigError(f"config key {key!r} must be a non-negative integer", key)
    return value

def _prob(value, key):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not (0 <= value <= 1):
        raise ConfigError(f"config key {key!r} must be in [0, 1]", key)
    return float(value)


def _nonneg_float(value, key):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
        raise ConfigError(f"config key {key!r} must be a non-negative number", key)
    return float(value)


_SCHEMA = {
    "paths": {
        "corpus": (_string, None),
        "gazetteer": (_string, None),
        "zones": (_string, None),
        "lexicon": (_string, None),
        "blocklist": (_string, None),
        "annotations": (_string, None),
        "theme_map": (_string, None),
        "output": (_string, "out"),
    },
    "dedup": {
        "min_shared_fraction": (_fraction, 0.5),
        "min_sentence_words": (_positive(int), 10),
        "boilerplate_doc_count": (_positive(int), 20),
    },
    "preprocess": {
        "max_distinct_mentions": (_positive(int), 40),
    },
    "vectorize": {
        "vocab_max_size": (_positive(int), 20000),
        "vocab_min_count": (_positive(int), 5),
    },
    "umap": {
        "dim": (_positive(int), 10),
        "n_neighbors": (_positive(int), 5),
        "epochs": (_positive(int), 1000),
    },
    "hdbscan": {
        "min_cluster_size": (_positive(int), 250),
        "min_samples": (_positive(int), 5),
    },
    "run": {
        "seed": (_seed, None),
    },
    "synth": {
        "n_articles": (_positive(int), 1000),
        "n_topics": (_positive(int), 8),
        "core_vocab_size": (_positive(int), 40),
        "filler_vocab_size": (_positive(int), 150),
        "core_mass": (_fraction, 0.7),
        "zone_rows": (_positive(int), 5),
        "zone_cols": (_positive(int), 5),
        "places_per_zone": (_positive(int), 3),
        "mention_rate": (_nonneg_float, 2.5),
        "crime_topic": (_seed, 0),
        "broad_mention_prob": (_prob, 0.25),
        "n_annotation_pairs": (_positive(int), 600),
        "annotation_bias": (_nonneg_float, 25.0),
    },
    "grid": {
        "vocab_sizes": (_int_list, [1000, 2000]),
        "umap_dims": (_int_list, [5, 10]),
        "umap_neighbors": (_int_list, [5, 15]),
        "epochs": (_positive(int), 200),
        "min_cluster_size": (_positive(int), 25),
    },
}

_REQUIRED = {("run", "seed")}


@dataclass
class PipelineConfig:
    sections: dict[str, dict] = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def seed(self) -> int:
        return self.sections["run"]["seed"]

    def path(self, name) -> str | None:
        return self.sections["paths"].get(name)


def parse_config(raw: dict) -> PipelineConfig:
    """Validate a parsed TOML mapping against the schema."""
    sections: dict[str, dict] = {}
    for section_name, content in raw.items():
        if section_name not in _SCHEMA:
            raise ConfigError(f"unknown config section {section_name!r}", section_name)
        if not isinstance(content, dict):
            raise ConfigError(f"config section {section_name!r} must be a table", section_name)
        schema = _SCHEMA[section_name]
        parsed = {}
        for key, value in content.items():
            if key not in schema:
                raise ConfigError(
                    f"unknown config key {section_name}.{key}", f"{section_name}.{key}"
                )
            check, _default = schema[key]
            parsed[key] = check(value, f"{section_name}.{key}")
        sections[section_name] = parsed
    for section_name, schema in _SCHEMA.items():
        parsed = sections.setdefault(section_name, {})
        for key, (check, default) in schema.items():
            if key not in parsed:
                if (section_name, key) in _REQUIRED:
                    raise ConfigError(
                        f"missing required config key {section_name}.{key}",
                        f"{section_name}.{key}",
                    )
                if default is not None:
                    parsed[key] = default
    return PipelineConfig(sections=sections)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(raw)
