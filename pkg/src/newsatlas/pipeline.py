"""Stage orchestration: wiring, artifact files and content-hash caching.

Each stage reads its inputs from files, writes its outputs under
``<output>/<stage>/`` and records a manifest keyed by the SHA-256 of the
input files plus the relevant parameters.  Re-running an unchanged stage
is a logged cache hit; changing a parameter invalidates the key.  Stages
recursively ensure their upstream stages first, so ``run cluster`` on a
fresh output directory executes the whole chain up to clustering.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil

import numpy as np

from . import characterise, cluster, corpus, evaluate, geoparse, preprocess, synthgen
from .config import PipelineConfig
from .embedding import Embedding, load_embedding, save_embedding, umap_reduce
from .vectorize import SparseVector, Vocabulary, build_vocabulary, tfidf

log = logging.getLogger("newsatlas")

STAGES = (
    "synth",
    "ingest",
    "dedup",
    "geoparse",
    "vectorize",
    "cluster",
    "profile",
    "evaluate",
    "grid",
    "report",
)

_DEPS = {
    "synth": (),
    "ingest": (),
    "dedup": ("ingest",),
    "geoparse": ("dedup",),
    "vectorize": ("geoparse",),
    "cluster": ("vectorize",),
    "profile": ("cluster", "geoparse"),
    "evaluate": ("cluster", "profile"),
    "grid": ("vectorize",),
    "report": ("cluster", "profile", "evaluate"),
}


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Pipeline:
    def __init__(self, config: PipelineConfig, *, svg: bool = False, single_thread: bool = True):
        self.cfg = config
        self.svg = svg
        # All stages are sequential and deterministic; the flag is accepted
        # for interface stability and pins the only supported mode.
        self.single_thread = single_thread
        self.out = config.path("output") or "out"

    # -- plumbing ---------------------------------------------------------

    def stage_dir(self, stage: str) -> str:
        path = os.path.join(self.out, stage)
        os.makedirs(path, exist_ok=True)
        return path

    def _input(self, name: str, synth_file: str | None = None) -> str:
        """Resolve a configured input path, defaulting to the synth artifact."""
        explicit = self.cfg.path(name)
        if explicit:
            return explicit
        if synth_file is not None:
            return os.path.join(self.out, "synth", synth_file)
        return ""

    def run(self, stage: str) -> bool:
        """Run ``stage`` (dependencies first); False when it was a cache hit."""
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        if stage == "ingest" and not self.cfg.path("corpus"):
            # Inputs default to the synth artifacts, so make sure they exist.
            self.run("synth")
        for dep in _DEPS[stage]:
            self.run(dep)
        return getattr(self, f"_stage_{stage}")()

    def _execute(self, stage, inputs, params, outputs, fn) -> bool:
        for path in inputs:
            if not os.path.exists(path):
                raise StageError(stage, f"missing input file {path}")
        key = {
            "inputs": {str(p): _sha256(p) for p in sorted(str(x) for x in inputs)},
            "params": params,
        }
        manifest_path = os.path.join(self.stage_dir(stage), "manifest.json")
        if os.path.exists(manifest_path):
            try:
                with open(manifest_path, encoding="utf-8") as handle:
                    manifest = json.load(handle)
            except (OSError, json.JSONDecodeError):
                manifest = None
            if (
                manifest
                and manifest.get("key") == key
                and all(os.path.exists(p) for p in manifest.get("outputs", []))
            ):
                log.info("stage %s: cache hit", stage)
                return False
        log.info("stage %s: running", stage)
        try:
            fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
        with open(manifest_path, "w", encoding="utf-8") as handle:
            json.dump(
                {"stage": stage, "key": key, "outputs": [str(p) for p in outputs]},
                handle,
                indent=2,
                sort_keys=True,
            )
            handle.write("\n")
        return True

    # -- artifact readers -------------------------------------------------

    def _load_articles(self, path) -> list[corpus.Article]:
        return corpus.load_corpus(path, "jsonl")

    def _load_mentions(self) -> dict[str, list[geoparse.LocationMention]]:
        path = os.path.join(self.out, "geoparse", "mentions.jsonl")
        mentions: dict[str, list[geoparse.LocationMention]] = {}
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                record = json.loads(line)
                out = []
                for m in record["mentions"]:
                    out.append(
                        geoparse.LocationMention(
                            article_id=record["article_id"],
                            source=m["source"],
                            char_span=(m["start"], m["end"]),
                            surface=m["surface"],
                            resolved=m["entry"],
                            zone=m["zone"],
                        )
                    )
                mentions[record["article_id"]] = out
        return mentions

    def _load_tokenized(self) -> list[preprocess.TokenizedArticle]:
        path = os.path.join(self.out, "vectorize", "tokenized.jsonl")
        docs = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                record = json.loads(line)
                docs.append(
                    preprocess.TokenizedArticle(
                        article_id=record["article_id"],
                        tokens=record["tokens"],
                        distinct_mention_count=record["distinct_mention_count"],
                    )
                )
        return docs

    def _load_vectors(self) -> tuple[list[str], list[SparseVector], Vocabulary]:
        vec_path = os.path.join(self.out, "vectorize", "vectors.npz")
        vocab_path = os.path.join(self.out, "vectorize", "vocab.json")
        raw = np.load(vec_path, allow_pickle=False)
        indptr, indices, data = raw["indptr"], raw["indices"], raw["data"]
        ids = [str(x) for x in raw["article_ids"]]
        vectors = [
            SparseVector(indices[indptr[i] : indptr[i + 1]], data[indptr[i] : indptr[i + 1]])
            for i in range(len(ids))
        ]
        with open(vocab_path, encoding="utf-8") as handle:
            vocab_raw = json.load(handle)
        vocab = Vocabulary(terms=vocab_raw["terms"], doc_freq=vocab_raw["doc_freq"])
        return ids, vectors, vocab

    def _load_memberships(self) -> list[cluster.ArticleMembership]:
        path = os.path.join(self.out, "cluster", "memberships.csv")
        out = []
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            next(reader)
            for row in reader:
                out.append(
                    cluster.ArticleMembership(
                        article_id=row[0],
                        probs=np.array([float(x) for x in row[1:]]),
                    )
                )
        return out

    def _load_labels(self) -> dict[str, int]:
        path = os.path.join(self.out, "cluster", "labels.csv")
        labels = {}
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            next(reader)
            for row in reader:
                labels[row[0]] = int(row[1])
        return labels

    # -- stages -----------------------------------------------------------

    def _stage_synth(self) -> bool:
        out_dir = self.stage_dir("synth")
        synth_cfg = dict(self.cfg["synth"])
        spec = synthgen.SynthSpec(
            seed=self.cfg.seed,
            n_articles=synth_cfg["n_articles"],
            n_topics=synth_cfg["n_topics"],
            core_vocab_size=synth_cfg["core_vocab_size"],
            filler_vocab_size=synth_cfg["filler_vocab_size"],
            core_mass=synth_cfg["core_mass"],
            zone_grid=(synth_cfg["zone_rows"], synth_cfg["zone_cols"]),
            places_per_zone=synth_cfg["places_per_zone"],
            mention_rate=synth_cfg["mention_rate"],
            crime_topic=synth_cfg["crime_topic"],
            broad_mention_prob=synth_cfg["broad_mention_prob"],
            n_annotation_pairs=synth_cfg["n_annotation_pairs"],
            annotation_bias=synth_cfg["annotation_bias"],
        )
        outputs = [
            os.path.join(out_dir, name)
            for name in (
                "corpus.jsonl",
                "gazetteer.csv",
                "zones.geojson",
                "ground_truth.json",
                "annotations.csv",
                "blocklist.txt",
            )
        ]
        params = {"spec": {k: str(v) for k, v in sorted(vars(spec).items())}}
        return self._execute(
            "synth", [], params, outputs, lambda: synthgen.generate(spec, out_dir)
        )

    def _stage_ingest(self) -> bool:
        corpus_path = self._input("corpus", "corpus.jsonl")
        out_dir = self.stage_dir("ingest")
        articles_out = os.path.join(out_dir, "articles.jsonl")
        stats_out = os.path.join(out_dir, "stats.json")
        fmt = "csv" if str(corpus_path).endswith(".csv") else "jsonl"

        def work():
            articles = corpus.load_corpus(corpus_path, fmt)
            with open(articles_out, "w", encoding="utf-8") as handle:
                for art in articles:
                    handle.write(
                        json.dumps(
                            {
                                "id": art.id,
                                "title": art.title,
                                "body": art.body,
                                "date": art.published.isoformat(),
                                "keywords": art.keywords,
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
            with open(stats_out, "w", encoding="utf-8") as handle:
                json.dump(
                    {
                        "articles": len(articles),
                        "sentences": sum(len(a.sentences) for a in articles),
                    },
                    handle,
                    indent=2,
                    sort_keys=True,
                )
                handle.write("\n")

        return self._execute(
            "ingest",
            [corpus_path],
            {"format": fmt},
            [articles_out, stats_out],
            work,
        )

    def _stage_dedup(self) -> bool:
        src = os.path.join(self.out, "ingest", "articles.jsonl")
        out_dir = self.stage_dir("dedup")
        unique_out = os.path.join(out_dir, "unique.jsonl")
        report_out = os.path.join(out_dir, "dedup_report.json")
        params = dict(self.cfg["dedup"])

        def work():
            articles = self._load_articles(src)
            unique, report = corpus.dedup(
                articles,
                min_shared_fraction=params["min_shared_fraction"],
                min_sentence_words=params["min_sentence_words"],
                boilerplate_doc_count=params["boilerplate_doc_count"],
            )
            with open(unique_out, "w", encoding="utf-8") as handle:
                for art in unique:
                    handle.write(
                        json.dumps(
                            {
                                "id": art.id,
                                "title": art.title,
                                "body": art.body,
                                "date": art.published.isoformat(),
                                "keywords": art.keywords,
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
            with open(report_out, "w", encoding="utf-8") as handle:
                handle.write(report.to_json() + "\n")

        return self._execute("dedup", [src], params, [unique_out, report_out], work)

    def _stage_geoparse(self) -> bool:
        src = os.path.join(self.out, "dedup", "unique.jsonl")
        gaz_path = self._input("gazetteer", "gazetteer.csv")
        zones_path = self._input("zones", "zones.geojson")
        out_dir = self.stage_dir("geoparse")
        mentions_out = os.path.join(out_dir, "mentions.jsonl")
        unresolved_out = os.path.join(out_dir, "unresolved.json")
        counts_out = os.path.join(out_dir, "zone_counts.csv")
        blocklist_path = self._input("blocklist", "blocklist.txt")

        def work():
            articles = self._load_articles(src)
            gazetteer, rejected = geoparse.load_gazetteer_csv(gaz_path)
            zones = geoparse.load_zones_geojson(zones_path)
            blocklist = (
                preprocess.load_blocklist(blocklist_path)
                if blocklist_path and os.path.exists(blocklist_path)
                else preprocess.load_blocklist(None)
            )
            entry_zone: dict[str, str | None] = {}
            unresolved: dict[str, list[str]] = {}
            with open(mentions_out, "w", encoding="utf-8") as mh, open(
                counts_out, "w", encoding="utf-8", newline=""
            ) as ch:
                counts_writer = csv.writer(ch)
                counts_writer.writerow(["article_id", "zone", "count"])
                for art in articles:
                    mentions = geoparse.find_mentions(art, gazetteer)
                    mentions, missing = geoparse.resolve(mentions, gazetteer, art)
                    if missing:
                        unresolved[art.id] = missing
                    for m in mentions:
                        if m.resolved is None:
                            continue
                        if m.resolved not in entry_zone:
                            entry = gazetteer.by_id[m.resolved]
                            entry_zone[m.resolved] = geoparse.assign_data_zone(
                                (entry.lat, entry.lon), zones
                            )
                        m.zone = entry_zone[m.resolved]
                    mh.write(
                        json.dumps(
                            {
                                "article_id": art.id,
                                "mentions": [
                                    {
                                        "source": m.source,
                                        "start": m.char_span[0],
                                        "end": m.char_span[1],
                                        "surface": m.surface,
                                        "entry": m.resolved,
                                        "zone": m.zone,
                                    }
                                    for m in mentions
                                ],
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
                    for zone_id, count in sorted(
                        geoparse.zone_mention_counts(mentions, blocklist).items()
                    ):
                        counts_writer.writerow([art.id, zone_id, count])
            with open(unresolved_out, "w", encoding="utf-8") as handle:
                json.dump(
                    {"rejected_gazetteer_records": rejected, "unresolved": unresolved},
                    handle,
                    indent=2,
                    sort_keys=True,
                )
                handle.write("\n")

        inputs = [src, gaz_path, zones_path]
        if blocklist_path and os.path.exists(blocklist_path):
            inputs.append(blocklist_path)
        return self._execute(
            "geoparse",
            inputs,
            {},
            [mentions_out, unresolved_out, counts_out],
            work,
        )

    def _stage_vectorize(self) -> bool:
        src = os.path.join(self.out, "dedup", "unique.jsonl")
        mentions_path = os.path.join(self.out, "geoparse", "mentions.jsonl")
        lexicon_path = self.cfg.path("lexicon")
        blocklist_path = self._input("blocklist", "blocklist.txt")
        out_dir = self.stage_dir("vectorize")
        outputs = {
            name: os.path.join(out_dir, name)
            for name in (
                "tokenized.jsonl",
                "vocab.json",
                "vectors.npz",
                "embedding.csv",
                "embedding.bin",
            )
        }
        params = {
            **self.cfg["vectorize"],
            **{f"umap_{k}": v for k, v in self.cfg["umap"].items()},
            "max_distinct_mentions": self.cfg["preprocess"]["max_distinct_mentions"],
            "seed": self.cfg.seed,
        }

        def work():
            articles = self._load_articles(src)
            mentions = self._load_mentions()
            lexicon = preprocess.load_function_word_lexicon(lexicon_path or None)
            blocklist = (
                preprocess.load_blocklist(blocklist_path)
                if blocklist_path and os.path.exists(blocklist_path)
                else preprocess.load_blocklist(None)
            )
            kept = preprocess.filter_articles(
                articles,
                mentions,
                blocklist,
                max_distinct_mentions=params["max_distinct_mentions"],
            )
            docs = []
            for art in kept:
                doc = preprocess.mask_locations(art, mentions.get(art.id, []), blocklist)
                doc.tokens = preprocess.pos_filter(doc.tokens, lexicon)
                docs.append(doc)
            with open(outputs["tokenized.jsonl"], "w", encoding="utf-8") as handle:
                for doc in docs:
                    handle.write(
                        json.dumps(
                            {
                                "article_id": doc.article_id,
                                "tokens": doc.tokens,
                                "distinct_mention_count": doc.distinct_mention_count,
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
            vocab = build_vocabulary(
                docs,
                max_size=params["vocab_max_size"],
                min_count=params["vocab_min_count"],
            )
            with open(outputs["vocab.json"], "w", encoding="utf-8") as handle:
                json.dump(
                    {"terms": vocab.terms, "doc_freq": vocab.doc_freq},
                    handle,
                    sort_keys=True,
                )
                handle.write("\n")
            vectors = [tfidf(doc.tokens, vocab, len(docs)) for doc in docs]
            indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
            for i, vec in enumerate(vectors):
                indptr[i + 1] = indptr[i] + len(vec)
            np.savez(
                outputs["vectors.npz"],
                indptr=indptr,
                indices=np.concatenate([v.indices for v in vectors])
                if vectors
                else np.empty(0, dtype=np.int64),
                data=np.concatenate([v.values for v in vectors])
                if vectors
                else np.empty(0),
                article_ids=np.array([doc.article_id for doc in docs], dtype=np.str_),
                shape=np.array([len(vectors), len(vocab)], dtype=np.int64),
            )
            emb = umap_reduce(
                vectors,
                d=params["umap_dim"],
                n_neighbors=params["umap_n_neighbors"],
                epochs=params["umap_epochs"],
                seed=params["seed"],
                article_ids=[doc.article_id for doc in docs],
                n_terms=len(vocab),
            )
            save_embedding(
                emb,
                outputs["embedding.csv"],
                outputs["embedding.bin"],
                seed=params["seed"],
                params={k: v for k, v in params.items() if k.startswith("umap_")},
            )

        inputs = [src, mentions_path]
        if lexicon_path:
            inputs.append(lexicon_path)
        if blocklist_path and os.path.exists(blocklist_path):
            inputs.append(blocklist_path)
        return self._execute("vectorize", inputs, params, list(outputs.values()), work)

    def _stage_cluster(self) -> bool:
        emb_path = os.path.join(self.out, "vectorize", "embedding.csv")
        out_dir = self.stage_dir("cluster")
        outputs = {
            name: os.path.join(out_dir, name)
            for name in (
                "labels.csv",
                "memberships.csv",
                "condensed_tree.json",
                "hierarchy.dot",
                "hierarchy.json",
                "top_terms.json",
                "stabilities.json",
            )
        }
        params = dict(self.cfg["hdbscan"])

        def work():
            emb = load_embedding(emb_path)
            model = cluster.hdbscan_fit(
                emb,
                min_cluster_size=params["min_cluster_size"],
                min_samples=params["min_samples"],
            )
            memberships = cluster.soft_memberships(model, emb)
            with open(outputs["labels.csv"], "w", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(["article_id", "label", "persistence"])
                for aid, label, pers in zip(emb.article_ids, model.labels, model.persistence):
                    writer.writerow([aid, int(label), repr(float(pers))])
            k = model.n_clusters
            with open(outputs["memberships.csv"], "w", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(
                    ["article_id"] + [f"m{c}" for c in range(k)] + ["noise"]
                )
                for m in memberships:
                    writer.writerow([m.article_id] + [repr(float(x)) for x in m.probs])
            with open(outputs["condensed_tree.json"], "w", encoding="utf-8") as handle:
                json.dump(
                    [
                        {
                            "parent": e.parent,
                            "child": e.child,
                            "lambda": None if not np.isfinite(e.lam) else e.lam,
                            "child_size": e.child_size,
                        }
                        for e in model.condensed_tree
                    ],
                    handle,
                    sort_keys=True,
                )
                handle.write("\n")
            hierarchy = cluster.extract_hierarchy(model)
            with open(outputs["hierarchy.dot"], "w", encoding="utf-8") as handle:
                handle.write(hierarchy.to_dot())
            with open(outputs["hierarchy.json"], "w", encoding="utf-8") as handle:
                handle.write(hierarchy.to_json() + "\n")
            ids, vectors, vocab = self._load_vectors()
            order = {aid: i for i, aid in enumerate(ids)}
            aligned = [vectors[order[m.article_id]] for m in memberships]
            terms = {
                str(c): cluster.top_terms(c, memberships, aligned, vocab, k=30)
                for c in model.selected_clusters
            }
            with open(outputs["top_terms.json"], "w", encoding="utf-8") as handle:
                json.dump(terms, handle, indent=2, sort_keys=True)
                handle.write("\n")
            with open(outputs["stabilities.json"], "w", encoding="utf-8") as handle:
                json.dump(
                    {str(c): model.stabilities[c] for c in model.selected_clusters},
                    handle,
                    indent=2,
                    sort_keys=True,
                )
                handle.write("\n")

        return self._execute(
            "cluster",
            [emb_path, os.path.join(self.out, "vectorize", "vectors.npz")],
            params,
            list(outputs.values()),
            work,
        )

    def _build_zone_index(self, memberships) -> dict[str, list[str]]:
        """zone id -> article ids among clustered articles, broad mentions excluded."""
        blocklist_path = self._input("blocklist", "blocklist.txt")
        blocklist = (
            preprocess.load_blocklist(blocklist_path)
            if blocklist_path and os.path.exists(blocklist_path)
            else preprocess.load_blocklist(None)
        )
        known = {m.article_id for m in memberships}
        mentions = self._load_mentions()
        index: dict[str, list[str]] = {}
        for art_id, art_mentions in mentions.items():
            if art_id not in known:
                continue
            for zone_id in geoparse.zone_mention_counts(art_mentions, blocklist):
                index.setdefault(zone_id, []).append(art_id)
        return index

    def _stage_profile(self) -> bool:
        out_dir = self.stage_dir("profile")
        zones_path = self._input("zones", "zones.geojson")
        mentions_path = os.path.join(self.out, "geoparse", "mentions.jsonl")
        memberships_path = os.path.join(self.out, "cluster", "memberships.csv")
        hierarchy_path = os.path.join(self.out, "cluster", "hierarchy.json")
        theme_path = self.cfg.path("theme_map")
        outputs = [
            os.path.join(out_dir, "zone_profiles.csv"),
            os.path.join(out_dir, "neighbourhood_profiles.csv"),
            os.path.join(out_dir, "zone_profiles_themes.json"),
            os.path.join(out_dir, "neighbourhood_profiles_themes.json"),
            os.path.join(out_dir, "theme_map_used.json"),
        ]
        params = {"svg": self.svg}

        def work():
            memberships = self._load_memberships()
            by_id = {m.article_id: m for m in memberships}
            zones = geoparse.load_zones_geojson(zones_path)
            index = self._build_zone_index(memberships)
            zone_profiles = []
            for zone in zones:
                profile = characterise.location_profile(zone.id, index, by_id)
                if profile is not None:
                    zone_profiles.append(profile)
            neighbourhoods = geoparse.rollup_neighbourhoods(zones)
            neigh_profiles = []
            for neigh in neighbourhoods:
                profile = characterise.neighbourhood_profile(neigh, index, by_id)
                if profile is not None:
                    neigh_profiles.append(profile)
            if theme_path:
                theme_map = characterise.load_theme_map(theme_path)
            else:
                with open(hierarchy_path, encoding="utf-8") as handle:
                    nodes = json.load(handle)
                hierarchy = cluster.ClusterHierarchy(
                    nodes=[cluster.HierarchyNode(**n) for n in nodes]
                )
                theme_map = characterise.suggest_theme_map(hierarchy)
            with open(outputs[4], "w", encoding="utf-8") as handle:
                json.dump(
                    {name: sorted(ids) for name, ids in theme_map.themes.items()},
                    handle,
                    indent=2,
                    sort_keys=True,
                )
                handle.write("\n")
            characterise.profiles_to_csv(zone_profiles, outputs[0])
            characterise.profiles_to_csv(neigh_profiles, outputs[1])
            characterise.profiles_to_theme_json(zone_profiles, theme_map, outputs[2])
            characterise.profiles_to_theme_json(neigh_profiles, theme_map, outputs[3])
            if self.svg:
                characterise.export_profiles(
                    neigh_profiles, out_dir, prefix="neighbourhood_profiles", svg=True
                )

        inputs = [zones_path, mentions_path, memberships_path]
        if theme_path:
            inputs.append(theme_path)
        return self._execute("profile", inputs, params, outputs, work)

    def _stage_evaluate(self) -> bool:
        out_dir = self.stage_dir("evaluate")
        labels_path = os.path.join(self.out, "cluster", "labels.csv")
        zones_path = self._input("zones", "zones.geojson")
        annotations_path = self._input("annotations", "annotations.csv")
        zone_profiles_path = os.path.join(self.out, "profile", "zone_profiles.csv")
        outputs = [
            os.path.join(out_dir, "pair_eval.json"),
            os.path.join(out_dir, "error_partition.json"),
            os.path.join(out_dir, "correlation.csv"),
        ]

        def work():
            labels = self._load_labels()
            pairs = evaluate.load_annotations(annotations_path)
            pairs = [
                p for p in pairs if p.article_a in labels and p.article_b in labels
            ]
            confusion = evaluate.pair_confusion(labels, pairs)
            result = evaluate.macro_f1(confusion)
            partition = evaluate.error_partition(labels, pairs)
            with open(outputs[0], "w", encoding="utf-8") as handle:
                json.dump(
                    {
                        "confusion": {
                            "tp": confusion.tp,
                            "fp": confusion.fp,
                            "tn": confusion.tn,
                            "fn": confusion.fn,
                        },
                        "macro_f1": result.score,
                        "f1_same": result.f1_same,
                        "f1_diff": result.f1_diff,
                        "zero_support": list(result.zero_support),
                        "n_pairs": confusion.total,
                    },
                    handle,
                    indent=2,
                    sort_keys=True,
                )
                handle.write("\n")
            with open(outputs[1], "w", encoding="utf-8") as handle:
                json.dump(
                    {
                        "bucket_sizes": {
                            "outlier": len(partition.outlier),
                            "same_cluster": len(partition.same_cluster),
                            "different_cluster": len(partition.different_cluster),
                        },
                        "histograms": partition.histograms(),
                    },
                    handle,
                    indent=2,
                    sort_keys=True,
                )
                handle.write("\n")
            zones = geoparse.load_zones_geojson(zones_path)
            statistic = {zone.id: zone.crime_rate for zone in zones}
            zone_profiles = characterise.profiles_from_csv(zone_profiles_path)
            with open(outputs[2], "w", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(["cluster_id", "rho", "n"])
                try:
                    report = evaluate.spearman_per_cluster(zone_profiles, statistic)
                except ValueError as exc:
                    log.warning("correlation skipped: %s", exc)
                else:
                    for cluster_id, rho in report.ranked():
                        writer.writerow([cluster_id, repr(rho), report.n_zones])

        return self._execute(
            "evaluate",
            [labels_path, zones_path, annotations_path, zone_profiles_path],
            {},
            outputs,
            work,
        )

    def _stage_grid(self) -> bool:
        out_dir = self.stage_dir("grid")
        tokenized_path = os.path.join(self.out, "vectorize", "tokenized.jsonl")
        annotations_path = self._input("annotations", "annotations.csv")
        grid_out = os.path.join(out_dir, "grid.csv")
        params = dict(self.cfg["grid"])
        params["seed"] = self.cfg.seed
        params["min_samples"] = self.cfg["hdbscan"]["min_samples"]

        def work():
            docs = self._load_tokenized()
            pairs = evaluate.load_annotations(annotations_path)
            known = {doc.article_id for doc in docs}
            pairs = [p for p in pairs if p.article_a in known and p.article_b in known]
            rows = evaluate.grid_search(
                docs,
                pairs,
                params["vocab_sizes"],
                params["umap_dims"],
                params["umap_neighbors"],
                seed=params["seed"],
                min_count=self.cfg["vectorize"]["vocab_min_count"],
                umap_epochs=params["epochs"],
                min_cluster_size=params["min_cluster_size"],
                min_samples=params["min_samples"],
            )
            evaluate.save_grid_csv(rows, grid_out)

        return self._execute(
            "grid", [tokenized_path, annotations_path], params, [grid_out], work
        )

    def _stage_report(self) -> bool:
        out_dir = self.stage_dir("report")
        bundle = [
            ("cluster", "top_terms.json"),
            ("cluster", "hierarchy.dot"),
            ("cluster", "hierarchy.json"),
            ("cluster", "stabilities.json"),
            ("profile", "zone_profiles.csv"),
            ("profile", "neighbourhood_profiles.csv"),
            ("profile", "zone_profiles_themes.json"),
            ("profile", "neighbourhood_profiles_themes.json"),
            ("evaluate", "pair_eval.json"),
            ("evaluate", "error_partition.json"),
            ("evaluate", "correlation.csv"),
            ("dedup", "dedup_report.json"),
        ]
        inputs = [
            os.path.join(self.out, stage, name)
            for stage, name in bundle
            if os.path.exists(os.path.join(self.out, stage, name))
        ]
        optional = os.path.join(self.out, "grid", "grid.csv")
        if os.path.exists(optional):
            inputs.append(optional)
        outputs = [os.path.join(out_dir, os.path.basename(p)) for p in inputs]
        outputs.append(os.path.join(out_dir, "summary.json"))

        def work():
            summary = {"artifacts": []}
            for src in inputs:
                dst = os.path.join(out_dir, os.path.basename(src))
                shutil.copyfile(src, dst)
                summary["artifacts"].append(os.path.basename(dst))
            pair_eval = os.path.join(self.out, "evaluate", "pair_eval.json")
            if os.path.exists(pair_eval):
                with open(pair_eval, encoding="utf-8") as handle:
                    summary["pair_eval"] = json.load(handle)
            with open(outputs[-1], "w", encoding="utf-8") as handle:
                json.dump(summary, handle, indent=2, sort_keys=True)
                handle.write("\n")

        return self._execute("report", inputs, {}, outputs, work)
