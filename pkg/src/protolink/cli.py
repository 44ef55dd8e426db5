"""Batch pipeline driver: build-index, link, evaluate and export-plots
subcommands over a flat ``key = value`` config file."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .context import (MentionSpan, SyntheticContextProvider, attention_enrich, implicit_query,
                      load_attention, load_stopwords, neighboring_context)
from .corpus import CorpusError, expand_abbreviations, load_abbreviations, load_corpus
from .encoding import FormatError, TrigramHashEncoder, load_embeddings, load_token_encodings
from .evaluation import (ArticleSimRecord, LinkResult, Outcome, OverlappingSpansError,
                         article_similarity, classify_matches, recall_at,
                         recall_within_candidates, select_regions, substituted_texts,
                         transition_heatmap, wordcount_buckets)
from .index import Candidate, CandidateSet, PrototypeIndex, build_space, dedup_entities
from .ontology import (OntologyError, OntologySnapshot, load_ontology, load_relations,
                       resolve_cui)
from .rerank import (DEFAULT_GRID_A, DEFAULT_GRID_B, DEFAULT_GRID_C, DEFAULT_PARAMS,
                     GroupReranker, RerankParams, TypeReranker, dedup_reranked, grid_search,
                     parametric_rerank)
from .validation import normalized

logger = logging.getLogger("protolink")

RERANK_MODES = ("none", "parametric", "type", "group")
CONTEXT_MODES = ("none", "nc", "ac", "ic")


class ConfigError(ValueError):
    """Bad config file, bad override, or missing input path (exit code 2)."""


class EvaluationError(RuntimeError):
    """The evaluation itself cannot be completed (exit code 1)."""


_PATH_KEYS = ("paths.ontology", "paths.relations", "paths.corpus", "paths.embeddings",
              "paths.abbreviations", "paths.token_encodings", "paths.attention",
              "paths.output", "paths.space", "paths.candidates")
_KNOWN_KEYS = set(_PATH_KEYS) | {
    "k", "threads", "encoder.dim",
    "rerank.mode", "rerank.a", "rerank.b", "rerank.c", "rerank.use_grid",
    "grid.a", "grid.b", "grid.c",
    "context.mode", "context.window", "context.stopwords", "context.layers", "context.heads",
    "eval.k_sweep", "eval.ag_replace_all", "eval.min_bucket", "eval.sim_window",
    "eval.doc_embeddings",
}


def parse_flat_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and full-line # comments skipped."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_floats(raw: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated reals, got {raw!r}") from None


def _parse_ints(raw: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None


@dataclass
class RunConfig:
    """Typed view of the flat config plus CLI overrides."""

    ontology: Path | None = None
    relations: Path | None = None
    corpus: Path | None = None
    embeddings: Path | None = None
    abbreviations: Path | None = None
    token_encodings: Path | None = None
    attention: Path | None = None
    output: Path = Path("out")
    space: Path | None = None
    candidates: Path | None = None
    k: int = 128
    encoder_dim: int = 64
    rerank_mode: str = "none"
    rerank_a: float = DEFAULT_PARAMS[0]
    rerank_b: float = DEFAULT_PARAMS[1]
    rerank_c: float = DEFAULT_PARAMS[2]
    rerank_use_grid: bool = False
    grid_a: tuple[float, ...] = DEFAULT_GRID_A
    grid_b: tuple[float, ...] = DEFAULT_GRID_B
    grid_c: tuple[float, ...] = DEFAULT_GRID_C
    context_mode: str = "none"
    context_window: int = 2
    context_layers: int = 2
    context_heads: int = 2
    stopwords: Path | None = None
    k_sweep: tuple[int, ...] = (1, 2, 5, 10, 20, 32, 64, 128)
    ag_replace_all: bool = False
    min_bucket: int = 100
    sim_window: int = 200
    doc_embeddings: Path | None = None
    threads: int = 1

    def __post_init__(self):
        if self.space is None:
            self.space = self.output / "space"
        if self.candidates is None:
            self.candidates = self.output / "candidates.jsonl"
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.rerank_mode not in RERANK_MODES:
            raise ConfigError(f"rerank.mode must be one of {RERANK_MODES}, got {self.rerank_mode!r}")
        if self.context_mode not in CONTEXT_MODES:
            raise ConfigError(f"context.mode must be one of {CONTEXT_MODES}, "
                              f"got {self.context_mode!r}")
        if self.threads == 0:
            self.threads = os.cpu_count() or 1


def load_config(path, overrides=(), threads: int | None = None) -> RunConfig:
    if not Path(path).is_file():
        raise ConfigError(f"config file {path} does not exist")
    values = parse_flat_config(path)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        values[key.strip()] = value.strip()
    unknown = sorted(set(values) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    def path_of(key):
        return Path(values[key]) if values.get(key) else None

    def get_int(key, default):
        try:
            return int(values[key]) if key in values else default
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {values[key]!r}") from None

    def get_float(key, default):
        try:
            return float(values[key]) if key in values else default
        except ValueError:
            raise ConfigError(f"{key}: expected a real, got {values[key]!r}") from None

    config = RunConfig(
        ontology=path_of("paths.ontology"),
        relations=path_of("paths.relations"),
        corpus=path_of("paths.corpus"),
        embeddings=path_of("paths.embeddings"),
        abbreviations=path_of("paths.abbreviations"),
        token_encodings=path_of("paths.token_encodings"),
        attention=path_of("paths.attention"),
        output=path_of("paths.output") or Path("out"),
        space=path_of("paths.space"),
        candidates=path_of("paths.candidates"),
        k=get_int("k", 128),
        encoder_dim=get_int("encoder.dim", 64),
        rerank_mode=values.get("rerank.mode", "none"),
        rerank_a=get_float("rerank.a", DEFAULT_PARAMS[0]),
        rerank_b=get_float("rerank.b", DEFAULT_PARAMS[1]),
        rerank_c=get_float("rerank.c", DEFAULT_PARAMS[2]),
        rerank_use_grid=_parse_bool(values["rerank.use_grid"], "rerank.use_grid")
        if "rerank.use_grid" in values else False,
        grid_a=_parse_floats(values["grid.a"], "grid.a") if "grid.a" in values else DEFAULT_GRID_A,
        grid_b=_parse_floats(values["grid.b"], "grid.b") if "grid.b" in values else DEFAULT_GRID_B,
        grid_c=_parse_floats(values["grid.c"], "grid.c") if "grid.c" in values else DEFAULT_GRID_C,
        context_mode=values.get("context.mode", "none"),
        context_window=get_int("context.window", 2),
        context_layers=get_int("context.layers", 2),
        context_heads=get_int("context.heads", 2),
        stopwords=path_of("context.stopwords"),
        k_sweep=_parse_ints(values["eval.k_sweep"], "eval.k_sweep")
        if "eval.k_sweep" in values else RunConfig.k_sweep,
        ag_replace_all=_parse_bool(values["eval.ag_replace_all"], "eval.ag_replace_all")
        if "eval.ag_replace_all" in values else False,
        min_bucket=get_int("eval.min_bucket", 100),
        sim_window=get_int("eval.sim_window", 200),
        doc_embeddings=path_of("eval.doc_embeddings"),
        threads=threads if threads is not None else get_int("threads", 1),
    )
    return config


def _require(path: Path | None, key: str) -> Path:
    if path is None:
        raise ConfigError(f"{key} is required for this command")
    if not Path(path).exists():
        raise ConfigError(f"{key} = {path} does not exist")
    return Path(path)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_snapshot(config: RunConfig) -> OntologySnapshot:
    snapshot = load_ontology(_require(config.ontology, "paths.ontology"))
    if config.relations is not None:
        snapshot = load_relations(_require(config.relations, "paths.relations"), snapshot)
    return snapshot


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------- build-index

def cmd_build_index(config: RunConfig) -> int:
    snapshot = _load_snapshot(config)
    inputs = {"ontology": _sha256(config.ontology)}
    if config.relations is not None:
        inputs["relations"] = _sha256(config.relations)
    if config.embeddings is not None:
        store = load_embeddings(_require(config.embeddings, "paths.embeddings"))
        inputs["embeddings"] = _sha256(config.embeddings)
        index = build_space(snapshot, embeddings=store)
    else:
        index = build_space(snapshot, encoder=TrigramHashEncoder(dim=config.encoder_dim))
    written = index.save(config.space)
    manifest = {
        "rows": len(index),
        "dim": index.dim_,
        "inputs": inputs,
        "outputs": {name: _sha256(path) for name, path in written.items()},
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    _write_json(Path(config.space) / "manifest.json", manifest)
    logger.info("built space: %d rows, dim %d -> %s", len(index), index.dim_, config.space)
    return 0


# ----------------------------------------------------------------------- link

def _load_or_build_index(config: RunConfig, snapshot: OntologySnapshot,
                         canonical_only: bool = False) -> PrototypeIndex:
    cache = Path(config.space)
    if not canonical_only and (cache / "space.prot").is_file():
        logger.info("loading cached space from %s", cache)
        return PrototypeIndex.load(cache)
    if config.embeddings is not None:
        store = load_embeddings(_require(config.embeddings, "paths.embeddings"))
        return build_space(snapshot, embeddings=store, canonical_only=canonical_only)
    encoder = TrigramHashEncoder(dim=config.encoder_dim)
    return build_space(snapshot, encoder=encoder, canonical_only=canonical_only)


class _FileContextSource:
    """Per-article token encodings, attention and span alignment from the
    exporter's TOKE/ATTN/spans sidecar files."""

    def __init__(self, token_dir: Path, attention_dir: Path | None):
        self.token_dir = token_dir
        self.attention_dir = attention_dir

    def token_encodings(self, article_id: str):
        return load_token_encodings(self._existing(self.token_dir / f"{article_id}.toke"))

    def attention(self, article_id: str):
        if self.attention_dir is None:
            raise ConfigError("paths.attention is required for context.mode = ac")
        return load_attention(self._existing(self.attention_dir / f"{article_id}.attn"))

    def token_range(self, article_id: str, start: int, end: int) -> tuple[int, int]:
        path = self._existing(self.token_dir / f"{article_id}.spans.json")
        with open(path, encoding="utf-8") as handle:
            spans = json.load(handle)["spans"]
        for span in spans:
            if span["start"] == start and span["end"] == end:
                return int(span["token_start"]), int(span["token_end"])
        raise ConfigError(f"{path}: no token span recorded for {start}:{end}")

    @staticmethod
    def _existing(path: Path) -> Path:
        if not path.is_file():
            raise ConfigError(f"context file {path} does not exist")
        return path


def cmd_link(config: RunConfig) -> int:
    snapshot = _load_snapshot(config)
    articles = load_corpus(_require(config.corpus, "paths.corpus"))
    abbreviations = (load_abbreviations(_require(config.abbreviations, "paths.abbreviations"))
                     if config.abbreviations is not None else {})
    encoder = TrigramHashEncoder(dim=config.encoder_dim)
    index = _load_or_build_index(config, snapshot,
                                 canonical_only=config.context_mode == "ic")
    stopwords = load_stopwords(config.stopwords)

    file_source = None
    synthetic = None
    if config.context_mode in ("ac", "ic"):
        if config.token_encodings is not None:
            file_source = _FileContextSource(_require(config.token_encodings, "paths.token_encodings"),
                                             Path(config.attention) if config.attention else None)
        else:
            synthetic = SyntheticContextProvider(dim=index.dim_, layers=config.context_layers,
                                                 heads=config.context_heads)
    if config.context_mode != "ic" and config.encoder_dim != index.dim_:
        raise ConfigError(f"encoder.dim ({config.encoder_dim}) must match the space dim "
                          f"({index.dim_}) to encode queries")

    # First pass: build every query vector; second pass: batched search.
    jobs: list[tuple[MentionSpan, str | None]] = []
    vectors: list[np.ndarray] = []
    for article in articles:
        pairs = abbreviations.get(article.article_id, [])
        token_encodings = None
        attention = None
        if config.context_mode in ("ac", "ic"):
            if file_source is not None:
                token_encodings = file_source.token_encodings(article.article_id)
                if config.context_mode == "ac":
                    attention = file_source.attention(article.article_id)
            else:
                token_encodings = synthetic.token_encodings(article.text)
                if config.context_mode == "ac":
                    attention = synthetic.attention(article.article_id, article.text)
        for mention in article.mentions:
            expanded = expand_abbreviations(mention.surface, pairs) if pairs else mention.surface
            query_text: str | None = expanded
            vector = None
            if config.context_mode == "nc":
                query_text = neighboring_context(article.text, mention,
                                                 w=config.context_window, mention=expanded)
            elif config.context_mode in ("ac", "ic"):
                if file_source is not None:
                    span = file_source.token_range(article.article_id, mention.start, mention.end)
                else:
                    span = synthetic.token_range(article.text, mention.start, mention.end)
                if config.context_mode == "ac":
                    query_text = attention_enrich(attention, token_encodings.tokens, span,
                                                  stopwords, mention=expanded)
                else:
                    query_text = None
                    vector = implicit_query(token_encodings, span)
            if query_text is not None:
                vector = encoder.encode(query_text)
            jobs.append((mention, query_text))
            vectors.append(vector)

    query_ids = [f"{m.article_id}:{m.start}-{m.end}" for m, _ in jobs]
    results = index.search_batch(vectors, config.k, query_ids=query_ids, threads=config.threads)

    output = Path(config.candidates)
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", encoding="utf-8") as handle:
        for (mention, query_text), cands in zip(jobs, results):
            record = {
                "article_id": mention.article_id,
                "start": mention.start,
                "end": mention.end,
                "text": mention.surface,
                "query": query_text,
                "gold_cui": mention.gold_cui,
                "candidates": [{"cui": c.cui, "alias": c.alias, "score": c.score}
                               for c in cands.candidates],
            }
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    logger.info("linked %d mentions from %d articles -> %s", len(jobs), len(articles), output)
    return 0


# ------------------------------------------------------------------- evaluate

def _read_candidates(path) -> list[tuple[MentionSpan, CandidateSet]]:
    out: list[tuple[MentionSpan, CandidateSet]] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                mention = MentionSpan(article_id=str(obj["article_id"]), start=int(obj["start"]),
                                      end=int(obj["end"]), surface=str(obj["text"]),
                                      gold_cui=str(obj["gold_cui"]))
                candidates = tuple(Candidate(str(c["cui"]), str(c["alias"]), float(c["score"]))
                                   for c in obj["candidates"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}: line {line_no}: bad candidate record ({exc})") from exc
            query_id = f"{mention.article_id}:{mention.start}-{mention.end}"
            out.append((mention, CandidateSet(query_id=query_id, candidates=candidates)))
    return out


def _truncate(cands: CandidateSet, k: int) -> CandidateSet:
    return CandidateSet(query_id=cands.query_id, candidates=cands.candidates[:k])


def _truncate_to_unique(cands: CandidateSet, k: int) -> CandidateSet:
    kept_cuis: list[str] = []
    for candidate in cands.candidates:
        if candidate.cui not in kept_cuis:
            kept_cuis.append(candidate.cui)
            if len(kept_cuis) > k:
                break
    allowed = set(kept_cuis[:k])
    return CandidateSet(query_id=cands.query_id,
                        candidates=tuple(c for c in cands.candidates if c.cui in allowed))


class _Ranker:
    """Per-method ranking of one candidate set into a deduped entity list."""

    def __init__(self, mode: str, snapshot: OntologySnapshot, encoder,
                 params: RerankParams | None):
        self.mode = mode
        self.snapshot = snapshot
        self.params = params
        self._type = TypeReranker(snapshot, encoder)
        self._group = GroupReranker(snapshot, encoder)

    def entities(self, cands: CandidateSet, gold_cui: str, n: int) -> list[tuple[str, float]]:
        if not cands.candidates:
            return []
        if self.mode == "none":
            return dedup_entities(cands, n)
        if self.mode == "parametric":
            return dedup_reranked(parametric_rerank(cands, self.params), n)
        gold = self.snapshot.entities[resolve_cui(self.snapshot, gold_cui)]
        if self.mode == "type":
            return dedup_reranked(self._type.rerank(cands, gold.type_names), n)
        if self.mode == "group":
            return dedup_reranked(self._group.rerank(cands, gold.group_name), n)
        raise ValueError(f"unknown rerank mode {self.mode!r}")


def cmd_evaluate(config: RunConfig) -> int:
    snapshot = _load_snapshot(config)
    articles = load_corpus(_require(config.corpus, "paths.corpus"))
    pairs = _read_candidates(_require(config.candidates, "paths.candidates"))
    if not pairs:
        raise EvaluationError("candidates file is empty")
    encoder = TrigramHashEncoder(dim=config.encoder_dim)
    output = Path(config.output)
    output.mkdir(parents=True, exist_ok=True)

    try:
        golds = [resolve_cui(snapshot, m.gold_cui) for m, _ in pairs]
    except OntologyError as exc:
        raise EvaluationError(f"unresolvable gold cui: {exc}") from exc

    max_n = max(max(config.k_sweep, default=5), 5, config.k)
    baseline_results = [LinkResult(mention=m, entities=tuple(dedup_entities(c, max_n)))
                        for m, c in pairs]
    baseline_outcomes, baseline_breakdown = classify_matches(baseline_results, snapshot)

    # Reranked ("after") view per the configured mode.
    params = RerankParams(config.rerank_a, config.rerank_b, config.rerank_c)
    grid_result = None
    if config.rerank_use_grid and config.rerank_mode == "parametric":
        dev_set = [(c, g) for (_, c), g in zip(pairs, golds)]
        best_params, best_r1 = grid_search(dev_set, config.grid_a, config.grid_b, config.grid_c)
        grid_result = {"a": best_params.a, "b": best_params.b, "c": best_params.c, "r1": best_r1}
        params = best_params
        logger.info("grid search best params: %s (R@1 %.4f)", best_params, best_r1)

    ranker = _Ranker(config.rerank_mode, snapshot, encoder,
                     params if config.rerank_mode == "parametric" else None)
    after_results = [LinkResult(mention=m, entities=tuple(ranker.entities(c, g, max_n)))
                     for (m, c), g in zip(pairs, golds)]
    after_outcomes, after_breakdown = classify_matches(after_results, snapshot)
    transitions = transition_heatmap(baseline_outcomes, after_outcomes)

    ns = sorted({1, 5} | {n for n in config.k_sweep if n >= 1})
    resolved_baseline = [(r.entities, g) for r, g in zip(baseline_results, golds)]
    resolved_after = [(r.entities, g) for r, g in zip(after_results, golds)]
    recall_baseline = {n: recall_at(resolved_baseline, n) for n in ns}
    recall_after = {n: recall_at(resolved_after, n) for n in ns}
    alias_recall = recall_within_candidates([(c, g) for (_, c), g in zip(pairs, golds)], config.k)

    # Top-k sweep per method, alias-level k plus the unique-entity reading.
    sweep_rows = []
    methods = {"baseline": _Ranker("none", snapshot, encoder, None),
               "parametric": _Ranker("parametric", snapshot, encoder, params),
               "type": _Ranker("type", snapshot, encoder, None),
               "group": _Ranker("group", snapshot, encoder, None)}
    for method, method_ranker in methods.items():
        for k in sorted(set(config.k_sweep)):
            for interpretation, truncate in (("alias", _truncate), ("entity", _truncate_to_unique)):
                rows = [(tuple(method_ranker.entities(truncate(c, k), g, 5)), g)
                        for (_, c), g in zip(pairs, golds)]
                sweep_rows.append({"method": method, "k": k, "interpretation": interpretation,
                                   "r1": recall_at(rows, 1), "r5": recall_at(rows, 5)})
    _write_csv(output / "trends.csv", ["method", "k", "interpretation", "r1", "r5"], sweep_rows)

    # Article-level similarity over the reranked predictions.
    doc_store = (load_embeddings(_require(config.doc_embeddings, "eval.doc_embeddings"))
                 if config.doc_embeddings is not None else None)
    baseline_r1_by_article = {}
    for outcome in baseline_outcomes:
        baseline_r1_by_article.setdefault(outcome.article_id, []).append(
            outcome.outcome is Outcome.EXACT)
    records = []
    skipped: list[str] = []
    texts_path = output / "article_texts.jsonl"
    with open(texts_path, "w", encoding="utf-8") as texts_handle:
        for article in articles:
            if not article.mentions:
                continue
            try:
                original, pred_text, gold_text = substituted_texts(
                    article, after_outcomes, snapshot, replace_all_gold=config.ag_replace_all)
            except OverlappingSpansError as exc:
                logger.warning("skipping article %s: %s", article.article_id, exc)
                skipped.append(article.article_id)
                continue
            for suffix, text in (("", original), ("#pred", pred_text), ("#gold", gold_text)):
                texts_handle.write(json.dumps({"id": article.article_id + suffix, "text": text},
                                              sort_keys=True) + "\n")
            if doc_store is not None:
                try:
                    base = normalized(doc_store.vector(article.article_id))
                    s_p = float(base @ normalized(doc_store.vector(article.article_id + "#pred")))
                    s_g = float(base @ normalized(doc_store.vector(article.article_id + "#gold")))
                except KeyError as exc:
                    raise EvaluationError(f"doc embedding store: {exc}") from exc
                keys = {(m.article_id, m.start, m.end) for m in article.mentions}
                exact = sum(o.outcome is Outcome.EXACT for o in after_outcomes if o.key in keys)
                record = ArticleSimRecord(article_id=article.article_id, s_g=s_g, s_p=s_p,
                                          diff=s_g - s_p, r1=exact / len(article.mentions))
            else:
                record = article_similarity(article, after_outcomes, snapshot, encoder.encode,
                                            replace_all_gold=config.ag_replace_all)
            records.append(record)

    sim_rows = []
    region_a: list[str] = []
    region_b: list[str] = []
    sim_summary = {}
    if records:
        labeled, smoothed = select_regions(records, window=config.sim_window)
        diffs = np.array([r.diff for r in labeled])
        sim_summary = {"mean_diff": float(diffs.mean()), "std_diff": float(diffs.std())}
        for record, smooth in zip(labeled, smoothed):
            flags = baseline_r1_by_article.get(record.article_id, [])
            sim_rows.append({
                "article_id": record.article_id,
                "s_g": record.s_g,
                "s_p": record.s_p,
                "diff": record.diff,
                "r1_baseline": sum(flags) / len(flags) if flags else 0.0,
                "r1_after": record.r1,
                "region": record.region or "",
                "smoothed_r1": smooth,
            })
            if record.region == "A":
                region_a.append(record.article_id)
            elif record.region == "B":
                region_b.append(record.article_id)
    _write_csv(output / "article_sim.csv",
               ["article_id", "s_g", "s_p", "diff", "r1_baseline", "r1_after", "region",
                "smoothed_r1"], sim_rows)

    # Word-count buckets for the baseline and the reranked run.
    mentions = [m for m, _ in pairs]
    bucket_rows = []
    for method, outcome_list in (("baseline", baseline_outcomes), ("after", after_outcomes)):
        for words, stats in wordcount_buckets(outcome_list, mentions,
                                              min_count=config.min_bucket).items():
            bucket_rows.append({"method": method, "words": words, "count": stats.count,
                                "exact_rate": stats.exact_rate,
                                "related_rate": stats.related_rate})
    _write_csv(output / "wordcount.csv",
               ["method", "words", "count", "exact_rate", "related_rate"], bucket_rows)

    _write_csv(output / "transitions.csv", ["from", "to", "count", "row_percent"],
               [{"from": transitions.labels[i], "to": transitions.labels[j],
                 "count": int(transitions.counts[i, j]),
                 "row_percent": float(transitions.row_percent[i, j])}
                for i in range(3) for j in range(3)])

    report = {
        "k": config.k,
        "mentions": len(pairs),
        "rerank": {"mode": config.rerank_mode,
                   "params": {"a": params.a, "b": params.b, "c": params.c}
                   if config.rerank_mode == "parametric" else None,
                   "grid": grid_result},
        "recall_at": {str(n): v for n, v in recall_baseline.items()},
        "recall_at_after": {str(n): v for n, v in recall_after.items()},
        "recall_within_alias_rows": {str(config.k): alias_recall},
        "breakdown_baseline": baseline_breakdown,
        "breakdown_after": after_breakdown,
        "transition": {"labels": list(transitions.labels),
                       "counts": transitions.counts.tolist(),
                       "row_percent": transitions.row_percent.tolist()},
        "articles_skipped": skipped,
        "article_similarity": sim_summary,
        "region_a": region_a,
        "region_b": region_b,
    }
    _write_json(output / "report.json", report)
    logger.info("evaluation: R@1 %.4f -> %.4f, R@5 %.4f -> %.4f",
                recall_baseline[1], recall_after[1], recall_baseline[5], recall_after[5])
    return 0


# --------------------------------------------------------------- export-plots

def cmd_export_plots(config: RunConfig) -> int:
    from . import plots

    output = Path(config.output)
    report_path = output / "report.json"
    if not report_path.is_file():
        raise ConfigError(f"{report_path} does not exist; run evaluate first")
    with open(report_path, encoding="utf-8") as handle:
        report = json.load(handle)

    def read_rows(name):
        path = output / name
        if not path.is_file():
            raise ConfigError(f"{path} does not exist; run evaluate first")
        with open(path, encoding="utf-8", newline="") as handle:
            return list(csv.DictReader(handle))

    plots.plot_topk_trends(read_rows("trends.csv"), output / "trends.svg")
    plots.plot_transition_heatmap(report["transition"]["counts"],
                                  report["transition"]["row_percent"],
                                  report["transition"]["labels"],
                                  output / "transitions.svg")
    sim_rows = read_rows("article_sim.csv")
    plots.plot_article_similarity([float(r["diff"]) for r in sim_rows],
                                  [float(r["smoothed_r1"]) for r in sim_rows],
                                  [r["region"] for r in sim_rows],
                                  output / "article_similarity.svg")
    plots.plot_wordcount_bars(read_rows("wordcount.csv"), output / "wordcount.svg")
    logger.info("plots written to %s", output)
    return 0


# ----------------------------------------------------------------------- main

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="protolink",
                                     description="Offline entity linking over a prototype space")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("build-index", "link", "evaluate", "export-plots"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="flat key = value config file")
        cmd.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config key")
        cmd.add_argument("--threads", type=int, default=None, help="0 = auto")
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")

    handlers = {"build-index": cmd_build_index, "link": cmd_link,
                "evaluate": cmd_evaluate, "export-plots": cmd_export_plots}
    try:
        config = load_config(args.config, overrides=args.set, threads=args.threads)
        return handlers[args.command](config)
    except (ConfigError, OntologyError, CorpusError, FormatError, FileNotFoundError,
            ValueError) as exc:
        logger.error("%s", exc)
        return 2
    except EvaluationError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
