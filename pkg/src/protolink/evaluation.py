"""Retrieval metrics, match classification, transition heatmaps, and the
article-level semantic-similarity analysis."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .context import MentionSpan
from .corpus import Article
from .ontology import OntologySnapshot, is_related, resolve_cui
from .validation import check_positive_int, normalized


class Outcome(Enum):
    EXACT = "exact"
    RELATED = "related"
    MISSED = "missed"


OUTCOME_ORDER = (Outcome.EXACT, Outcome.RELATED, Outcome.MISSED)


class OverlappingSpansError(ValueError):
    """Raised when replacement targets overlap; the article must be skipped."""


@dataclass(frozen=True, slots=True)
class MatchOutcome:
    """Top-1 prediction for one mention, classified against its gold."""

    article_id: str
    start: int
    end: int
    gold_cui: str
    predicted_cui: str | None
    outcome: Outcome

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.article_id, self.start, self.end)


@dataclass(frozen=True, slots=True)
class LinkResult:
    """A mention with its deduped, ordered entity predictions."""

    mention: MentionSpan
    entities: tuple[tuple[str, float], ...]


@dataclass(frozen=True, slots=True)
class EvalReport:
    r_at: dict[int, float]
    breakdown: dict[str, float]
    per_article_r1: dict[str, float]


@dataclass(frozen=True, slots=True)
class TransitionMatrix:
    """3x3 outcome transitions, rows = FROM, columns = TO, order
    (exact, related, missed)."""

    counts: np.ndarray
    row_percent: np.ndarray
    labels: tuple[str, ...] = tuple(o.value for o in OUTCOME_ORDER)


@dataclass(frozen=True, slots=True)
class ArticleSimRecord:
    """Per-article similarity of prediction- and gold-substituted texts."""

    article_id: str
    s_g: float
    s_p: float
    diff: float
    r1: float
    region: str | None = None


def _entity_cuis(entities) -> list[str]:
    return [e if isinstance(e, str) else e[0] for e in entities]


def recall_at(results, n: int) -> float:
    """Fraction of mentions whose gold appears in the first n unique entities.

    ``results`` pairs a deduped entity list (cuis, or (cui, score) tuples)
    with an already-resolved gold cui.
    """
    check_positive_int(n, "n")
    results = list(results)
    if not results:
        raise ValueError("results must be non-empty")
    hits = sum(gold in _entity_cuis(entities)[:n] for entities, gold in results)
    return hits / len(results)


def recall_within_candidates(candidate_sets_with_gold, k: int) -> float:
    """Alias-level recall: gold among the cuis of the first k alias rows.

    The companion reading of top-k recall for alias-level candidate lists;
    :func:`recall_at` is the unique-entity reading.
    """
    check_positive_int(k, "k")
    pairs = list(candidate_sets_with_gold)
    if not pairs:
        raise ValueError("results must be non-empty")
    hits = 0
    for cands, gold in pairs:
        hits += gold in {c.cui for c in cands.candidates[:k]}
    return hits / len(pairs)


def classify_matches(results, snapshot: OntologySnapshot) -> tuple[list[MatchOutcome], dict[str, float]]:
    """Classify each mention's top-1 unique entity as exact/related/missed.

    Golds are resolved through the merge map; an unresolvable gold raises.
    Returns the per-mention outcomes and the fraction breakdown (which sums
    to 1 over non-empty input).
    """
    results = list(results)
    outcomes: list[MatchOutcome] = []
    tallies = {o: 0 for o in OUTCOME_ORDER}
    for result in results:
        mention = result.mention
        gold = resolve_cui(snapshot, mention.gold_cui)
        predicted = _entity_cuis(result.entities)[0] if result.entities else None
        if predicted is None:
            outcome = Outcome.MISSED
        else:
            predicted = resolve_cui(snapshot, predicted)
            if predicted == gold:
                outcome = Outcome.EXACT
            elif is_related(snapshot, predicted, gold):
                outcome = Outcome.RELATED
            else:
                outcome = Outcome.MISSED
        tallies[outcome] += 1
        outcomes.append(MatchOutcome(article_id=mention.article_id, start=mention.start,
                                     end=mention.end, gold_cui=gold, predicted_cui=predicted,
                                     outcome=outcome))
    total = len(outcomes)
    breakdown = {o.value: (tallies[o] / total if total else 0.0) for o in OUTCOME_ORDER}
    return outcomes, breakdown


def transition_heatmap(before, after) -> TransitionMatrix:
    """Count outcome moves between two runs over the identical mention set."""
    before_by_key = {o.key: o for o in before}
    after_by_key = {o.key: o for o in after}
    if set(before_by_key) != set(after_by_key) or len(before_by_key) != len(list(before)):
        raise ValueError("before/after outcomes must cover the same mention set")
    index = {o: i for i, o in enumerate(OUTCOME_ORDER)}
    counts = np.zeros((3, 3), dtype=np.int64)
    for key, pre in before_by_key.items():
        counts[index[pre.outcome], index[after_by_key[key].outcome]] += 1
    row_percent = np.zeros((3, 3), dtype=np.float64)
    for row in range(3):
        row_total = counts[row].sum()
        if row_total:
            row_percent[row] = counts[row] * 100.0 / row_total
    return TransitionMatrix(counts=counts, row_percent=row_percent)


def _substitute(text: str, targets: list[tuple[int, int, str]]) -> str:
    """Apply (start, end, replacement) edits right-to-left to keep offsets valid."""
    spans = sorted(targets, key=lambda t: t[0])
    for (s1, e1, _), (s2, _, _) in zip(spans, spans[1:]):
        if s2 < e1:
            raise OverlappingSpansError(f"replacement spans {s1}:{e1} and {s2}:... overlap")
    out = text
    for start, end, replacement in sorted(targets, key=lambda t: -t[0]):
        out = out[:start] + replacement + out[end:]
    return out


def substituted_texts(article: Article, outcomes, snapshot: OntologySnapshot,
                      replace_all_gold: bool = False) -> tuple[str, str, str]:
    """The (original, prediction-substituted, gold-substituted) texts.

    Mentions classified related or missed have their surface replaced by the
    predicted entity's canonical name (variant P) and by the gold entity's
    canonical name (variant G); the same mention subset is edited on both
    sides unless ``replace_all_gold`` extends the gold side to every
    mention. Exported separately so document embeddings can be produced
    out-of-process.
    """
    by_key = {o.key: o for o in outcomes if o.article_id == article.article_id}
    missing = [m for m in article.mentions if (m.article_id, m.start, m.end) not in by_key]
    if missing:
        raise ValueError(f"outcomes missing for {len(missing)} mentions of "
                         f"article {article.article_id!r}")

    def canonical(cui: str) -> str:
        return snapshot.entities[resolve_cui(snapshot, cui)].canonical_name

    pred_targets: list[tuple[int, int, str]] = []
    gold_targets: list[tuple[int, int, str]] = []
    for mention in article.mentions:
        outcome = by_key[(mention.article_id, mention.start, mention.end)]
        replaced = outcome.outcome in (Outcome.RELATED, Outcome.MISSED)
        if replaced and outcome.predicted_cui is not None:
            pred_targets.append((mention.start, mention.end, canonical(outcome.predicted_cui)))
            gold_targets.append((mention.start, mention.end, canonical(mention.gold_cui)))
        elif replace_all_gold:
            gold_targets.append((mention.start, mention.end, canonical(mention.gold_cui)))

    text = article.text
    return text, _substitute(text, pred_targets), _substitute(text, gold_targets)


def article_similarity(article: Article, outcomes, snapshot: OntologySnapshot,
                       doc_encoder, replace_all_gold: bool = False) -> ArticleSimRecord:
    """Compare the article against its prediction- and gold-substituted variants.

    Scores are cosines between the original text and each variant from
    :func:`substituted_texts` under ``doc_encoder``. The record's r1 is the
    article's exact-match fraction.
    """
    text, variant_pred, variant_gold = substituted_texts(article, outcomes, snapshot,
                                                         replace_all_gold=replace_all_gold)
    base_vec = normalized(doc_encoder(text))
    s_p = float(base_vec @ normalized(doc_encoder(variant_pred)))
    s_g = float(base_vec @ normalized(doc_encoder(variant_gold)))

    by_key = {o.key: o for o in outcomes if o.article_id == article.article_id}
    article_outcomes = [by_key[(m.article_id, m.start, m.end)] for m in article.mentions]
    exact = sum(o.outcome is Outcome.EXACT for o in article_outcomes)
    r1 = exact / len(article_outcomes) if article_outcomes else 0.0
    return ArticleSimRecord(article_id=article.article_id, s_g=s_g, s_p=s_p,
                            diff=s_g - s_p, r1=r1)


def select_regions(records, window: int = 200) -> tuple[list[ArticleSimRecord], list[float]]:
    """Label outlier articles and smooth per-article recall along the diff axis.

    Records are ordered by (diff, article_id) ascending; region A holds
    diffs below mean - stddev (predictions semantically closer than gold),
    region B above mean + stddev. The second return value is the centered
    moving average of r1 over that ordering, window clipped at the ends.
    """
    records = sorted(records, key=lambda r: (r.diff, r.article_id))
    if not records:
        raise ValueError("records must be non-empty")
    check_positive_int(window, "window")
    diffs = np.array([r.diff for r in records], dtype=np.float64)
    mean = float(diffs.mean())
    spread = float(diffs.std())
    labeled: list[ArticleSimRecord] = []
    for record in records:
        region = None
        if spread > 0.0:
            if record.diff < mean - spread:
                region = "A"
            elif record.diff > mean + spread:
                region = "B"
        labeled.append(replace(record, region=region))
    r1 = np.array([r.r1 for r in records], dtype=np.float64)
    half_lo = window // 2
    half_hi = window - half_lo
    smoothed = [float(r1[max(0, i - half_lo): min(len(r1), i + half_hi)].mean())
                for i in range(len(r1))]
    return labeled, smoothed


@dataclass(frozen=True, slots=True)
class BucketStats:
    count: int
    exact_rate: float
    related_rate: float


def wordcount_buckets(outcomes, mentions, min_count: int = 100) -> dict[int, BucketStats]:
    """Exact/related rates bucketed by mention word count; sparse buckets
    (fewer than ``min_count`` mentions) are dropped."""
    surface_by_key = {(m.article_id, m.start, m.end): m.surface for m in mentions}
    grouped: dict[int, list[MatchOutcome]] = {}
    for outcome in outcomes:
        surface = surface_by_key.get(outcome.key)
        if surface is None:
            raise ValueError(f"no mention surface for outcome at {outcome.key}")
        grouped.setdefault(len(surface.split()), []).append(outcome)
    buckets: dict[int, BucketStats] = {}
    for words, members in sorted(grouped.items()):
        if len(members) < min_count:
            continue
        exact = sum(o.outcome is Outcome.EXACT for o in members)
        related = sum(o.outcome is Outcome.RELATED for o in members)
        buckets[words] = BucketStats(count=len(members), exact_rate=exact / len(members),
                                     related_rate=related / len(members))
    return buckets


def summarize(results, snapshot: OntologySnapshot, ks=(1, 5)) -> EvalReport:
    """Bundle recall levels, the outcome breakdown and per-article exact rate."""
    results = list(results)
    outcomes, breakdown = classify_matches(results, snapshot)
    resolved = [(result.entities, resolve_cui(snapshot, result.mention.gold_cui))
                for result in results]
    r_at = {int(n): recall_at(resolved, int(n)) for n in ks}
    per_article: dict[str, list[MatchOutcome]] = {}
    for outcome in outcomes:
        per_article.setdefault(outcome.article_id, []).append(outcome)
    per_article_r1 = {aid: sum(o.outcome is Outcome.EXACT for o in outs) / len(outs)
                      for aid, outs in sorted(per_article.items())}
    return EvalReport(r_at=r_at, breakdown=breakdown, per_article_r1=per_article_r1)
