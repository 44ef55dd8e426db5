"""Candidate disambiguation: parametric rescoring, semantic-metadata
reranking, and grid search over the parametric coefficients."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .index import CandidateSet
from .ontology import OntologySnapshot

# Grid spanning the shipped default coefficients (5, 0.1, 0.05) and the
# wider a:b:c proportions that work well in practice.
DEFAULT_GRID_A = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
DEFAULT_GRID_B = (0.0, 0.02, 0.05, 0.1, 0.2, 0.5)
DEFAULT_GRID_C = (0.0, 0.01, 0.05, 0.1, 0.5)

DEFAULT_PARAMS = (5.0, 0.1, 0.05)


@dataclass(frozen=True, slots=True)
class RerankParams:
    """Coefficients weighting cosine score, alias-mean score and alias count."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.c < 0:
            raise ValueError(f"coefficients must be non-negative, got {self}")
        if self.a == self.b == self.c == 0:
            raise ValueError("coefficients must not all be zero")


@dataclass(frozen=True, slots=True)
class RerankedCandidate:
    cui: str
    alias: str
    score: float      # original cosine
    adjusted: float   # rescored value used for the new ordering


@dataclass(frozen=True, slots=True)
class RerankedSet:
    """Same candidates as the input set, reordered by adjusted score."""

    query_id: str
    candidates: tuple[RerankedCandidate, ...]


def _reorder(query_id: str, rescored) -> RerankedSet:
    ordered = sorted(rescored, key=lambda c: (-c.adjusted, c.cui, c.alias))
    return RerankedSet(query_id=query_id, candidates=tuple(ordered))


def dedup_reranked(rset: RerankedSet, n: int) -> list[tuple[str, float]]:
    """First occurrence of each cui in adjusted order, up to n unique entities."""
    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    for candidate in rset.candidates:
        if candidate.cui not in seen:
            seen.add(candidate.cui)
            out.append((candidate.cui, candidate.adjusted))
            if len(out) == n:
                break
    return out


class ParametricReranker(BaseEstimator):
    """Rescore candidates as ``a*score + b*alias_mean + c*alias_count``.

    ``alias_count`` is the number of the candidate entity's aliases present
    in the candidate set itself (at least 1, the candidate included) and
    ``alias_mean`` is the mean cosine over exactly those aliases.
    """

    def __init__(self, a: float = DEFAULT_PARAMS[0], b: float = DEFAULT_PARAMS[1],
                 c: float = DEFAULT_PARAMS[2]):
        self.a = a
        self.b = b
        self.c = c

    @property
    def params(self) -> RerankParams:
        return RerankParams(self.a, self.b, self.c)

    def rerank(self, cands: CandidateSet) -> RerankedSet:
        if not cands.candidates:
            raise ValueError("cannot rerank an empty candidate set")
        params = self.params
        grouped: dict[str, list[float]] = defaultdict(list)
        for candidate in cands.candidates:
            grouped[candidate.cui].append(candidate.score)
        stats = {cui: (len(scores), sum(scores) / len(scores)) for cui, scores in grouped.items()}
        rescored = []
        for candidate in cands.candidates:
            count, mean = stats[candidate.cui]
            adjusted = params.a * candidate.score + params.b * mean + params.c * count
            rescored.append(RerankedCandidate(candidate.cui, candidate.alias,
                                              candidate.score, adjusted))
        return _reorder(cands.query_id, rescored)


def parametric_rerank(cands: CandidateSet, params: RerankParams) -> RerankedSet:
    return ParametricReranker(params.a, params.b, params.c).rerank(cands)


class _MetadataReranker(BaseEstimator):
    """Shared machinery: add a metadata-similarity bonus to each candidate."""

    def __init__(self, snapshot: OntologySnapshot, encoder):
        self.snapshot = snapshot
        self.encoder = encoder
        self._cache: dict[str, np.ndarray] = {}

    def _encode(self, name: str) -> np.ndarray:
        # One encoding per unique metadata string; a pure optimization.
        vector = self._cache.get(name)
        if vector is None:
            vector = np.asarray(self.encoder.encode(name), dtype=np.float64)
            self._cache[name] = vector
        return vector

    def _entity(self, cui: str):
        entity = self.snapshot.entities.get(cui)
        if entity is None:
            raise ValueError(f"candidate cui {cui!r} is not an active entity")
        return entity

    def _apply(self, cands: CandidateSet, bonus) -> RerankedSet:
        if not cands.candidates:
            raise ValueError("cannot rerank an empty candidate set")
        rescored = []
        for candidate in cands.candidates:
            rescored.append(RerankedCandidate(candidate.cui, candidate.alias, candidate.score,
                                              candidate.score + bonus(candidate)))
        return _reorder(cands.query_id, rescored)


class TypeReranker(_MetadataReranker):
    """Add the best cosine between mention and candidate semantic-type names.

    Entities may carry several types; the bonus is the maximum over all
    (mention type, candidate type) name pairs, so any matching facet counts.
    """

    def rerank(self, cands: CandidateSet, mention_types) -> RerankedSet:
        mention_types = list(mention_types)
        if not mention_types:
            raise ValueError("mention_types must be non-empty")
        mention_vectors = [self._encode(name) for name in mention_types]

        def bonus(candidate):
            type_names = self._entity(candidate.cui).type_names
            if not type_names:
                raise ValueError(f"entity {candidate.cui!r} has no semantic types")
            return max(float(mv @ self._encode(tn)) for mv in mention_vectors for tn in type_names)

        return self._apply(cands, bonus)


class GroupReranker(_MetadataReranker):
    """Add the cosine between mention and candidate semantic-group names."""

    def rerank(self, cands: CandidateSet, mention_group: str) -> RerankedSet:
        if not mention_group:
            raise ValueError("mention_group must be non-empty")
        mention_vector = self._encode(mention_group)

        def bonus(candidate):
            return float(mention_vector @ self._encode(self._entity(candidate.cui).group_name))

        return self._apply(cands, bonus)


def type_rerank(cands: CandidateSet, mention_types, snapshot: OntologySnapshot,
                encoder) -> RerankedSet:
    return TypeReranker(snapshot, encoder).rerank(cands, mention_types)


def group_rerank(cands: CandidateSet, mention_group: str, snapshot: OntologySnapshot,
                 encoder) -> RerankedSet:
    return GroupReranker(snapshot, encoder).rerank(cands, mention_group)


def _precompute(cands: CandidateSet):
    """Per-set arrays for fast grid evaluation; means use the same python
    summation as ParametricReranker so both paths produce identical floats."""
    grouped: dict[str, list[float]] = defaultdict(list)
    for candidate in cands.candidates:
        grouped[candidate.cui].append(candidate.score)
    stats = {cui: (len(scores), sum(scores) / len(scores)) for cui, scores in grouped.items()}
    scores = np.array([c.score for c in cands.candidates], dtype=np.float64)
    counts = np.array([stats[c.cui][0] for c in cands.candidates], dtype=np.float64)
    means = np.array([stats[c.cui][1] for c in cands.candidates], dtype=np.float64)
    # rank under (cui asc, alias asc) for exact tie-breaking at the top
    lex_rank = np.empty(len(cands.candidates), dtype=np.int64)
    by_lex = sorted(range(len(cands.candidates)),
                    key=lambda i: (cands.candidates[i].cui, cands.candidates[i].alias))
    for rank, i in enumerate(by_lex):
        lex_rank[i] = rank
    cuis = [c.cui for c in cands.candidates]
    return scores, means, counts, lex_rank, cuis


def grid_search(dev_set, a_grid=DEFAULT_GRID_A, b_grid=DEFAULT_GRID_B,
                c_grid=DEFAULT_GRID_C) -> tuple[RerankParams, float]:
    """Exhaustively evaluate top-1 accuracy for every (a, b, c) grid point.

    ``dev_set`` is a list of ``(CandidateSet, gold_cui)`` pairs with gold
    cuis already resolved to active form. Returns the argmax point and its
    accuracy; ties go to the lexicographically smallest (a, b, c).
    """
    dev_set = list(dev_set)
    if not dev_set:
        raise ValueError("dev_set must be non-empty")
    if not (len(a_grid) and len(b_grid) and len(c_grid)):
        raise ValueError("grid lists must be non-empty")
    # Empty candidate sets can never hit their gold; they count as misses.
    prepared = [(_precompute(cands) if cands.candidates else None, gold)
                for cands, gold in dev_set]

    best: tuple[RerankParams, float] | None = None
    for a in sorted(set(float(x) for x in a_grid)):
        for b in sorted(set(float(x) for x in b_grid)):
            for c in sorted(set(float(x) for x in c_grid)):
                params = RerankParams(a, b, c)
                hits = 0
                for arrays, gold in prepared:
                    if arrays is None:
                        continue
                    scores, means, counts, lex_rank, cuis = arrays
                    adjusted = a * scores + b * means + c * counts
                    top = np.flatnonzero(adjusted == adjusted.max())
                    winner = top[np.argmin(lex_rank[top])]
                    hits += cuis[winner] == gold
                accuracy = hits / len(dev_set)
                if best is None or accuracy > best[1]:
                    best = (params, accuracy)
    return best
