"""Flat prototype space over entity aliases with exact top-k cosine search."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .encoding import EmbeddingStore, load_embeddings, write_embeddings
from .ontology import OntologySnapshot
from .validation import as_vector, check_positive_int, normalized


class SpaceBuildError(ValueError):
    """Raised when the prototype space cannot be assembled from its inputs."""


@dataclass(frozen=True, slots=True)
class Candidate:
    """One alias-level hit: entity cui, the matched alias, cosine score."""

    cui: str
    alias: str
    score: float


def canonical_order(candidates) -> tuple[Candidate, ...]:
    """Total deterministic candidate order: score desc, cui asc, alias asc."""
    return tuple(sorted(candidates, key=lambda c: (-c.score, c.cui, c.alias)))


@dataclass(frozen=True, slots=True)
class CandidateSet:
    """Scored top-k alias candidates for one query, canonically ordered."""

    query_id: str
    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        if tuple(self.candidates) != canonical_order(self.candidates):
            raise ValueError("candidates are not in canonical order")

    def __len__(self) -> int:
        return len(self.candidates)


class PrototypeIndex(BaseEstimator):
    """Exact cosine retrieval over one row per (active entity, alias) pair.

    Rows come either from an :class:`EmbeddingStore` whose ids follow the
    ``"<cui>#<alias-index>"`` convention, or from a phrase encoder applied to
    the alias strings. Deprecated, deleted and suppressed entities contribute
    no rows. ``canonical_only`` restricts the space to canonical names
    (alias index 0), the target for implicit mean-pooled queries.

    Parameters
    ----------
    encoder : object with ``encode(text) -> vector``, optional
    embeddings : EmbeddingStore, optional
        Exactly one of ``encoder``/``embeddings`` must be given.
    canonical_only : bool, default False
    """

    def __init__(self, encoder=None, embeddings: EmbeddingStore | None = None,
                 canonical_only: bool = False):
        self.encoder = encoder
        self.embeddings = embeddings
        self.canonical_only = canonical_only

    def fit(self, snapshot: OntologySnapshot, y=None):
        """Build the space from a snapshot's active entities."""
        if (self.encoder is None) == (self.embeddings is None):
            raise SpaceBuildError("provide exactly one of encoder or embeddings")
        cuis: list[str] = []
        aliases: list[str] = []
        alias_indices: list[int] = []
        rows: list[np.ndarray] = []
        for cui, entity in snapshot.entities.items():
            sources = entity.aliases[:1] if self.canonical_only else entity.aliases
            for alias_index, alias in enumerate(sources):
                if self.embeddings is not None:
                    entry_id = f"{cui}#{alias_index}"
                    try:
                        vector = self.embeddings.vector(entry_id)
                    except KeyError:
                        raise SpaceBuildError(f"missing embedding id {entry_id!r} "
                                              f"for alias {alias!r}") from None
                else:
                    vector = self.encoder.encode(alias)
                rows.append(np.asarray(vector, dtype=np.float64))
                cuis.append(cui)
                aliases.append(alias)
                alias_indices.append(alias_index)

        if rows:
            dims = {r.shape[0] for r in rows}
            if len(dims) != 1:
                raise SpaceBuildError(f"inconsistent vector dims {sorted(dims)}")
            matrix = np.vstack(rows).astype(np.float32)
        else:
            fallback = self.embeddings.dim if self.embeddings is not None else 0
            matrix = np.empty((0, fallback), dtype=np.float32)
        self.matrix_ = matrix
        # f64 copy so every search scores with identical double-precision dots
        self._matrix64 = matrix.astype(np.float64)
        self.cuis_ = tuple(cuis)
        self.aliases_ = tuple(aliases)
        self.alias_indices_ = tuple(alias_indices)
        self.dim_ = int(matrix.shape[1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "matrix_"):
            raise NotFittedError("PrototypeIndex is not fitted; call fit(snapshot) first")

    def __len__(self) -> int:
        self._check_fitted()
        return self.matrix_.shape[0]

    def _top_k(self, scores: np.ndarray, k: int) -> tuple[Candidate, ...]:
        n = scores.shape[0]
        kept = min(k, n)
        if kept < n:
            kth = np.partition(scores, n - kept)[n - kept]
            pool = np.flatnonzero(scores >= kth)
        else:
            pool = np.arange(n)
        ranked = sorted(pool.tolist(), key=lambda i: (-scores[i], self.cuis_[i], self.aliases_[i]))
        return tuple(Candidate(self.cuis_[i], self.aliases_[i], float(scores[i]))
                     for i in ranked[:kept])

    def search(self, query, k: int, query_id: str = "query") -> CandidateSet:
        """Exact top-k alias rows by cosine, ties broken by (cui, alias).

        The query is L2-normalized first, so any positive scaling of it
        returns identical results.
        """
        self._check_fitted()
        check_positive_int(k, "k")
        if self.matrix_.shape[0] == 0:
            raise ValueError("prototype space is empty")
        vector = normalized(as_vector(query, dim=self.dim_, name="query"))
        scores = self._matrix64 @ vector
        return CandidateSet(query_id=query_id, candidates=self._top_k(scores, k))

    def search_text(self, text: str, k: int, query_id: str | None = None) -> CandidateSet:
        """Encode a phrase with the index encoder and search it."""
        if self.encoder is None:
            raise ValueError("search_text requires an encoder-backed index")
        return self.search(self.encoder.encode(text), k, query_id=query_id or text)

    def search_batch(self, queries, k: int, query_ids=None, threads: int = 1) -> list[CandidateSet]:
        """Search many queries; results are deterministic regardless of threads."""
        self._check_fitted()
        queries = [as_vector(q, dim=self.dim_, name="query") for q in queries]
        if query_ids is None:
            query_ids = [f"query-{i}" for i in range(len(queries))]
        jobs = list(zip(query_ids, queries))
        if threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(lambda job: self.search(job[1], k, query_id=job[0]), jobs))
        return [self.search(q, k, query_id=qid) for qid, q in jobs]

    def save(self, directory) -> dict:
        """Persist the space as a PROT file plus an alias-meta JSONL sidecar."""
        self._check_fitted()
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        ids = [f"{cui}#{idx}" for cui, idx in zip(self.cuis_, self.alias_indices_)]
        space_path = directory / "space.prot"
        meta_path = directory / "alias_meta.jsonl"
        write_embeddings(space_path, ids, self.matrix_)
        with open(meta_path, "w", encoding="utf-8") as handle:
            for cui, alias, idx in zip(self.cuis_, self.aliases_, self.alias_indices_):
                handle.write(json.dumps({"cui": cui, "alias": alias, "alias_index": idx},
                                        sort_keys=True) + "\n")
        return {"space": str(space_path), "alias_meta": str(meta_path)}

    @classmethod
    def load(cls, directory, encoder=None) -> "PrototypeIndex":
        """Rebuild a fitted index from :meth:`save` output, bit-identically."""
        directory = Path(directory)
        store = load_embeddings(directory / "space.prot")
        meta: list[dict] = []
        with open(directory / "alias_meta.jsonl", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    meta.append(json.loads(line))
        if len(meta) != len(store):
            raise SpaceBuildError(f"alias_meta rows ({len(meta)}) != space rows ({len(store)})")
        for row, (entry_id, record) in enumerate(zip(store.ids, meta)):
            expected = f"{record['cui']}#{record['alias_index']}"
            if entry_id != expected:
                raise SpaceBuildError(f"row {row}: space id {entry_id!r} != meta {expected!r}")
        index = cls(encoder=encoder, embeddings=None if encoder is not None else store)
        index.matrix_ = store.vectors
        index._matrix64 = store.vectors.astype(np.float64)
        index.cuis_ = tuple(r["cui"] for r in meta)
        index.aliases_ = tuple(r["alias"] for r in meta)
        index.alias_indices_ = tuple(int(r["alias_index"]) for r in meta)
        index.dim_ = store.dim
        return index


def build_space(snapshot: OntologySnapshot, encoder=None, embeddings=None,
                canonical_only: bool = False) -> PrototypeIndex:
    """Functional wrapper: fit a :class:`PrototypeIndex` on a snapshot."""
    return PrototypeIndex(encoder=encoder, embeddings=embeddings,
                          canonical_only=canonical_only).fit(snapshot)


def dedup_entities(cands: CandidateSet, n: int) -> list[tuple[str, float]]:
    """First occurrence of each cui in order, truncated to n unique entities."""
    check_positive_int(n, "n")
    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    for candidate in cands.candidates:
        if candidate.cui not in seen:
            seen.add(candidate.cui)
            out.append((candidate.cui, candidate.score))
            if len(out) == n:
                break
    return out
