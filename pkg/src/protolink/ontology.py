"""Entity knowledge base: load, validate, and query ontology snapshots.

The on-disk interchange format is line-delimited JSON, one entity record per
line (see :func:`load_ontology`), with inter-entity relations in a second
line-delimited file (see :func:`load_relations`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping


class OntologyError(ValueError):
    """Base class for ontology ingest and lookup failures."""


class MalformedRecordError(OntologyError):
    """A record line is not valid or violates a field invariant."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateCuiError(OntologyError):
    pass


class MergeCycleError(OntologyError):
    pass


class MergeTargetError(OntologyError):
    """A merge record points at a missing or non-active entity."""


class UnknownCuiError(OntologyError):
    pass


class EntityStatus(Enum):
    ACTIVE = "active"
    DELETED = "deleted"
    SUPPRESSED = "suppressed"
    MERGED = "merged"


@dataclass(frozen=True, slots=True)
class Entity:
    """One ontology concept with its aliases and semantic metadata.

    ``aliases[0]`` is always the canonical name; the remaining aliases keep
    their input order. ``type_ids`` and ``type_names`` are parallel and
    non-empty; an entity belongs to exactly one semantic group.
    """

    cui: str
    canonical_name: str
    aliases: tuple[str, ...]
    type_ids: tuple[str, ...]
    type_names: tuple[str, ...]
    group_id: str
    group_name: str
    status: EntityStatus
    merged_into: str | None = None


@dataclass(frozen=True, slots=True)
class RelationTable:
    """Symmetric inter-entity relation pairs keyed by sorted cui tuples."""

    pairs: frozenset[tuple[str, str]]

    def __contains__(self, pair: tuple[str, str]) -> bool:
        a, b = pair
        return (min(a, b), max(a, b)) in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True, slots=True)
class OntologySnapshot:
    """Validated, immutable view of an ontology file.

    ``entities`` holds active entities only. Deleted and suppressed entities
    are dropped (their statuses are tallied in ``excluded``); merged entities
    appear only as fully-chased ``merge_map`` edges onto active cuis.
    """

    entities: Mapping[str, Entity]
    relations: RelationTable
    merge_map: Mapping[str, str]
    excluded: Mapping[str, EntityStatus] = field(default_factory=dict)

    @property
    def active_alias_count(self) -> int:
        return sum(len(e.aliases) for e in self.entities.values())


_REQUIRED_FIELDS = ("cui", "name", "aliases", "type_ids", "type_names", "group_id", "group_name", "status")


def _parse_record(line_no: int, raw: str) -> Entity:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedRecordError(line_no, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise MalformedRecordError(line_no, "record is not a JSON object")
    for key in _REQUIRED_FIELDS:
        if key not in obj:
            raise MalformedRecordError(line_no, f"missing field {key!r}")

    cui = obj["cui"]
    name = obj["name"]
    if not isinstance(cui, str) or not cui:
        raise MalformedRecordError(line_no, "cui must be a non-empty string")
    if not isinstance(name, str) or not name.strip():
        raise MalformedRecordError(line_no, "name must be a non-empty string")

    raw_aliases = obj["aliases"]
    if not isinstance(raw_aliases, list) or not all(isinstance(a, str) and a.strip() for a in raw_aliases):
        raise MalformedRecordError(line_no, "aliases must be a list of non-empty strings")
    # Canonical name is forced to index 0; remaining aliases keep input order.
    aliases = [name] + [a for a in raw_aliases if a != name]
    if len(set(aliases)) != len(aliases):
        raise MalformedRecordError(line_no, "duplicate alias strings within entity")

    type_ids = obj["type_ids"]
    type_names = obj["type_names"]
    if (not isinstance(type_ids, list) or not isinstance(type_names, list)
            or not type_ids or len(type_ids) != len(type_names)):
        raise MalformedRecordError(line_no, "type_ids and type_names must be parallel non-empty lists")

    try:
        status = EntityStatus(obj["status"])
    except ValueError:
        raise MalformedRecordError(line_no, f"unknown status {obj['status']!r}") from None
    merged_into = obj.get("merged_into")
    if status is EntityStatus.MERGED and not merged_into:
        raise MalformedRecordError(line_no, "merged record lacks merged_into")
    if status is not EntityStatus.MERGED and merged_into:
        raise MalformedRecordError(line_no, "merged_into set on a non-merged record")

    return Entity(
        cui=cui,
        canonical_name=name,
        aliases=tuple(aliases),
        type_ids=tuple(str(t) for t in type_ids),
        type_names=tuple(str(t) for t in type_names),
        group_id=str(obj["group_id"]),
        group_name=str(obj["group_name"]),
        status=status,
        merged_into=str(merged_into) if merged_into else None,
    )


def _chase_merges(merge_edges: Mapping[str, str], active: Mapping[str, Entity],
                  excluded: Mapping[str, EntityStatus]) -> dict[str, str]:
    """Resolve raw merge edges to their active endpoints, rejecting cycles."""
    resolved: dict[str, str] = {}
    for start in merge_edges:
        seen = [start]
        cur = start
        while cur in merge_edges:
            cur = merge_edges[cur]
            if cur in seen:
                cycle = " -> ".join(seen + [cur])
                raise MergeCycleError(f"merge cycle detected: {cycle}")
            seen.append(cur)
        if cur in active:
            resolved[start] = cur
        elif cur in excluded:
            raise MergeTargetError(f"merge chain from {start!r} terminates at non-active entity {cur!r}")
        else:
            raise MergeTargetError(f"merge target {cur!r} of {start!r} not present in file")
    return resolved


def load_ontology(path) -> OntologySnapshot:
    """Read an entity interchange file into a validated snapshot.

    One JSON object per line with fields ``cui``, ``name``, ``aliases``,
    ``type_ids``, ``type_names``, ``group_id``, ``group_name``, ``status``
    (one of ``active``/``deleted``/``suppressed``/``merged``) and
    ``merged_into`` (required for merged records). Deleted and suppressed
    records never enter the active set; merged records become merge_map
    entries chased onto active targets.

    Raises :class:`MalformedRecordError`, :class:`DuplicateCuiError`,
    :class:`MergeCycleError` or :class:`MergeTargetError`.
    """
    active: dict[str, Entity] = {}
    excluded: dict[str, EntityStatus] = {}
    merge_edges: dict[str, str] = {}
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            entity = _parse_record(line_no, line)
            if entity.cui in seen:
                raise DuplicateCuiError(f"duplicate cui {entity.cui!r} at line {line_no}")
            seen.add(entity.cui)
            if entity.status is EntityStatus.ACTIVE:
                active[entity.cui] = entity
            elif entity.status is EntityStatus.MERGED:
                merge_edges[entity.cui] = entity.merged_into  # type: ignore[index]
            else:
                excluded[entity.cui] = entity.status

    merge_map = _chase_merges(merge_edges, active, excluded)
    return OntologySnapshot(entities=active, relations=RelationTable(frozenset()),
                            merge_map=merge_map, excluded=excluded)


def load_relations(path, snapshot: OntologySnapshot) -> OntologySnapshot:
    """Attach a relation file to a snapshot, resolving endpoints first.

    One JSON object ``{"cui1": ..., "cui2": ...}`` per line. Endpoints are
    resolved through the merge map; pairs that collapse onto a single active
    entity are dropped (relatedness is meaningless for an exact match).
    Unknown endpoints are an error.
    """
    pairs: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                a, b = str(obj["cui1"]), str(obj["cui2"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRecordError(line_no, f"invalid relation record ({exc})") from exc
            if a == b:
                raise MalformedRecordError(line_no, "relation pairs a cui with itself")
            try:
                ra, rb = resolve_cui(snapshot, a), resolve_cui(snapshot, b)
            except UnknownCuiError as exc:
                raise MalformedRecordError(line_no, f"relation references unknown cui ({exc})") from exc
            if ra != rb:
                pairs.add((min(ra, rb), max(ra, rb)))
    return OntologySnapshot(entities=snapshot.entities, relations=RelationTable(frozenset(pairs)),
                            merge_map=snapshot.merge_map, excluded=snapshot.excluded)


def resolve_cui(snapshot: OntologySnapshot, cui: str) -> str:
    """Map a cui to its active form: identity for active, merge-map otherwise."""
    if cui in snapshot.entities:
        return cui
    target = snapshot.merge_map.get(cui)
    if target is None:
        raise UnknownCuiError(f"unknown cui {cui!r}")
    if target not in snapshot.entities:
        # Unreachable for snapshots built by load_ontology; guards hand-built ones.
        raise MergeTargetError(f"resolution of {cui!r} terminates at non-active {target!r}")
    return target


def is_related(snapshot: OntologySnapshot, a: str, b: str) -> bool:
    """True when the resolved pair is distinct and listed in the relation table."""
    ra = resolve_cui(snapshot, a)
    rb = resolve_cui(snapshot, b)
    return ra != rb and (min(ra, rb), max(ra, rb)) in snapshot.relations.pairs


def convert_mr_tables(concept_table=None, semantic_type_table=None, relation_table=None):
    """Stub documenting conversion from MRCONSO/MRSTY/MRREL-style tables.

    Producing interchange files from a licensed ontology release is out of
    scope here, but the mapping is mechanical:

    * concept rows (MRCONSO-style): group rows by CUI; the preferred-term row
      (``TS=P``/``ISPREF=Y``) supplies ``name``, every distinct ``STR``
      becomes an alias. Rows flagged suppressed (``SUPPRESS`` not ``N``) give
      ``status="suppressed"``; retired CUIs with a synonymous successor give
      ``status="merged"`` plus ``merged_into``; other retirements give
      ``status="deleted"``.
    * semantic-type rows (MRSTY-style): ``TUI``/``STY`` pairs aggregate into
      ``type_ids``/``type_names``; the semantic-group lookup published with
      the ontology supplies ``group_id``/``group_name``.
    * relation rows (MRREL-style): each ``CUI1``/``CUI2`` row becomes one
      ``{"cui1", "cui2"}`` line; direction and relation labels are discarded
      because relatedness is consumed symmetrically.
    """
    raise NotImplementedError("table conversion is documentation-only; see the docstring")
