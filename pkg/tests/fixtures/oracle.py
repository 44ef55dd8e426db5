#!/usr/bin/env python3
"""Independent oracle for the bundled fixture: recomputes the end-to-end
numbers (recall, breakdown, transition heatmap, grid search) from the raw
fixture files with naive pure-python code and freezes them in expected.json.

Deliberately shares no code with the package: hashing, cosine, ranking,
deduplication, classification and the grid scan are all reimplemented here
in the most literal way (full sorts, dict tallies, O(n*d) loops).

Run from the repo root:  python3 tests/fixtures/oracle.py
"""

from __future__ import annotations

import json
import math
from pathlib import Path

FIXTURE_DIR = Path(__file__).parent
K = 10
DIM = 64
GRID_A = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
GRID_B = (0.0, 0.02, 0.05, 0.1, 0.2, 0.5)
GRID_C = (0.0, 0.01, 0.05, 0.1, 0.5)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    value = FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * FNV_PRIME) & MASK
    return value


def encode(text: str) -> list[float]:
    padded = "#" + text.strip().lower() + "#"
    buckets = [0.0] * DIM
    for i in range(len(padded) - 2):
        digest = fnv1a64(padded[i:i + 3].encode("utf-8"))
        buckets[digest % DIM] += -1.0 if digest >> 63 else 1.0
    norm = math.sqrt(sum(b * b for b in buckets))
    return [b / norm for b in buckets]


def dot(x, y) -> float:
    total = 0.0
    for a, b in zip(x, y):
        total += a * b
    return total


def read_jsonl(path):
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def load_fixture():
    entities = {}
    merge_edges = {}
    for record in read_jsonl(FIXTURE_DIR / "ontology.jsonl"):
        if record["status"] == "active":
            entities[record["cui"]] = record
        elif record["status"] == "merged":
            merge_edges[record["cui"]] = record["merged_into"]

    def resolve(cui):
        while cui in merge_edges:
            cui = merge_edges[cui]
        if cui not in entities:
            raise KeyError(cui)
        return cui

    relations = set()
    for record in read_jsonl(FIXTURE_DIR / "relations.jsonl"):
        a, b = resolve(record["cui1"]), resolve(record["cui2"])
        if a != b:
            relations.add((min(a, b), max(a, b)))

    abbreviations = {}
    with open(FIXTURE_DIR / "abbreviations.tsv", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                article_id, short, long = line.rstrip("\n").split("\t")
                abbreviations[(article_id, short)] = long

    articles = read_jsonl(FIXTURE_DIR / "corpus.jsonl")
    return entities, resolve, relations, abbreviations, articles


def main():
    entities, resolve, relations, abbreviations, articles = load_fixture()

    rows = []  # (cui, alias, vector) in file order
    for cui, record in entities.items():
        for alias in record["aliases"]:
            rows.append((cui, alias, encode(alias)))

    mentions = []  # (gold resolved, ranked candidate list [(cui, alias, score)])
    for article in articles:
        for mention in article["mentions"]:
            query = abbreviations.get((article["id"], mention["text"]), mention["text"])
            vector = encode(query)
            scored = [(cui, alias, dot(vector, row)) for cui, alias, row in rows]
            scored.sort(key=lambda item: (-item[2], item[0], item[1]))
            mentions.append((resolve(mention["cui"]), scored[:K]))

    def unique_entities(ranked):
        seen, out = set(), []
        for cui, _, score in ranked:
            if cui not in seen:
                seen.add(cui)
                out.append(cui)
        return out

    def classify(gold, ranked):
        top = unique_entities(ranked)[0]
        if top == gold:
            return "exact"
        if (min(top, gold), max(top, gold)) in relations:
            return "related"
        return "missed"

    total = len(mentions)
    recall = {}
    for n in (1, 5):
        hits = sum(gold in unique_entities(ranked)[:n] for gold, ranked in mentions)
        recall[str(n)] = hits / total
    alias_hits = sum(gold in {cui for cui, _, _ in ranked} for gold, ranked in mentions)

    baseline = [classify(gold, ranked) for gold, ranked in mentions]
    breakdown = {label: sum(o == label for o in baseline) / total
                 for label in ("exact", "related", "missed")}

    def rerank(ranked, a, b, c):
        tallies = {}
        for cui, _, score in ranked:
            tallies.setdefault(cui, []).append(score)
        rescored = []
        for cui, alias, score in ranked:
            scores = tallies[cui]
            adjusted = a * score + b * (sum(scores) / len(scores)) + c * len(scores)
            rescored.append((cui, alias, adjusted))
        rescored.sort(key=lambda item: (-item[2], item[0], item[1]))
        return rescored

    def grid_r1(a, b, c):
        hits = 0
        for gold, ranked in mentions:
            hits += unique_entities(rerank(ranked, a, b, c))[0] == gold
        return hits / total

    best = None
    best_c_zero = None
    for a in GRID_A:
        for b in GRID_B:
            for c in GRID_C:
                r1 = grid_r1(a, b, c)
                if best is None or r1 > best[3]:
                    best = (a, b, c, r1)
                if c == 0.0 and (best_c_zero is None or r1 > best_c_zero[3]):
                    best_c_zero = (a, b, c, r1)

    after = [classify(gold, [(cui, alias, s) for cui, alias, s in
                             rerank(ranked, best[0], best[1], best[2])])
             for gold, ranked in mentions]
    labels = ("exact", "related", "missed")
    counts = [[0] * 3 for _ in range(3)]
    for pre, post in zip(baseline, after):
        counts[labels.index(pre)][labels.index(post)] += 1
    row_percent = [[(cell * 100.0 / sum(row)) if sum(row) else 0.0 for cell in row]
                   for row in counts]

    expected = {
        "protocol": {"k": K, "dim": DIM, "sweep": [1, 2, 5, 10]},
        "rows": len(rows),
        "mentions": total,
        "recall_at": recall,
        "recall_within_alias_rows": {str(K): alias_hits / total},
        "breakdown": breakdown,
        "grid": {"a": best[0], "b": best[1], "c": best[2], "r1": best[3],
                 "best_c_zero_r1": best_c_zero[3]},
        "transition": {"labels": list(labels), "counts": counts, "row_percent": row_percent},
    }
    out = FIXTURE_DIR / "expected.json"
    with open(out, "w", encoding="utf-8") as handle:
        json.dump(expected, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"wrote {out}")
    print(json.dumps({k: expected[k] for k in ("recall_at", "breakdown", "grid")}, indent=2))


if __name__ == "__main__":
    main()
