#!/usr/bin/env python3
"""Generate the bundled synthetic fixture (ontology, relations, corpus,
abbreviation map) and sanity-check its engineered properties.

Design targets, asserted below before anything is written:
  * 20 active entities carrying 47 aliases total, plus merged/deleted/
    suppressed records exercising cui resolution;
  * 200 mentions across 10 articles: 110 exact at baseline, 46 related,
    44 missed;
  * 30 "flip" mentions whose gold entity wins only when the alias-count
    coefficient c is positive, so the grid-search optimum has c > 0 and
    dropping c costs at least 0.05 R@1;
  * no exact score ties and comfortable ranking gaps, so independent
    reimplementations (float32 or float64, any summation order) agree.

Run from the repo root:  python3 tests/fixtures/make_fixture.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

import protolink as pl

FIXTURE_DIR = Path(__file__).parent
K = 10
MIN_GAP = 1e-4

FLIP_STEMS = ("nephrofibroma", "cardiomyalgia", "neurodystonia", "hepatomegalia")
GOLD_SUFFIXES = ("disorder", "disease", "syndrome", "condition")
RELATED_STEMS = ("osteodynia", "myelodynia")
MISSED_STEMS = ("rhinopathy", "dermopathy")
MISSED_GOLD_ALIASES = ("idiopathic nasal finding", "idiopathic skin finding")
FILLERS = {
    "glucose": ("assay", "test", "measurement", "panel", "screening"),
    "insulin": ("therapy", "treatment", "regimen", "course", "protocol"),
    "cardiac": ("imaging", "scan", "radiograph", "mapping", "survey"),
    "tumor": ("staging", "grading", "classification", "typing"),
}

GOLD_TYPES = (["T047"], ["disease or syndrome"])
GOLD_MULTI_TYPES = (["T047", "T191"], ["disease or syndrome", "neoplastic process"])
DISTRACTOR_TYPES = (["T033"], ["clinical finding"])
FILLER_TYPES = {
    "glucose": (["T059"], ["laboratory procedure"]),
    "insulin": (["T061"], ["therapeutic procedure"]),
    "cardiac": (["T060"], ["diagnostic procedure"]),
    "tumor": (["T185"], ["classification"]),
}


def entity(cui, name, aliases, type_ids, type_names, group_id, group_name,
           status="active", merged_into=None):
    record = {"cui": cui, "name": name, "aliases": list(aliases), "type_ids": list(type_ids),
              "type_names": list(type_names), "group_id": group_id, "group_name": group_name,
              "status": status}
    if merged_into:
        record["merged_into"] = merged_into
    return record


def build_entities():
    records = []
    relations = []
    # Flip families: gold with four stem-sharing aliases, distractor with one
    # plural alias sitting closest to the bare-stem mention. Families 1-2 are
    # related pairs, 3-4 are not.
    for fam, stem in enumerate(FLIP_STEMS, start=1):
        gold_cui, distractor_cui = f"C00{fam:02d}01", f"C00{fam:02d}02"
        aliases = [f"{stem} {suffix}" for suffix in GOLD_SUFFIXES]
        type_ids, type_names = GOLD_MULTI_TYPES if fam == 1 else GOLD_TYPES
        records.append(entity(gold_cui, aliases[0], aliases, type_ids, type_names,
                              "DISO", "disorders"))
        records.append(entity(distractor_cui, f"{stem}s", [f"{stem}s"],
                              *DISTRACTOR_TYPES, "PHEN", "phenomena"))
        if fam <= 2:
            relations.append((gold_cui, distractor_cui))
    # Related-stay families: both sides single-alias, pair listed as related.
    for j, stem in enumerate(RELATED_STEMS, start=1):
        gold_cui, distractor_cui = f"C005{j}01", f"C005{j}02"
        records.append(entity(gold_cui, f"{stem} anomaly", [f"{stem} anomaly"],
                              *GOLD_TYPES, "DISO", "disorders"))
        records.append(entity(distractor_cui, f"{stem}s", [f"{stem}s"],
                              *DISTRACTOR_TYPES, "PHEN", "phenomena"))
        relations.append((gold_cui, distractor_cui))
    # Missed-stay families: distractor owns the mention surface, gold is far
    # away in trigram space and unrelated.
    for j, (stem, gold_alias) in enumerate(zip(MISSED_STEMS, MISSED_GOLD_ALIASES), start=1):
        gold_cui, distractor_cui = f"C006{j}01", f"C006{j}02"
        records.append(entity(gold_cui, gold_alias, [gold_alias],
                              *GOLD_TYPES, "DISO", "disorders"))
        records.append(entity(distractor_cui, f"{stem} severe form", [f"{stem} severe form"],
                              *DISTRACTOR_TYPES, "PHEN", "phenomena"))
    # Fillers: exact-mention pools.
    for j, (stem, suffixes) in enumerate(FILLERS.items(), start=1):
        aliases = [f"{stem} {suffix}" for suffix in suffixes]
        type_ids, type_names = FILLER_TYPES[stem]
        records.append(entity(f"C0070{j}", aliases[0], aliases, type_ids, type_names,
                              "PROC", "procedures"))
    # Deprecated records: a merge chain onto family 1, one deleted, one
    # suppressed; relations may reference merged cuis.
    records.append(entity("C009001", "legacy nephrofibroma", ["legacy nephrofibroma"],
                          *GOLD_TYPES, "DISO", "disorders", status="merged",
                          merged_into="C000101"))
    records.append(entity("C009002", "archaic nephrofibroma", ["archaic nephrofibroma"],
                          *GOLD_TYPES, "DISO", "disorders", status="merged",
                          merged_into="C009001"))
    records.append(entity("C008001", "retired concept", ["retired concept"],
                          *GOLD_TYPES, "DISO", "disorders", status="deleted"))
    records.append(entity("C008002", "suppressed concept", ["suppressed concept"],
                          *GOLD_TYPES, "DISO", "disorders", status="suppressed"))
    relations.append(("C009001", "C000102"))  # resolves to the family-1 pair
    return records, relations


ABBREVIATIONS = {
    ("art-01", "GA"): "glucose assay",
    ("art-02", "IT"): "insulin therapy",
    ("art-03", "CI"): "cardiac imaging",
    ("art-04", "TS"): "tumor staging",
    ("art-05", "GT"): "glucose test",
}


def build_mentions():
    """Return per-article lists of (surface, gold_cui) in article order."""
    filler_cui = {stem: f"C0070{j}" for j, stem in enumerate(FILLERS, start=1)}
    exact_pool = []
    for stem, suffixes in FILLERS.items():
        for suffix in suffixes:
            exact_pool.extend([(f"{stem} {suffix}", filler_cui[stem])] * 5)
    for fam, stem in enumerate(FLIP_STEMS, start=1):
        for suffix in GOLD_SUFFIXES:
            if (stem, suffix) == (FLIP_STEMS[-1], GOLD_SUFFIXES[-1]):
                continue  # 95 + 15 = 110 exact mentions
            exact_pool.append((f"{stem} {suffix}", f"C00{fam:02d}01"))
    assert len(exact_pool) == 110

    # Family-1 flip mentions alternate direct and merged gold annotations.
    merged_golds = ["C009001", "C009002", "C009001", "C009002"]
    flip_pool = []
    for slot in range(30):
        fam = slot % 4 + 1
        stem = FLIP_STEMS[fam - 1]
        gold = f"C00{fam:02d}01"
        if fam == 1 and merged_golds:
            gold = merged_golds.pop()
        flip_pool.append((stem, gold))

    related_pool = [(f"{RELATED_STEMS[slot % 2]}s", f"C005{slot % 2 + 1}01")
                    for slot in range(30)]
    missed_pool = [(f"{MISSED_STEMS[slot % 2]} severe form", f"C006{slot % 2 + 1}01")
                   for slot in range(30)]

    articles = []
    for i in range(10):
        article_id = f"art-{i + 1:02d}"
        mentions = exact_pool[i * 11:(i + 1) * 11] + flip_pool[i * 3:(i + 1) * 3] \
            + related_pool[i * 3:(i + 1) * 3] + missed_pool[i * 3:(i + 1) * 3]
        # One filler mention per early article is written as an abbreviation.
        rewritten = []
        used_abbrev = False
        for surface, gold in mentions:
            key = next((k for k in ABBREVIATIONS
                        if k[0] == article_id and ABBREVIATIONS[k] == surface), None)
            if key is not None and not used_abbrev:
                rewritten.append((key[1], gold))
                used_abbrev = True
            else:
                rewritten.append((surface, gold))
        articles.append((article_id, rewritten))
    return articles


TEMPLATES = (
    "Patients presenting {} were monitored closely.",
    "The cohort showed {} in repeated assessments.",
    "Clinicians documented {} during follow-up.",
    "Records associate {} with the admission episode.",
    "Analysts flagged {} across the screening arm.",
)


def build_corpus(articles):
    corpus = []
    for article_id, mentions in articles:
        title = f"Observational study {article_id} of routine clinical findings"
        sentences = []
        spans = []
        offset = len(title) + 1
        for slot, (surface, gold) in enumerate(mentions):
            template = TEMPLATES[slot % len(TEMPLATES)]
            prefix, suffix = template.split("{}")
            start = offset + len(prefix)
            sentence = prefix + surface + suffix
            spans.append({"start": start, "end": start + len(surface), "text": surface,
                          "cui": gold})
            sentences.append(sentence)
            offset += len(sentence) + 1
        abstract = " ".join(sentences)
        corpus.append({"id": article_id, "title": title, "abstract": abstract,
                       "mentions": spans})
    return corpus


def check_fixture(entity_records, relation_pairs, corpus):
    root = FIXTURE_DIR
    snapshot = pl.load_ontology(root / "ontology.jsonl")
    snapshot = pl.load_relations(root / "relations.jsonl", snapshot)
    assert len(snapshot.entities) == 20, len(snapshot.entities)
    assert snapshot.active_alias_count == 47, snapshot.active_alias_count
    assert len(snapshot.merge_map) == 2

    encoder = pl.TrigramHashEncoder(dim=64)
    articles = pl.load_corpus(root / "corpus.jsonl")
    abbreviations = pl.load_abbreviations(root / "abbreviations.tsv")

    strings = set()
    for ent in snapshot.entities.values():
        strings.update(ent.aliases)
        strings.update(ent.type_names)
        strings.add(ent.group_name)
    queries = []
    for article in articles:
        pairs = abbreviations.get(article.article_id, [])
        for mention in article.mentions:
            query = pl.expand_abbreviations(mention.surface, pairs) if pairs else mention.surface
            queries.append((mention, query))
            strings.add(mention.surface)
            strings.add(query)
    vectors = {s: tuple(encoder.encode(s)) for s in strings}
    assert len(set(vectors.values())) == len(vectors), "trigram encoder collision in fixture"

    index = pl.build_space(snapshot, encoder=encoder)
    assert len(index) == 47

    sets = []
    golds = []
    mention_total = 0
    for mention, query in queries:
        cands = index.search(encoder.encode(query), K, query_id=query)
        scores = [c.score for c in cands.candidates]
        # Exactly-zero gaps are structural ties (identical shared-trigram
        # contributions) and break identically by cui everywhere; anything
        # between 0 and MIN_GAP would be float-noise territory.
        gaps = [abs(a - b) for a, b in zip(scores, scores[1:])]
        bad = [g for g in gaps if 0.0 < g < MIN_GAP]
        assert not bad, f"ranking gap {min(bad):.2e} too small for {query!r}"
        sets.append(cands)
        golds.append(pl.resolve_cui(snapshot, mention.gold_cui))
        mention_total += 1
    assert mention_total == 200

    results = [pl.LinkResult(mention=m, entities=tuple(pl.dedup_entities(c, K)))
               for (m, _), c in zip(queries, sets)]
    outcomes, breakdown = pl.classify_matches(results, snapshot)
    tallies = {o: sum(x.outcome is o for x in outcomes) for o in pl.Outcome}
    assert tallies[pl.Outcome.EXACT] == 110, tallies
    assert tallies[pl.Outcome.RELATED] == 46, tallies
    assert tallies[pl.Outcome.MISSED] == 44, tallies

    # Flip mentions must carry every gold alias inside the top-k.
    for (mention, query), cands in zip(queries, sets):
        if query in FLIP_STEMS:
            gold = pl.resolve_cui(snapshot, mention.gold_cui)
            gold_rows = [c for c in cands.candidates if c.cui == gold]
            assert len(gold_rows) == 4, f"{query!r} retrieved {len(gold_rows)} gold aliases"
            assert cands.candidates[0].cui != gold, f"{query!r} should start mis:ranked"

    dev = list(zip(sets, golds))
    best, best_r1 = pl.grid_search(dev)
    _, c_zero_r1 = pl.grid_search(dev, c_grid=(0.0,))
    print(f"grid best: a={best.a} b={best.b} c={best.c} R@1={best_r1:.4f}; "
          f"best with c=0: {c_zero_r1:.4f}")
    assert best.c > 0
    assert best_r1 - c_zero_r1 >= 0.05, (best_r1, c_zero_r1)

    # Winner margins at the grid optimum stay far above float noise.
    for cands in sets:
        rset = pl.parametric_rerank(cands, best)
        top = rset.candidates
        for first, second in zip(top, top[1:]):
            if first.cui != second.cui:
                assert first.adjusted - second.adjusted >= MIN_GAP or \
                    abs(first.adjusted - second.adjusted) == 0.0
                break
    print("fixture checks passed: 20 entities / 47 aliases, 200 mentions, "
          f"baseline breakdown {breakdown}")


def main():
    entity_records, relation_pairs = build_entities()
    articles = build_mentions()
    corpus = build_corpus(articles)

    with open(FIXTURE_DIR / "ontology.jsonl", "w", encoding="utf-8") as handle:
        for record in entity_records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    with open(FIXTURE_DIR / "relations.jsonl", "w", encoding="utf-8") as handle:
        for cui1, cui2 in relation_pairs:
            handle.write(json.dumps({"cui1": cui1, "cui2": cui2}) + "\n")
    with open(FIXTURE_DIR / "corpus.jsonl", "w", encoding="utf-8") as handle:
        for article in corpus:
            handle.write(json.dumps(article, sort_keys=True) + "\n")
    with open(FIXTURE_DIR / "abbreviations.tsv", "w", encoding="utf-8") as handle:
        for (article_id, short), long in sorted(ABBREVIATIONS.items()):
            handle.write(f"{article_id}\t{short}\t{long}\n")

    check_fixture(entity_records, relation_pairs, corpus)


if __name__ == "__main__":
    main()
