"""Annotated-article ingest and abbreviation expansion."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .context import MentionSpan


class CorpusError(ValueError):
    """Raised for malformed corpus or abbreviation-map files."""


@dataclass(frozen=True, slots=True)
class Article:
    """A title+abstract document with gold mention annotations.

    Mention offsets index ``text``, which is ``title + "\\n" + abstract``.
    """

    article_id: str
    title: str
    abstract: str
    mentions: tuple[MentionSpan, ...]

    @property
    def text(self) -> str:
        return self.title + "\n" + self.abstract


def load_corpus(path) -> list[Article]:
    """Read a line-delimited JSON corpus.

    Each line is ``{"id", "title", "abstract", "mentions": [{"start", "end",
    "text", "cui"}, ...]}``. Every mention surface must equal its text slice
    and each (start, end) span may carry only one gold annotation.
    """
    articles: list[Article] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                article_id = str(obj["id"])
                title, abstract = str(obj["title"]), str(obj["abstract"])
                raw_mentions = obj.get("mentions", [])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"line {line_no}: invalid article record ({exc})") from exc
            if article_id in seen_ids:
                raise CorpusError(f"line {line_no}: duplicate article id {article_id!r}")
            seen_ids.add(article_id)
            text = title + "\n" + abstract
            mentions: list[MentionSpan] = []
            spans_seen: set[tuple[int, int]] = set()
            for m in raw_mentions:
                try:
                    start, end = int(m["start"]), int(m["end"])
                    surface, cui = str(m["text"]), str(m["cui"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise CorpusError(f"line {line_no}: invalid mention record ({exc})") from exc
                if not (0 <= start < end <= len(text)):
                    raise CorpusError(f"line {line_no}: mention span {start}:{end} out of bounds")
                if text[start:end] != surface:
                    raise CorpusError(f"line {line_no}: mention text {surface!r} does not match "
                                      f"slice {text[start:end]!r}")
                if (start, end) in spans_seen:
                    raise CorpusError(f"line {line_no}: span {start}:{end} annotated more than "
                                      "once (multiple golds per mention are unsupported)")
                spans_seen.add((start, end))
                mentions.append(MentionSpan(article_id=article_id, start=start, end=end,
                                            surface=surface, gold_cui=cui))
            articles.append(Article(article_id=article_id, title=title, abstract=abstract,
                                    mentions=tuple(mentions)))
    return articles


def load_abbreviations(path) -> dict[str, list[tuple[str, str]]]:
    """Read an Ab3p-style map: one ``<article_id>\\t<short>\\t<long>`` per line."""
    table: dict[str, list[tuple[str, str]]] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3 or not all(parts):
                raise CorpusError(f"line {line_no}: expected '<article_id>\\t<short>\\t<long>'")
            article_id, short, long = parts
            table.setdefault(article_id, []).append((short, long))
    return table


def expand_abbreviations(text: str, pairs) -> str:
    """Replace short forms with their long forms inside a mention string.

    A whole-string match is replaced outright; otherwise short forms are
    replaced at word boundaries, longest short form first so nested
    abbreviations cannot clobber each other.
    """
    for short, long in sorted(pairs, key=lambda p: -len(p[0])):
        if text == short:
            return long
    expanded = text
    for short, long in sorted(pairs, key=lambda p: -len(p[0])):
        expanded = re.sub(rf"(?<!\w){re.escape(short)}(?!\w)", lambda _: long, expanded)
    return expanded
