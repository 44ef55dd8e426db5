"""Query contextualization: neighboring words, attention-based mention
enrichment, and implicit mean-pooled span queries.

Attention tensors are consumed either from ATTN v1 files (typically produced
by the exporter) or from a deterministic synthetic provider for offline runs.

Two behaviors here are documented readings of an underspecified reduction
scheme: the per-head and per-layer stages keep the single top token by
most-common-by-length order while the final stage keeps the top two, and the
enrichment submatrix spans rows from the mention start down to the last
token. Both are pinned by tests.
"""

from __future__ import annotations

import hashlib
import re
import struct
from collections import Counter
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .encoding import FORMAT_VERSION, FormatError, TokenEncodings, TrigramHashEncoder, mean_pool
from .validation import check_positive_int

ATTN_MAGIC = b"ATTN"

_WORD_RE = re.compile(r"\S+")


@dataclass(frozen=True, slots=True)
class MentionSpan:
    """A gold-annotated text span; char offsets index the article text and
    the optional token range holds inclusive word-piece indices."""

    article_id: str
    start: int
    end: int
    surface: str
    gold_cui: str
    token_range: tuple[int, int] | None = None


@dataclass(frozen=True)
class AttentionTensor:
    """Per-layer, per-head token-to-token attention, shape (L, H, k, k)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 4 or min(self.values.shape) < 1:
            raise ValueError(f"attention must be 4-D (layers, heads, k, k), got {self.values.shape}")
        if self.values.shape[2] != self.values.shape[3]:
            raise ValueError("attention matrices must be square over tokens")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("attention contains non-finite values")

    @property
    def layers(self) -> int:
        return int(self.values.shape[0])

    @property
    def heads(self) -> int:
        return int(self.values.shape[1])

    @property
    def token_count(self) -> int:
        return int(self.values.shape[2])


def write_attention(path, values) -> None:
    """Write an ATTN v1 file: magic, version byte, u32 layers/heads/token
    count, then layers*heads*k*k little-endian f32s."""
    tensor = AttentionTensor(np.ascontiguousarray(values, dtype=np.float32))
    with open(path, "wb") as handle:
        handle.write(ATTN_MAGIC)
        handle.write(struct.pack("<B", FORMAT_VERSION))
        handle.write(struct.pack("<III", tensor.layers, tensor.heads, tensor.token_count))
        handle.write(tensor.values.tobytes())


def load_attention(path) -> AttentionTensor:
    """Read an ATTN v1 file; bad magic/version or truncation raise FormatError."""
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != ATTN_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {ATTN_MAGIC!r}")
        version = handle.read(1)
        if len(version) != 1:
            raise FormatError("truncated file while reading version")
        if version[0] != FORMAT_VERSION:
            raise FormatError(f"unsupported ATTN version {version[0]}")
        header = handle.read(12)
        if len(header) != 12:
            raise FormatError("truncated file while reading header")
        layers, heads, count = struct.unpack("<III", header)
        if min(layers, heads, count) < 1:
            raise FormatError("layers, heads and token count must be positive")
        expected = layers * heads * count * count * 4
        raw = handle.read(expected)
        if len(raw) != expected:
            raise FormatError("truncated file while reading attention values")
        if handle.read(1):
            raise FormatError("trailing bytes after attention values")
    values = np.frombuffer(raw, dtype="<f4").reshape(layers, heads, count, count).copy()
    if not np.all(np.isfinite(values)):
        raise FormatError("attention contains non-finite values")
    return AttentionTensor(values)


def load_stopwords(path=None) -> frozenset[str]:
    """Load a stopword file (one lowercase word per line, ``#`` comments);
    defaults to the bundled standard English list."""
    if path is None:
        text = resources.files("protolink").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    words = (line.strip().lower() for line in text.splitlines())
    return frozenset(w for w in words if w and not w.startswith("#"))


def sort_mcbl(items) -> list[str]:
    """Most-common items, ordered by length descending (ties lexicographic).

    Keeps only the distinct items attaining the maximal occurrence count,
    so frequency always beats length.
    """
    items = list(items)
    if not items:
        raise ValueError("items must be non-empty")
    counts = Counter(items)
    top = max(counts.values())
    winners = [item for item in counts if counts[item] == top]
    return sorted(winners, key=lambda s: (-len(s), s))


def neighboring_context(article_text: str, span: MentionSpan, w: int = 2,
                        mention: str | None = None) -> str:
    """Surround the mention with up to w whitespace words on each side,
    clipped at the article boundaries and joined by single spaces.

    ``mention`` substitutes the rendered mention text (e.g. an
    abbreviation-expanded form) without moving the span itself.
    """
    if w < 0:
        raise ValueError(f"w must be non-negative, got {w}")
    if not (0 <= span.start < span.end <= len(article_text)) \
            or article_text[span.start:span.end] != span.surface:
        raise ValueError(f"span {span.start}:{span.end} does not match the article text")
    rendered = span.surface if mention is None else mention
    if w == 0:
        return rendered
    before = article_text[: span.start].split()[-w:]
    after = article_text[span.end:].split()[:w]
    return " ".join(before + [rendered] + after)


def attention_enrich(attn: AttentionTensor, tokens, span: tuple[int, int],
                     stopwords, mention: str | None = None) -> str:
    """Append the tokens the article attends to most for a mention span.

    Per layer and head, each span column of the attention submatrix (rows
    from the span start through the last token) votes for the token at its
    argmax row (ties go to the lowest row). Votes reduce head-wise, then
    layer-wise, then across layers via :func:`sort_mcbl`, keeping the final
    top two. After stopword removal the survivors are appended as
    ``"<mention>: <ctx1>,<ctx2>"``; if none survive the mention is returned
    unchanged.
    """
    tokens = list(tokens)
    start, end = span
    if attn.token_count != len(tokens):
        raise ValueError(f"attention token count {attn.token_count} != {len(tokens)} tokens")
    if not (0 <= start <= end < len(tokens)):
        raise ValueError(f"span {span!r} out of bounds for {len(tokens)} tokens")
    if mention is None:
        mention = " ".join(tokens[start : end + 1])

    layer_reps: list[str] = []
    for layer in range(attn.layers):
        head_reps: list[str] = []
        for head in range(attn.heads):
            sub = attn.values[layer, head, start:, start : end + 1]
            argmax_rows = np.argmax(sub, axis=0)
            votes = [tokens[start + int(row)] for row in argmax_rows]
            head_reps.append(sort_mcbl(votes)[0])
        layer_reps.append(sort_mcbl(head_reps)[0])
    enrichment = sort_mcbl(layer_reps)[:2]

    kept = [tok for tok in enrichment if tok.lower() not in stopwords]
    if not kept:
        return mention
    return f"{mention}: {','.join(kept)}"


def implicit_query(encodings: TokenEncodings, span: tuple[int, int]) -> np.ndarray:
    """Mean-pooled unit query over the mention's token encodings; meant to be
    searched against the canonical-name-only prototype space."""
    return mean_pool(encodings, span)


def tokenize_words(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    """Whitespace word split with [start, end) char offsets per word."""
    tokens, offsets = [], []
    for match in _WORD_RE.finditer(text):
        tokens.append(match.group())
        offsets.append((match.start(), match.end()))
    return tokens, offsets


def word_span_for_mention(offsets, start: int, end: int) -> tuple[int, int]:
    """Inclusive word-index range overlapping the [start, end) char range."""
    hit = [i for i, (ws, we) in enumerate(offsets) if ws < end and we > start]
    if not hit:
        raise ValueError(f"char range {start}:{end} overlaps no word")
    return hit[0], hit[-1]


class SyntheticContextProvider:
    """Deterministic word-level substitute for exported token/attention files.

    Words are the word pieces; token encodings come from the reference
    encoder and attention is a per-row softmax over logits seeded by the
    article id, so the whole contextual pipeline runs offline and
    reproducibly.
    """

    def __init__(self, dim: int = 64, layers: int = 2, heads: int = 2):
        self.dim = check_positive_int(dim, "dim")
        self.layers = check_positive_int(layers, "layers")
        self.heads = check_positive_int(heads, "heads")
        self._encoder = TrigramHashEncoder(dim=dim)

    def token_encodings(self, text: str) -> TokenEncodings:
        tokens, _ = tokenize_words(text)
        if not tokens:
            raise ValueError("text has no words")
        vectors = np.vstack([self._encoder.encode(tok) for tok in tokens]).astype(np.float32)
        return TokenEncodings(tokens=tuple(tokens), vectors=vectors)

    def token_range(self, text: str, start: int, end: int) -> tuple[int, int]:
        _, offsets = tokenize_words(text)
        return word_span_for_mention(offsets, start, end)

    def attention(self, article_id: str, text: str) -> AttentionTensor:
        tokens, _ = tokenize_words(text)
        if not tokens:
            raise ValueError("text has no words")
        seed = int.from_bytes(hashlib.blake2b(article_id.encode("utf-8"), digest_size=8).digest(),
                              "little")
        rng = np.random.default_rng(seed)
        logits = rng.standard_normal((self.layers, self.heads, len(tokens), len(tokens)))
        shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
        values = shifted / shifted.sum(axis=-1, keepdims=True)
        return AttentionTensor(values.astype(np.float32))
