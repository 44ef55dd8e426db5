"""Unit-norm phrase and token embeddings: a deterministic reference encoder
plus readers/writers for the PROT and TOKE binary formats."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator

from .validation import check_positive_int, normalized

logger = logging.getLogger(__name__)

PROT_MAGIC = b"PROT"
TOKE_MAGIC = b"TOKE"
FORMAT_VERSION = 1

# Input vectors are renormalized at load when they drift beyond this; unit
# inputs keep their exact bytes so write->read round-trips are lossless.
RENORM_TOL = 1e-6
# Drift beyond this indicates a genuinely broken producer and is warned about.
NORM_WARN_TOL = 1e-3


class FormatError(ValueError):
    """Raised for malformed PROT/TOKE/ATTN files (bad magic, truncation, ...)."""


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


@lru_cache(maxsize=1 << 16)
def _trigram_hash(trigram: str) -> int:
    """64-bit FNV-1a over the trigram's UTF-8 bytes."""
    value = _FNV_OFFSET
    for byte in trigram.encode("utf-8"):
        value = ((value ^ byte) * _FNV_PRIME) & _MASK64
    return value


class TrigramHashEncoder(BaseEstimator):
    """Deterministic character-trigram hashing encoder.

    Lowercases the input, pads it with one boundary marker on each side,
    hashes every character trigram with 64-bit FNV-1a, adds +/-1 (sign taken
    from hash bit 63) into bucket ``hash % dim`` and L2-normalizes. The same
    string always encodes to the same unit vector on any platform, which
    makes it a model-free stand-in for a sentence encoder in offline runs.
    """

    def __init__(self, dim: int = 64, boundary: str = "#"):
        self.dim = dim
        self.boundary = boundary

    def fit(self, X=None, y=None):
        """No-op; the encoder is stateless. Present for pipeline compatibility."""
        check_positive_int(self.dim, "dim")
        return self

    def encode(self, text: str) -> np.ndarray:
        """Encode one phrase to a unit-norm float64 vector."""
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if not isinstance(text, str) or not text.strip():
            raise ValueError("text must be non-empty after trimming")
        padded = self.boundary + text.strip().lower() + self.boundary
        buckets = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(padded) - 2):
            value = _trigram_hash(padded[i : i + 3])
            sign = -1.0 if value >> 63 else 1.0
            buckets[value % self.dim] += sign
        norm = float(np.linalg.norm(buckets))
        if norm == 0.0:
            raise ValueError(f"text {text!r} hashed to a zero vector")
        return buckets / norm

    def transform(self, texts) -> np.ndarray:
        """Encode a sequence of phrases into an (n, dim) matrix."""
        return np.vstack([self.encode(t) for t in texts])


def reference_encode(text: str, dim: int = 64) -> np.ndarray:
    """Functional shorthand for ``TrigramHashEncoder(dim=dim).encode(text)``."""
    return TrigramHashEncoder(dim=dim).encode(text)


@dataclass
class EmbeddingStore:
    """Ordered id -> vector table backing the prototype space."""

    dim: int
    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, dim) float32
    warnings: tuple[str, ...] = ()
    _by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {eid: row for row, eid in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._by_id

    def vector(self, entry_id: str) -> np.ndarray:
        try:
            return self.vectors[self._by_id[entry_id]]
        except KeyError:
            raise KeyError(f"no embedding for id {entry_id!r}") from None


@dataclass(frozen=True)
class TokenEncodings:
    """Parallel token strings and their pre-pooling encoding rows."""

    tokens: tuple[str, ...]
    vectors: np.ndarray  # (k, dim) float32

    def __post_init__(self):
        if len(self.tokens) < 1 or self.vectors.shape[0] != len(self.tokens):
            raise ValueError("tokens and vectors must be parallel and non-empty")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def _read_exact(handle, count: int, what: str) -> bytes:
    data = handle.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file while reading {what}")
    return data


def write_embeddings(path, ids, vectors) -> None:
    """Write a PROT v1 file: magic, version byte, u32 dim, u64 count, then
    per record a u32 id byte-length, the UTF-8 id and dim little-endian f32s."""
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    ids = list(ids)
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ValueError("vectors must be (len(ids), dim)")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if not np.all(np.isfinite(vectors)):
        raise ValueError("vectors contain non-finite values")
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    if np.any(norms == 0.0):
        raise ValueError(f"refusing to write zero-norm vector for id {ids[int(np.argmin(norms))]!r}")
    dim = int(vectors.shape[1])
    with open(path, "wb") as handle:
        handle.write(PROT_MAGIC)
        handle.write(struct.pack("<B", FORMAT_VERSION))
        handle.write(struct.pack("<I", dim))
        handle.write(struct.pack("<Q", len(ids)))
        for entry_id, row in zip(ids, vectors):
            raw = entry_id.encode("utf-8")
            handle.write(struct.pack("<I", len(raw)))
            handle.write(raw)
            handle.write(row.tobytes())


def load_embeddings(path) -> EmbeddingStore:
    """Read a PROT v1 file, renormalizing drifted vectors.

    Vectors already unit-norm within ``RENORM_TOL`` keep their exact bytes;
    drift beyond ``NORM_WARN_TOL`` is recorded in ``store.warnings``. Zero
    vectors, duplicate ids, truncation and bad magic/version all raise
    :class:`FormatError`.
    """
    warnings: list[str] = []
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != PROT_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {PROT_MAGIC!r}")
        (version,) = struct.unpack("<B", _read_exact(handle, 1, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported PROT version {version}")
        (dim,) = struct.unpack("<I", _read_exact(handle, 4, "dim"))
        (count,) = struct.unpack("<Q", _read_exact(handle, 8, "count"))
        if dim < 1:
            raise FormatError("dim must be positive")
        ids: list[str] = []
        seen: set[str] = set()
        vectors = np.empty((count, dim), dtype=np.float32)
        row_bytes = dim * 4
        for row in range(count):
            (id_len,) = struct.unpack("<I", _read_exact(handle, 4, f"id length of record {row}"))
            entry_id = _read_exact(handle, id_len, f"id of record {row}").decode("utf-8")
            if entry_id in seen:
                raise FormatError(f"duplicate id {entry_id!r}")
            seen.add(entry_id)
            values = np.frombuffer(_read_exact(handle, row_bytes, f"vector of id {entry_id!r}"),
                                   dtype="<f4")
            norm = float(np.linalg.norm(values.astype(np.float64)))
            if norm == 0.0:
                raise FormatError(f"zero-norm vector for id {entry_id!r}")
            if abs(norm - 1.0) > NORM_WARN_TOL:
                message = f"vector {entry_id!r} has norm {norm:.6f}, renormalized"
                warnings.append(message)
                logger.warning("%s", message)
            if abs(norm - 1.0) > RENORM_TOL:
                values = (values.astype(np.float64) / norm).astype(np.float32)
            ids.append(entry_id)
            vectors[row] = values
        if handle.read(1):
            raise FormatError("trailing bytes after the last record")
    return EmbeddingStore(dim=int(dim), ids=tuple(ids), vectors=vectors, warnings=tuple(warnings))


def write_token_encodings(path, tokens, vectors) -> None:
    """Write a TOKE v1 file: magic, version byte, u32 dim, u32 token count,
    the length-prefixed UTF-8 tokens, then k*dim little-endian f32s."""
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    tokens = list(tokens)
    if vectors.ndim != 2 or vectors.shape[0] != len(tokens) or not tokens:
        raise ValueError("vectors must be (len(tokens), dim) with at least one token")
    if not np.all(np.isfinite(vectors)):
        raise ValueError("vectors contain non-finite values")
    with open(path, "wb") as handle:
        handle.write(TOKE_MAGIC)
        handle.write(struct.pack("<B", FORMAT_VERSION))
        handle.write(struct.pack("<I", int(vectors.shape[1])))
        handle.write(struct.pack("<I", len(tokens)))
        for token in tokens:
            raw = token.encode("utf-8")
            handle.write(struct.pack("<I", len(raw)))
            handle.write(raw)
        handle.write(vectors.tobytes())


def load_token_encodings(path) -> TokenEncodings:
    """Read a TOKE v1 file. Token rows are pre-pooling states and are kept
    bit-exact; normalization happens only at :func:`mean_pool` exit."""
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != TOKE_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {TOKE_MAGIC!r}")
        (version,) = struct.unpack("<B", _read_exact(handle, 1, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported TOKE version {version}")
        (dim,) = struct.unpack("<I", _read_exact(handle, 4, "dim"))
        (count,) = struct.unpack("<I", _read_exact(handle, 4, "token count"))
        if count < 1 or dim < 1:
            raise FormatError("token count and dim must be positive")
        tokens: list[str] = []
        for idx in range(count):
            (tok_len,) = struct.unpack("<I", _read_exact(handle, 4, f"length of token {idx}"))
            tokens.append(_read_exact(handle, tok_len, f"token {idx}").decode("utf-8"))
        raw = _read_exact(handle, count * dim * 4, "encoding matrix")
        vectors = np.frombuffer(raw, dtype="<f4").reshape(count, dim).copy()
        if not np.all(np.isfinite(vectors)):
            raise FormatError("encoding matrix contains non-finite values")
        if handle.read(1):
            raise FormatError("trailing bytes after the encoding matrix")
    return TokenEncodings(tokens=tuple(tokens), vectors=vectors)


def mean_pool(encodings: TokenEncodings, span: tuple[int, int]) -> np.ndarray:
    """Mean of the token rows over an inclusive index span, L2-normalized."""
    start, end = span
    if end < start:
        raise ValueError(f"empty span {span!r}")
    if start < 0 or end >= len(encodings.tokens):
        raise ValueError(f"span {span!r} out of bounds for {len(encodings.tokens)} tokens")
    pooled = encodings.vectors[start : end + 1].astype(np.float64).mean(axis=0)
    return normalized(pooled, name="pooled span")
