"""Design-brief tokenization and the frozen text embedder.

The default embedder maps tokens into a fixed random table via a stable
hash, so embeddings are reproducible from (seed, vocab_size, d_model) alone
and never change during training. A pretrained embedder can be plugged in by
providing the same `embed(raw) -> TextBrief` surface.
"""

from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

_PUNCT = str.maketrans({c: " " for c in string.punctuation})


def tokenize(raw: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    if raw is None or not raw.strip():
        raise ValidationError("prompt must be non-empty")
    return raw.lower().translate(_PUNCT).split()


def stable_token_hash(token: str) -> int:
    """Platform-stable 64-bit hash (Python's hash() is salted per process)."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class TextBrief:
    raw: str
    tokens: list[str]
    token_ids: list[int]
    embedding: np.ndarray  # (L, d_model) float32

    def __post_init__(self):
        if not np.all(np.isfinite(self.embedding)):
            raise ValidationError("text embedding contains non-finite values")


@dataclass
class HashTextEmbedder:
    """Deterministic seeded token-hash embedding table; never trained."""

    d_model: int = 128
    vocab_size: int = 4096
    seed: int = 0
    max_len: int = 32
    table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        scale = 1.0 / np.sqrt(self.d_model)
        self.table = (rng.standard_normal((self.vocab_size, self.d_model)) * scale).astype(np.float32)

    def token_index(self, token: str) -> int:
        return stable_token_hash(token) % self.vocab_size

    def embed(self, raw: str) -> TextBrief:
        tokens = tokenize(raw)[: self.max_len]
        ids = [self.token_index(t) for t in tokens]
        emb = self.table[ids].copy()
        return TextBrief(raw=raw, tokens=tokens, token_ids=ids, embedding=emb)

    @property
    def checksum(self) -> str:
        return hashlib.sha256(self.table.tobytes()).hexdigest()

    def to_meta(self) -> dict:
        return {
            "kind": "hash",
            "d_model": self.d_model,
            "vocab_size": self.vocab_size,
            "seed": self.seed,
            "max_len": self.max_len,
            "checksum": self.checksum,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "HashTextEmbedder":
        emb = cls(d_model=meta["d_model"], vocab_size=meta["vocab_size"],
                  seed=meta["seed"], max_len=meta["max_len"])
        if "checksum" in meta and emb.checksum != meta["checksum"]:
            raise ValidationError("embedder table checksum mismatch; seed or shape differs")
        return emb
