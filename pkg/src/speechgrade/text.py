"""Transcript tokenization, vocabulary, and pretrained embedding tables."""

from __future__ import annotations

import logging
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, FormatError, ParameterError, ParseError

logger = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
EMBEDDING_DIM = 300

_PUNCT = set(string.punctuation) | {"’", "‘", "“", "”", "…", "–", "—"}


def tokenize(transcript: str) -> list[str]:
    """Lowercase, split on whitespace, and peel punctuation off both ends.

    >>> tokenize("No smoking.")
    ['no', 'smoking', '.']
    """
    tokens: list[str] = []
    for chunk in transcript.lower().split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in _PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


class Vocabulary:
    """Token/id bijection. Ids 0 and 1 are reserved for padding and unknown."""

    def __init__(self, tokens: Sequence[str]):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN] + [t for t in tokens if t not in (PAD_TOKEN, UNK_TOKEN)]
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise FormatError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi and self.stoi[token] >= 2

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.itos[idx]


def build_vocabulary(transcripts: Iterable[str]) -> Vocabulary:
    """Order: frequency descending, ties broken lexicographically."""
    transcripts = list(transcripts)
    if not transcripts:
        raise DegenerateInputError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for text in transcripts for tok in tokenize(text))
    return Vocabulary(sorted(counts, key=lambda t: (-counts[t], t)))


@dataclass
class TokenSequence:
    ids: np.ndarray
    valid_length: int

    def __len__(self) -> int:
        return len(self.ids)


def encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int) -> TokenSequence:
    if max_len < 1:
        raise ParameterError(f"max_len must be >= 1, got {max_len}")
    if len(tokens) > max_len:
        logger.warning("truncating transcript of %d tokens to %d", len(tokens), max_len)
        tokens = tokens[:max_len]
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    ids[: len(tokens)] = [vocab.id(t) for t in tokens]
    return TokenSequence(ids, len(tokens))


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # [vocab_size, dim]
    trainable: bool = True
    coverage: float = 0.0


def random_embeddings(vocab: Vocabulary, dim: int = EMBEDDING_DIM, rng: np.random.Generator | None = None) -> EmbeddingTable:
    rng = rng or np.random.default_rng(0)
    matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), dim))
    matrix[PAD_ID] = 0.0
    matrix[UNK_ID] = 0.0
    return EmbeddingTable(matrix)


def load_pretrained_embeddings(
    path: str | Path,
    vocab: Vocabulary,
    dim: int = EMBEDDING_DIM,
    rng: np.random.Generator | None = None,
) -> EmbeddingTable:
    """Copy matching rows from a GloVe-style text file.

    Rows absent from the file keep a uniform(-0.05, 0.05) init; padding and
    unknown rows are zero. ``coverage`` is the fraction of real vocabulary
    tokens found in the file.
    """
    table = random_embeddings(vocab, dim, rng)
    found: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise FormatError(f"{path}: line {lineno} has {len(parts) - 1} values, expected {dim}")
            try:
                values = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"non-numeric embedding value ({exc})", lineno) from exc
            if parts[0] in vocab:
                row = vocab.id(parts[0])
                table.matrix[row] = values
                found.add(row)
    table.matrix[UNK_ID] = 0.0
    real = len(vocab) - 2
    table.coverage = len(found) / real if real else 0.0
    return table
