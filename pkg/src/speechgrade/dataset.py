"""Turn response records into model-ready examples and padded batches."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import audio, text
from .audio import AudioClip, SpectrogramFrames
from .corpus import GradeScale, ResponseRecord
from .errors import ContractError
from .model import Batch
from .text import TokenSequence, Vocabulary

logger = logging.getLogger(__name__)


@dataclass
class Example:
    id: str
    grade: int
    target: float
    frames: SpectrogramFrames | None
    tokens: TokenSequence | None
    words: list[str]


@dataclass
class Featurizer:
    """Per-prompt preprocessing state fit on the training split."""

    scale: GradeScale
    vocab: Vocabulary
    max_columns: int
    max_len: int

    @classmethod
    def fit(cls, train: Sequence[ResponseRecord], scale: GradeScale, with_audio: bool = True) -> Featurizer:
        vocab = text.build_vocabulary(r.transcript for r in train)
        max_len = max(1, max(len(text.tokenize(r.transcript)) for r in train))
        max_columns = audio.FRAME_WIDTH
        if with_audio:
            longest = max(audio.logmel(r.load_audio()).shape[1] for r in train)
            max_columns = audio.round_up_columns(longest)
        return cls(scale, vocab, max_columns, max_len)

    def example(
        self,
        record: ResponseRecord,
        with_audio: bool = True,
        with_text: bool = True,
        clip_fn: Callable[[ResponseRecord], AudioClip] | None = None,
    ) -> Example:
        grade = self.scale.to_index(record.grade)
        frames = None
        if with_audio:
            clip = clip_fn(record) if clip_fn else record.load_audio()
            frames = audio.featurize(clip, self.max_columns)
        words = text.tokenize(record.transcript)
        tokens = None
        if with_text:
            tokens = text.encode(words, self.vocab, self.max_len)
            words = words[: tokens.valid_length]
        return Example(record.id, grade, grade / (self.scale.n - 1), frames, tokens, words)

    def transform(
        self,
        records: Sequence[ResponseRecord],
        with_audio: bool = True,
        with_text: bool = True,
        clip_fn: Callable[[ResponseRecord], AudioClip] | None = None,
        threads: int = 1,
    ) -> list[Example]:
        def one(rec):
            return self.example(rec, with_audio, with_text, clip_fn)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                return list(pool.map(one, records))
        return [one(r) for r in records]


def collate(examples: Sequence[Example], with_audio: bool = True, with_text: bool = True) -> Batch:
    """Pad each modality to the longest member of the batch, with masks."""
    if not examples:
        raise ContractError("cannot collate an empty batch")
    batch = Batch()
    if with_audio:
        n_frames = max(ex.frames.valid_frames for ex in examples)
        batch.frames = np.stack([ex.frames.frames[:n_frames] for ex in examples])
        batch.frame_mask = np.arange(n_frames)[None, :] < np.array([ex.frames.valid_frames for ex in examples])[:, None]
    if with_text:
        lengths = np.array([ex.tokens.valid_length for ex in examples])
        if np.any(lengths == 0):
            raise ContractError("a transcript has no tokens")
        n_tok = int(lengths.max())
        batch.token_ids = np.stack([ex.tokens.ids[:n_tok] for ex in examples])
        batch.token_mask = np.arange(n_tok)[None, :] < lengths[:, None]
    return batch
