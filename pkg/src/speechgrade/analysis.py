"""Attention-split reports, audio-replacement ablations, and trace export."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import audio
from .checkpoint import Checkpoint
from .corpus import ResponseRecord
from .dataset import Example
from .errors import ContractError
from .metrics import ThresholdSet
from .model import AUDIO, TEXT, AttentionTrace, modality_split
from .training import evaluate

logger = logging.getLogger(__name__)


@dataclass
class SplitRow:
    group: str
    text_pct: float
    audio_pct: float
    count: int


def _require_mmaf(ckpt: Checkpoint) -> None:
    if ckpt.kind != "MMAF":
        raise ContractError(f"attention analysis needs an MMAF checkpoint, got {ckpt.kind}")


def split_rows(groups: Sequence[str], traces: Sequence[AttentionTrace], order: Sequence[str] | None = None) -> list[SplitRow]:
    """Mean of per-response (text %, audio %) within each group."""
    buckets: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for g, tr in zip(groups, traces):
        buckets[g].append(modality_split(tr))
    keys = [k for k in (order or sorted(buckets)) if k in buckets]
    rows = []
    for k in keys:
        arr = np.array(buckets[k])
        rows.append(SplitRow(k, float(arr[:, 0].mean()), float(arr[:, 1].mean()), len(arr)))
    return rows


def attention_split_report(ckpt: Checkpoint, examples: Sequence[Example], by: str = "prompt") -> list[SplitRow]:
    """Group by ``prompt``, human ``grade``, or ``predicted`` grade."""
    _require_mmaf(ckpt)
    result = evaluate(ckpt, examples)
    labels = ckpt.scale.labels
    if by == "prompt":
        groups = [ckpt.prompt or "all"] * len(examples)
    elif by == "grade":
        groups = [labels[p.human] for p in result.predictions]
    elif by == "predicted":
        groups = [labels[p.grade] for p in result.predictions]
    else:
        raise ContractError(f"group-by must be prompt, grade or predicted; got {by!r}")
    return split_rows(groups, result.traces, order=labels if by != "prompt" else None)


@dataclass
class AblationReport:
    qwk_without_to: float | None
    qwk_with_to: float | None
    baseline_without_to: float | None
    baseline_with_to: float | None
    scored: int
    skipped: int = 0

    def relative_drop(self, with_to: bool = False) -> float | None:
        base = self.baseline_with_to if with_to else self.baseline_without_to
        new = self.qwk_with_to if with_to else self.qwk_without_to
        if base is None or new is None or base == 0:
            return None
        return (base - new) / base


def _ablation(ckpt: Checkpoint, records: Sequence[ResponseRecord], clip_fn, thresholds: ThresholdSet | None, skipped: int = 0) -> AblationReport:
    feat = ckpt.featurizer
    with_audio, with_text = ckpt.model.uses_audio, ckpt.model.uses_text
    original = feat.transform(records, with_audio, with_text)
    replaced = feat.transform(records, with_audio, with_text, clip_fn=clip_fn)
    base = evaluate(ckpt, original, thresholds)
    new = evaluate(ckpt, replaced, thresholds)
    return AblationReport(new.qwk, new.qwk_thresholds, base.qwk, base.qwk_thresholds, len(records), skipped)


def ablate_white_noise(
    ckpt: Checkpoint,
    records: Sequence[ResponseRecord],
    seed: int = 0,
    thresholds: ThresholdSet | None = None,
) -> AblationReport:
    """Replace each response's audio with uniform noise of the same length."""
    _require_mmaf(ckpt)
    index = {r.id: i for i, r in enumerate(records)}

    def noise(rec: ResponseRecord):
        return audio.white_noise_like(rec.load_audio(), np.random.default_rng([seed, index[rec.id]]))

    return _ablation(ckpt, records, noise, thresholds)


def ablate_swapped_audio(
    ckpt: Checkpoint,
    records: Sequence[ResponseRecord],
    replacement_dir: str | Path,
    thresholds: ThresholdSet | None = None,
) -> AblationReport:
    """Substitute ``<replacement_dir>/<id>.wav`` for each response's audio.

    Responses without a replacement file are skipped and counted.
    """
    _require_mmaf(ckpt)
    replacement_dir = Path(replacement_dir)
    kept = []
    for rec in records:
        if (replacement_dir / f"{rec.id}.wav").is_file():
            kept.append(rec)
        else:
            logger.warning("no replacement audio for %s; skipped", rec.id)
    skipped = len(records) - len(kept)
    if not kept:
        raise ContractError(f"no replacement audio found in {replacement_dir}")
    return _ablation(ckpt, kept, lambda rec: audio.read_wav(replacement_dir / f"{rec.id}.wav"), thresholds, skipped)


def minmax(values: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant vector maps to zeros."""
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


@dataclass
class TraceRow:
    modality: str
    index: int
    weight: float
    minmax: float
    token: str | None = None
    start_s: float | None = None
    end_s: float | None = None

    def to_json(self) -> str:
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None})


def export_attention_trace(ckpt: Checkpoint, record: ResponseRecord) -> list[TraceRow]:
    """Per-position attention for one response, min-max scaled per modality."""
    _require_mmaf(ckpt)
    ex = ckpt.featurizer.example(record)
    trace = evaluate(ckpt, [ex]).traces[0]
    tags = np.asarray(trace.tags)
    scaled = np.zeros(len(trace))
    for tag in (AUDIO, TEXT):
        sel = tags == tag
        if sel.any():
            scaled[sel] = minmax(trace.weights[sel])
    seconds_per_col = audio.HOP / audio.SAMPLE_RATE
    width = ex.frames.frames.shape[2]
    rows = []
    for pos, (tag, idx) in enumerate(zip(trace.tags, trace.indices)):
        row = TraceRow(tag, idx, float(trace.weights[pos]), float(scaled[pos]))
        if tag == TEXT:
            row.token = ex.words[idx]
        else:
            row.start_s = idx * width * seconds_per_col
            row.end_s = min((idx + 1) * width, ex.frames.num_valid_columns) * seconds_per_col
        rows.append(row)
    return rows
