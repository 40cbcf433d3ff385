"""Response manifests, grade scales, stratified splits, and synthetic corpora.

A manifest is UTF-8 JSON Lines. Lines with a ``scale`` key declare the ordered
grade labels of a prompt; every other line is one response record::

    {"prompt": "P1", "scale": ["A2", "Low B1", "High B1"]}
    {"id": "R1", "prompt": "P1", "audio": "audio/R1.wav", "transcript": "...", "grade": "A2"}

Audio paths are resolved relative to the manifest's directory.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .audio import SAMPLE_RATE, AudioClip, read_wav, write_wav
from .errors import ContractError, DegenerateInputError, ParameterError, ParseError

logger = logging.getLogger(__name__)

CEFR_LABELS = ("A2", "Low B1", "High B1", "Low B2", "High B2")


@dataclass(frozen=True)
class GradeScale:
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise ParameterError("a grade scale needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise ParameterError(f"duplicate grade labels: {self.labels}")

    @classmethod
    def cefr(cls, n: int) -> GradeScale:
        """First ``n`` labels of A2 < Low B1 < High B1 < Low B2 < High B2."""
        if n <= len(CEFR_LABELS):
            return cls(CEFR_LABELS[:n])
        return cls(CEFR_LABELS + tuple(f"L{k}" for k in range(len(CEFR_LABELS), n)))

    @property
    def n(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def to_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ContractError(f"grade {label!r} is not on the scale {list(self.labels)}") from None

    def from_index(self, idx: int) -> str:
        return self.labels[idx]

    def normalize(self, label: str) -> float:
        return self.to_index(label) / (self.n - 1)


@dataclass
class ResponseRecord:
    id: str
    prompt: str
    audio: Path
    transcript: str
    grade: str
    split: str | None = None

    def load_audio(self) -> AudioClip:
        return read_wav(self.audio)

    def to_json(self, root: Path | None = None) -> dict:
        audio = self.audio
        if root is not None:
            try:
                audio = self.audio.relative_to(root)
            except ValueError:
                pass
        out = {"id": self.id, "prompt": self.prompt, "audio": audio.as_posix(), "transcript": self.transcript, "grade": self.grade}
        if self.split is not None:
            out["split"] = self.split
        return out


@dataclass
class Manifest:
    records: list[ResponseRecord]
    scales: dict[str, GradeScale] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def prompts(self) -> list[str]:
        return sorted({r.prompt for r in self.records} | set(self.scales))

    def for_prompt(self, prompt: str) -> list[ResponseRecord]:
        return [r for r in self.records if r.prompt == prompt]


_RECORD_FIELDS = ("id", "prompt", "audio", "transcript", "grade")


def load_manifest(path: str | Path, scale: GradeScale | None = None, check_audio: bool = True) -> Manifest:
    """Parse and validate a manifest.

    ``scale`` applies to every prompt and overrides in-file declarations.
    """
    path = Path(path)
    root = path.parent
    scales: dict[str, GradeScale] = {}
    raw: list[tuple[int, dict]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            if "scale" in obj:
                try:
                    scales[str(obj["prompt"])] = GradeScale(tuple(obj["scale"]))
                except (KeyError, ParameterError) as exc:
                    raise ParseError(f"bad scale declaration: {exc}", lineno) from exc
            else:
                raw.append((lineno, obj))

    records: list[ResponseRecord] = []
    seen: set[str] = set()
    for lineno, obj in raw:
        missing = [f for f in _RECORD_FIELDS if f not in obj]
        if missing:
            raise ParseError(f"missing fields {missing}", lineno)
        rec = ResponseRecord(
            id=str(obj["id"]),
            prompt=str(obj["prompt"]),
            audio=(root / obj["audio"]),
            transcript=str(obj["transcript"]),
            grade=str(obj["grade"]),
            split=obj.get("split"),
        )
        if rec.id in seen:
            raise ParseError(f"duplicate id {rec.id!r}", lineno)
        seen.add(rec.id)
        prompt_scale = scale or scales.get(rec.prompt)
        if prompt_scale is None:
            raise ParseError(f"no grade scale declared for prompt {rec.prompt!r}", lineno)
        if rec.grade not in prompt_scale:
            raise ParseError(f"unknown grade label {rec.grade!r} for prompt {rec.prompt!r}", lineno)
        if check_audio and not rec.audio.is_file():
            raise ParseError(f"audio file not found: {rec.audio}", lineno)
        records.append(rec)
    if scale is not None:
        scales = {p: scale for p in {r.prompt for r in records} | set(scales)}
    return Manifest(records, scales)


def write_manifest(path: str | Path, manifest: Manifest) -> None:
    path = Path(path)
    root = path.parent
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for prompt in sorted(manifest.scales):
            fh.write(json.dumps({"prompt": prompt, "scale": list(manifest.scales[prompt].labels)}) + "\n")
        for rec in manifest.records:
            fh.write(json.dumps(rec.to_json(root), ensure_ascii=False) + "\n")


def stratified_split(
    records: Sequence[ResponseRecord],
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> tuple[list[ResponseRecord], list[ResponseRecord], list[ResponseRecord]]:
    """Split each (prompt, grade) stratum by ``ratios`` after a seeded shuffle."""
    if not records:
        raise DegenerateInputError("cannot split an empty record list")
    strata: dict[tuple[str, str], list[ResponseRecord]] = defaultdict(list)
    for rec in records:
        strata[(rec.prompt, rec.grade)].append(rec)
    rng = np.random.default_rng(seed)
    train: list[ResponseRecord] = []
    val: list[ResponseRecord] = []
    test: list[ResponseRecord] = []
    total = sum(ratios)
    for key in sorted(strata):
        group = strata[key]
        if len(group) < 3:
            logger.warning("stratum %s has only %d records; split is best-effort", key, len(group))
        order = rng.permutation(len(group))
        n_train = int(np.floor(len(group) * ratios[0] / total + 0.5))
        n_val = min(int(np.floor(len(group) * ratios[1] / total + 0.5)), len(group) - n_train)
        shuffled = [group[i] for i in order]
        train += shuffled[:n_train]
        val += shuffled[n_train : n_train + n_val]
        test += shuffled[n_train + n_val :]
    return train, val, test


def split_by_tag(records: Iterable[ResponseRecord]) -> dict[str, list[ResponseRecord]]:
    out: dict[str, list[ResponseRecord]] = defaultdict(list)
    for rec in records:
        out[rec.split or ""].append(rec)
    return dict(out)


# synthetic corpus

COMMON_WORDS = (
    "i the a is it to and of in that we you this smoking health city public place time very people "
    "school work home family friend day year think good"
).split()

MARKER_WORDS = (
    "uh um er hmm like thing stuff okay".split(),
    "because maybe should help problem important then also".split(),
    "however therefore furthermore perspective significantly evidence argue nevertheless".split(),
    "consequently moreover substantial implication regulation whereas ultimately comprehensive".split(),
    "notwithstanding paradigm nuanced articulate hence encompass mitigate discourse".split(),
)


@dataclass
class SyntheticSpec:
    """Knobs for :func:`generate_synthetic_corpus`.

    ``audio_signal`` and ``text_signal`` are the probabilities that a
    response's acoustic (resp. lexical marker) features follow its true grade;
    otherwise they follow a uniformly drawn grade. ``audio_levels`` and
    ``text_levels`` optionally map each grade to the feature level actually
    rendered, e.g. ``(0, 1, 1)`` makes grades 1 and 2 acoustically identical.
    Transcript length always follows the true grade with the configured
    correlation.
    """

    n_classes: int = 3
    per_class: int = 40
    prompt: str = "P1"
    audio_signal: float = 1.0
    text_signal: float = 1.0
    marker_rate: float = 0.35
    length_corr: float = 0.35
    base_length: float = 12.0
    length_slope: float = 3.0
    min_length: int = 3
    min_duration: float = 4.0
    max_duration: float = 7.0
    sample_rate: int = SAMPLE_RATE
    audio_levels: tuple[int, ...] | None = None
    text_levels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_classes < 2:
            raise ParameterError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.per_class < 1:
            raise ParameterError(f"per_class must be >= 1, got {self.per_class}")
        if not 0 < self.length_corr < 1:
            raise ParameterError("length_corr must be in (0, 1)")
        for name in ("audio_levels", "text_levels"):
            levels = getattr(self, name)
            if levels is None:
                continue
            levels = tuple(int(v) for v in levels)
            setattr(self, name, levels)
            if len(levels) != self.n_classes or min(levels) < 0 or max(levels) >= self.n_classes:
                raise ParameterError(f"{name} must give a level in [0, {self.n_classes - 1}] for each grade")


def _marker_words(grade: int) -> list[str]:
    if grade < len(MARKER_WORDS):
        return MARKER_WORDS[grade]
    return [f"level{grade}word{k}" for k in range(8)]


def synthesize_audio(grade: int, n_classes: int, duration: float, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE) -> AudioClip:
    """Harmonic tone at 200 + 150*grade Hz in noise.

    SNR rises and the rate of silent gaps falls with the grade.
    """
    frac = grade / (n_classes - 1)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = 200.0 + 150.0 * grade
    phase = rng.uniform(0, 2 * np.pi, size=4)
    tone = sum(np.sin(2 * np.pi * f0 * k * t + phase[k - 1]) / k for k in range(1, 5))
    tone /= np.sqrt(np.mean(tone**2))
    snr_db = -5.0 + 20.0 * frac
    noise = rng.standard_normal(n) * 10 ** (-snr_db / 20.0)
    signal = tone + noise
    gap_rate = 1.5 - 1.0 * frac  # gaps per second
    envelope = np.ones(n)
    for _ in range(rng.poisson(gap_rate * duration)):
        start = rng.uniform(0, duration)
        length = rng.uniform(0.15, 0.4)
        envelope[int(start * sample_rate) : int((start + length) * sample_rate)] = 0.0
    signal *= envelope
    signal /= np.max(np.abs(signal)) or 1.0
    # gaps fall to a room-noise floor rather than digital silence
    signal += 0.003 * rng.standard_normal(n)
    return AudioClip(0.5 * signal / np.max(np.abs(signal)), sample_rate)


def _lengths(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Per-class lengths built from shared normal quantiles.

    Class ``g`` gets ``base + slope*g + sigma*z`` for the same quantile set
    ``z``, with ``sigma`` chosen so the population length/grade correlation
    equals ``length_corr``. Higher classes therefore dominate elementwise.
    """
    n, k = spec.n_classes, spec.per_class
    sd_grade = np.sqrt((n * n - 1) / 12.0)
    sigma = spec.length_slope * sd_grade * np.sqrt(1.0 / spec.length_corr**2 - 1.0)
    z = np.array([NormalDist().inv_cdf((i + 0.5) / k) for i in range(k)])
    out = np.empty((n, k), dtype=np.int64)
    for g in range(n):
        vals = spec.base_length + spec.length_slope * g + sigma * rng.permutation(z)
        out[g] = np.maximum(spec.min_length, np.round(vals)).astype(np.int64)
    return out


def _transcript(text_grade: int, length: int, spec: SyntheticSpec, rng: np.random.Generator) -> str:
    markers = _marker_words(text_grade)
    words = [
        markers[rng.integers(len(markers))] if rng.random() < spec.marker_rate else COMMON_WORDS[rng.integers(len(COMMON_WORDS))]
        for _ in range(length - 1)
    ]
    return " ".join(words) + " ."


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int, out_dir: str | Path) -> Manifest:
    """Write WAVs plus ``manifest.jsonl`` under ``out_dir`` and return the manifest."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    scale = GradeScale.cefr(spec.n_classes)
    lengths = _lengths(spec, rng)
    records: list[ResponseRecord] = []
    idx = 0
    for g in range(spec.n_classes):
        for j in range(spec.per_class):
            idx += 1
            rid = f"R{idx}"
            audio_grade = g if rng.random() < spec.audio_signal else int(rng.integers(spec.n_classes))
            text_grade = g if rng.random() < spec.text_signal else int(rng.integers(spec.n_classes))
            if spec.audio_levels is not None:
                audio_grade = spec.audio_levels[audio_grade]
            if spec.text_levels is not None:
                text_grade = spec.text_levels[text_grade]
            duration = rng.uniform(spec.min_duration, spec.max_duration)
            clip = synthesize_audio(audio_grade, spec.n_classes, duration, rng, spec.sample_rate)
            path = out_dir / "audio" / f"{rid}.wav"
            write_wav(path, clip)
            text = _transcript(text_grade, int(lengths[g, j]), spec, rng)
            records.append(ResponseRecord(rid, spec.prompt, path, text, scale.from_index(g)))
    manifest = Manifest(records, {spec.prompt: scale})
    write_manifest(out_dir / "manifest.jsonl", manifest)
    return manifest
