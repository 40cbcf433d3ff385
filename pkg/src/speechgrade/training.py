"""Mini-batch MSE training with Adam, early stopping, and best-QWK selection."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .checkpoint import Checkpoint, quantize
from .corpus import GradeScale, ResponseRecord
from .dataset import Example, Featurizer, collate
from .errors import ContractError, ParameterError, UndefinedKappaError
from .model import MODEL_KINDS, AcousticEncoderConfig, AttentionTrace, LexicalEncoderConfig, ScoringModel
from .tensor import Adam, Tensor
from .text import load_pretrained_embeddings

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 5
    dropout: float = 0.3
    seed: int = 0
    acoustic: AcousticEncoderConfig = field(default_factory=AcousticEncoderConfig)
    lexical: LexicalEncoderConfig = field(default_factory=LexicalEncoderConfig)
    embeddings_path: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must be in [0, 1)")
        if self.patience > self.max_epochs:
            raise ParameterError("patience cannot exceed max_epochs")
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be non-negative")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> TrainConfig:
        """Build from flat ``key=value`` pairs; ``audio.*`` / ``text.*`` keys set encoder fields."""
        top: dict = {}
        acoustic: dict = {}
        lexical: dict = {}
        for key, raw in values.items():
            if key.startswith("audio."):
                target, name, proto = acoustic, key[6:], AcousticEncoderConfig()
            elif key.startswith("text."):
                target, name, proto = lexical, key[5:], LexicalEncoderConfig()
            else:
                target, name, proto = top, key, cls()
            if not hasattr(proto, name) or name in ("acoustic", "lexical"):
                raise ParameterError(f"unknown config key {key!r}")
            current = getattr(proto, name)
            if name == "embeddings_path":
                target[name] = raw or None
            elif isinstance(current, bool):
                target[name] = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                target[name] = int(raw)
            elif isinstance(current, float):
                target[name] = float(raw)
            else:
                target[name] = raw
        return cls(acoustic=AcousticEncoderConfig(**acoustic), lexical=LexicalEncoderConfig(**lexical), **top)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_qwk: float | None


@dataclass
class TrainReport:
    epochs: list[EpochRecord]
    selected_epoch: int
    selection: str  # "val_qwk" or "val_loss"
    stopped_early: bool
    wall_time: float = field(default=0.0, compare=False)

    def to_lines(self) -> str:
        lines = [json.dumps({"type": "epoch", **asdict(e)}) for e in self.epochs]
        lines.append(
            json.dumps(
                {
                    "type": "summary",
                    "selected_epoch": self.selected_epoch,
                    "selection": self.selection,
                    "stopped_early": self.stopped_early,
                    "wall_time": self.wall_time,
                }
            )
        )
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_lines(), encoding="utf-8")


def _safe_qwk(human, predicted, n) -> float | None:
    try:
        return metrics.qwk(human, predicted, n)
    except UndefinedKappaError:
        return None


def build_model(kind: str, featurizer: Featurizer, config: TrainConfig) -> ScoringModel:
    if kind not in MODEL_KINDS:
        raise ParameterError(f"model kind must be one of {MODEL_KINDS}, got {kind!r}")
    embeddings = None
    if config.embeddings_path and kind in ("T", "MMAF"):
        table = load_pretrained_embeddings(
            config.embeddings_path, featurizer.vocab, config.lexical.embedding_dim, np.random.default_rng(config.seed)
        )
        logger.info("pretrained embedding coverage: %.1f%%", 100 * table.coverage)
        embeddings = table.matrix
    return ScoringModel(
        kind,
        vocab_size=len(featurizer.vocab),
        acoustic=config.acoustic,
        lexical=config.lexical,
        dropout=config.dropout,
        seed=config.seed,
        embeddings=embeddings,
    )


def predict_examples(model: ScoringModel, examples: Sequence[Example], batch_size: int = 32) -> tuple[np.ndarray, list[AttentionTrace]]:
    scores: list[np.ndarray] = []
    traces: list[AttentionTrace] = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        s, t = model.predict(collate(chunk, model.uses_audio, model.uses_text))
        scores.append(s)
        traces += t
    return np.concatenate(scores), traces


def train_examples(
    kind: str,
    featurizer: Featurizer,
    train_set: Sequence[Example],
    val_set: Sequence[Example],
    config: TrainConfig,
    model: ScoringModel | None = None,
) -> tuple[Checkpoint, TrainReport]:
    """Train on prepared examples. The returned checkpoint holds the best epoch."""
    if not train_set or not val_set:
        raise ContractError("training and validation sets must be non-empty")
    started = time.perf_counter()
    n_grades = featurizer.scale.n
    model = model or build_model(kind, featurizer, config)
    opt = Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    val_grades = np.array([ex.grade for ex in val_set])
    val_targets = np.array([ex.target for ex in val_set])

    history: list[EpochRecord] = []
    snapshots: dict[int, dict[str, np.ndarray]] = {}
    best_qwk: float | None = None
    best_qwk_epoch = 0
    best_loss = np.inf
    best_loss_epoch = 0
    stale = 0
    stopped_early = False
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            chunk = [train_set[i] for i in order[start : start + config.batch_size]]
            batch = collate(chunk, model.uses_audio, model.uses_text)
            targets = Tensor(np.array([ex.target for ex in chunk]))
            out = model.forward(batch, training=True, rng=rng)
            loss = ((out.scores - targets) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(chunk)
        train_loss = total / len(train_set)

        preds, _ = predict_examples(model, val_set)
        val_loss = metrics.mse(val_targets, preds)
        val_qwk = _safe_qwk(val_grades, metrics.round_default(preds * (n_grades - 1), n_grades), n_grades)
        history.append(EpochRecord(epoch, train_loss, val_loss, val_qwk))
        logger.info("epoch %d train %.4f val %.4f qwk %s", epoch, train_loss, val_loss, val_qwk)

        improved = False
        if val_qwk is not None and (best_qwk is None or val_qwk > best_qwk):
            best_qwk, best_qwk_epoch, improved = val_qwk, epoch, True
        if val_loss < best_loss:
            best_loss, best_loss_epoch, stale = val_loss, epoch, 0
            improved = True
        else:
            stale += 1
        if improved:
            snapshots[epoch] = model.state_dict()
        if stale >= config.patience:
            stopped_early = epoch < config.max_epochs
            break

    if best_qwk is None:
        logger.warning("validation QWK undefined at every epoch; selecting by validation loss")
        selected, selection = best_loss_epoch, "val_loss"
    else:
        selected, selection = best_qwk_epoch, "val_qwk"
    model.load_state_dict(snapshots[selected])
    quantize(model)
    ckpt = Checkpoint(model, featurizer, best_val_qwk=best_qwk)
    report = TrainReport(history, selected, selection, stopped_early, time.perf_counter() - started)
    return ckpt, report


def train(
    kind: str,
    train_records: Sequence[ResponseRecord],
    val_records: Sequence[ResponseRecord],
    config: TrainConfig,
    scale: GradeScale,
) -> tuple[Checkpoint, TrainReport]:
    """Fit preprocessing on ``train_records``, then train a ``kind`` model."""
    with_audio = kind in ("A", "MMAF")
    featurizer = Featurizer.fit(train_records, scale, with_audio=with_audio)
    train_set = featurizer.transform(train_records, with_audio=with_audio)
    val_set = featurizer.transform(val_records, with_audio=with_audio)
    return train_examples(kind, featurizer, train_set, val_set, config)


@dataclass
class PredictionRow:
    id: str
    human: int
    normalized: float
    rescaled: float
    grade: int


@dataclass
class EvalResult:
    qwk: float | None
    mse: float  # raw normalized predictions vs normalized human grades
    mse_rounded: float  # rounded grades, normalized
    predictions: list[PredictionRow]
    traces: list[AttentionTrace]
    qwk_thresholds: float | None = None
    mse_rounded_thresholds: float | None = None

    def metric_lines(self) -> str:
        rows = [("qwk", self.qwk), ("mse", self.mse), ("mse_rounded", self.mse_rounded)]
        if self.qwk_thresholds is not None or self.mse_rounded_thresholds is not None:
            rows += [("qwk_thresholds", self.qwk_thresholds), ("mse_rounded_thresholds", self.mse_rounded_thresholds)]
        return "".join(f"{k} {'nan' if v is None else repr(float(v))}\n" for k, v in rows)


def evaluate(
    ckpt: Checkpoint,
    examples: Sequence[Example],
    thresholds: metrics.ThresholdSet | None = None,
) -> EvalResult:
    """Score examples; grades use ``thresholds`` when given, else default rounding."""
    n = ckpt.scale.n
    if thresholds is not None and thresholds.n_grades != n:
        raise ContractError(f"thresholds cover {thresholds.n_grades} grades, checkpoint scale has {n}")
    if not examples:
        raise ContractError("nothing to evaluate")
    scores, traces = predict_examples(ckpt.model, examples)
    human = np.array([ex.grade for ex in examples])
    if human.max() >= n:
        raise ContractError("example grades exceed the checkpoint's scale")
    rescaled = scores * (n - 1)
    default = metrics.round_default(rescaled, n)
    result = EvalResult(
        qwk=_safe_qwk(human, default, n),
        mse=metrics.mse(human / (n - 1), scores),
        mse_rounded=metrics.mse(human / (n - 1), default / (n - 1)),
        predictions=[],
        traces=traces,
    )
    grades = default
    if thresholds is not None:
        grades = metrics.apply_thresholds(rescaled, thresholds)
        result.qwk_thresholds = _safe_qwk(human, grades, n)
        result.mse_rounded_thresholds = metrics.mse(human / (n - 1), grades / (n - 1))
    result.predictions = [
        PredictionRow(ex.id, int(h), float(s), float(r), int(g)) for ex, h, s, r, g in zip(examples, human, scores, rescaled, grades)
    ]
    return result


def calibrate(ckpt: Checkpoint, val_examples: Sequence[Example], step: float = 0.01) -> tuple[metrics.ThresholdSet, float | None, float | None]:
    """Fit thresholds on validation predictions; returns ``(cuts, qwk_before, qwk_after)``."""
    n = ckpt.scale.n
    scores, _ = predict_examples(ckpt.model, val_examples)
    human = np.array([ex.grade for ex in val_examples])
    cuts = metrics.optimize_thresholds(scores * (n - 1), human, n, step=step)
    before = _safe_qwk(human, metrics.round_default(scores * (n - 1), n), n)
    after = _safe_qwk(human, metrics.apply_thresholds(scores * (n - 1), cuts), n)
    return cuts, before, after
