"""BDRCNN acoustic encoder, BDLSTM lexical encoder, and attention-fusion scorer.

Three model kinds share one class:

* ``"A"``    audio only: per-frame CNN stack -> global max pool -> BiLSTM -> attention.
* ``"T"``    text only: embeddings -> BiLSTM -> attention.
* ``"MMAF"`` both encoders; their state sequences are concatenated along the
  time axis and a single attention distribution spans all positions.

Each kind ends with a dense 1-unit layer and a logistic squash, so scores live
in (0, 1), the normalized grade range.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ContractError, DegenerateInputError, DimensionError, ParameterError
from .tensor import LSTMWeights, Tensor

MODEL_KINDS = ("A", "T", "MMAF")
AUDIO = "audio"
TEXT = "text"


@dataclass
class AcousticEncoderConfig:
    conv_sets: int = 5
    convs_per_set: int = 2
    base_filters: int = 32
    kernel_width: int = 3
    pool_window: int = 2
    lstm_hidden: int = 128
    n_mels: int = 128
    frame_width: int = 128
    conv_padding: str = "same"

    def __post_init__(self):
        if self.conv_padding not in ("same", "valid"):
            raise ParameterError(f"conv_padding must be 'same' or 'valid', got {self.conv_padding!r}")
        steps = self.frame_width
        for _ in range(self.conv_sets):
            if self.conv_padding == "valid":
                steps -= self.convs_per_set * (self.kernel_width - 1)
            steps //= self.pool_window
            if steps < 1:
                raise ParameterError(f"frame width {self.frame_width} collapses to zero inside the CNN stack")

    @property
    def filters(self) -> list[int]:
        return [self.base_filters * 2**s for s in range(self.conv_sets)]

    @property
    def output_width(self) -> int:
        return 2 * self.lstm_hidden


@dataclass
class LexicalEncoderConfig:
    embedding_dim: int = 300
    lstm_hidden: int = 128

    @property
    def output_width(self) -> int:
        return 2 * self.lstm_hidden


@dataclass
class Batch:
    frames: np.ndarray | None = None  # [B, F, n_mels, frame_width]
    frame_mask: np.ndarray | None = None  # [B, F]
    token_ids: np.ndarray | None = None  # [B, L]
    token_mask: np.ndarray | None = None  # [B, L]

    def __len__(self) -> int:
        ref = self.frames if self.frames is not None else self.token_ids
        return 0 if ref is None else len(ref)


@dataclass
class AttentionTrace:
    weights: np.ndarray
    tags: list[str]
    indices: list[int]

    def __post_init__(self):
        if not (len(self.weights) == len(self.tags) == len(self.indices)):
            raise DimensionError("trace weights, tags and indices differ in length")

    def __len__(self) -> int:
        return len(self.weights)

    def count(self, tag: str) -> int:
        return sum(t == tag for t in self.tags)

    def modality_weights(self, tag: str) -> np.ndarray:
        return self.weights[np.asarray(self.tags) == tag]


@dataclass
class ScorePrediction:
    normalized: float
    rescaled: float
    rounded_grade: int


@dataclass
class ForwardOutput:
    scores: Tensor  # [B]
    attention: Tensor  # [B, P]
    mask: np.ndarray  # [B, P]
    tags: list[str]  # modality per column of ``attention``
    columns: list[int]  # frame/token index per column

    def traces(self) -> list[AttentionTrace]:
        out = []
        tags = np.asarray(self.tags)
        cols = np.asarray(self.columns)
        for b in range(self.mask.shape[0]):
            keep = self.mask[b]
            out.append(AttentionTrace(self.attention.data[b, keep].copy(), list(tags[keep]), [int(c) for c in cols[keep]]))
        return out


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _he(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _lstm_params(rng: np.random.Generator, d_in: int, hidden: int) -> dict[str, np.ndarray]:
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget-gate bias
    return {
        "w_x": _glorot(rng, (d_in, 4 * hidden), d_in, 4 * hidden),
        "w_h": _glorot(rng, (hidden, 4 * hidden), hidden, 4 * hidden),
        "b": b,
    }


# stateless building blocks


def attention_pool(states: Tensor, w_a: Tensor, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Dot-product attention pooling.

    ``states`` is ``[T, H]`` or ``[B, T, H]``. Logits are ``states @ w_a``;
    masked positions receive zero weight. Returns ``(context, weights)``.
    """
    if states.shape[-1] != w_a.shape[0]:
        raise DimensionError(f"attention_pool: states {states.shape} vs w_a {w_a.shape}")
    if states.shape[-2] == 0:
        raise DegenerateInputError("attention_pool: no time steps")
    logits = T.matmul(states, w_a)
    weights = T.softmax(logits, mask)
    expanded = weights.reshape(*weights.shape, 1)
    context = (expanded * states).sum(axis=-2)
    return context, weights


def _score_head(context: Tensor, dense_w: Tensor, dense_b: Tensor) -> Tensor:
    return (T.matmul(context, dense_w) + dense_b).sigmoid()


def fuse_and_score(
    h_audio: Tensor,
    h_text: Tensor,
    w_a: Tensor,
    dense_w: Tensor,
    dense_b: Tensor,
    audio_mask: np.ndarray | None = None,
    text_mask: np.ndarray | None = None,
) -> tuple[Tensor, Tensor, np.ndarray | None]:
    """Time-axis concatenation of both state sequences, attention, dense head.

    Works on single sequences (``[T, H]``) or batches (``[B, T, H]``). Returns
    ``(score, weights, mask)``; the first ``T_a`` weight columns are audio.
    """
    if h_audio.shape[-1] != h_text.shape[-1]:
        raise DimensionError(f"fuse_and_score: audio width {h_audio.shape[-1]} != text width {h_text.shape[-1]}")
    if h_audio.shape[-2] == 0 or h_text.shape[-2] == 0:
        raise DegenerateInputError("fuse_and_score: empty modality sequence")
    fused = T.concat([h_audio, h_text], axis=-2)
    mask = None
    if audio_mask is not None or text_mask is not None:
        lead = h_audio.shape[:-2]
        am = np.ones(lead + (h_audio.shape[-2],), bool) if audio_mask is None else np.asarray(audio_mask, bool)
        tm = np.ones(lead + (h_text.shape[-2],), bool) if text_mask is None else np.asarray(text_mask, bool)
        mask = np.concatenate([am, tm], axis=-1)
    context, weights = attention_pool(fused, w_a, mask)
    return _score_head(context, dense_w, dense_b)[..., 0], weights, mask


def unimodal_score(states: Tensor, w_a: Tensor, dense_w: Tensor, dense_b: Tensor, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    context, weights = attention_pool(states, w_a, mask)
    return _score_head(context, dense_w, dense_b)[..., 0], weights


def modality_split(trace: AttentionTrace) -> tuple[float, float]:
    """``(text %, audio %)`` of one trace's attention mass."""
    tags = np.asarray(trace.tags)
    text = float(trace.weights[tags == TEXT].sum())
    audio = float(trace.weights[tags == AUDIO].sum())
    total = text + audio
    return 100.0 * text / total, 100.0 * audio / total


class ScoringModel:
    """Parameter container plus forward pass for one of ``MODEL_KINDS``."""

    def __init__(
        self,
        kind: str,
        vocab_size: int | None = None,
        acoustic: AcousticEncoderConfig | None = None,
        lexical: LexicalEncoderConfig | None = None,
        dropout: float = 0.3,
        seed: int = 0,
        embeddings: np.ndarray | None = None,
    ):
        if kind not in MODEL_KINDS:
            raise ParameterError(f"model kind must be one of {MODEL_KINDS}, got {kind!r}")
        self.kind = kind
        self.uses_audio = kind in ("A", "MMAF")
        self.uses_text = kind in ("T", "MMAF")
        self.acoustic = (acoustic or AcousticEncoderConfig()) if self.uses_audio else None
        self.lexical = (lexical or LexicalEncoderConfig()) if self.uses_text else None
        self.dropout = dropout
        self.vocab_size = vocab_size
        if self.uses_text and vocab_size is None and embeddings is None:
            raise ContractError("text models need vocab_size or an embedding matrix")
        widths = {c.output_width for c in (self.acoustic, self.lexical) if c is not None}
        if len(widths) != 1:
            raise DimensionError(f"encoder output widths differ: {widths}")
        self.width = widths.pop()
        self.params: dict[str, Tensor] = {}
        self._init_params(np.random.default_rng(seed), embeddings)

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True, name=name)

    def _init_params(self, rng: np.random.Generator, embeddings: np.ndarray | None) -> None:
        if self.acoustic is not None:
            cfg = self.acoustic
            c_in = cfg.n_mels
            for s, c_out in enumerate(cfg.filters):
                for c in range(cfg.convs_per_set):
                    w = cfg.kernel_width
                    self._add(f"audio.conv{s}.{c}.weight", _he(rng, (c_out, c_in, w), c_in * w))
                    self._add(f"audio.conv{s}.{c}.bias", np.zeros(c_out))
                    c_in = c_out
            for direction in ("fwd", "bwd"):
                for k, v in _lstm_params(rng, c_in, cfg.lstm_hidden).items():
                    self._add(f"audio.lstm.{direction}.{k}", v)
        if self.lexical is not None:
            cfg = self.lexical
            if embeddings is not None:
                if embeddings.shape[1] != cfg.embedding_dim:
                    raise DimensionError(f"embedding width {embeddings.shape[1]} != {cfg.embedding_dim}")
                table = np.array(embeddings, dtype=np.float64)
                self.vocab_size = table.shape[0]
            else:
                table = rng.uniform(-0.05, 0.05, size=(self.vocab_size, cfg.embedding_dim))
                table[:2] = 0.0  # padding and unknown rows
            self._add("text.embedding", table)
            for direction in ("fwd", "bwd"):
                for k, v in _lstm_params(rng, cfg.embedding_dim, cfg.lstm_hidden).items():
                    self._add(f"text.lstm.{direction}.{k}", v)
        self._add("attn.w_a", _glorot(rng, (self.width,), self.width, 1))
        self._add("out.weight", _glorot(rng, (self.width, 1), self.width, 1))
        self._add("out.bias", np.zeros(1))

    # parameter access

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise ContractError(f"parameter names differ: {sorted(set(state) ^ set(self.params))}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise DimensionError(f"{k}: stored shape {v.shape} vs model {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=np.float64)

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "vocab_size": self.vocab_size,
            "dropout": self.dropout,
            "acoustic": asdict(self.acoustic) if self.acoustic else None,
            "lexical": asdict(self.lexical) if self.lexical else None,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> ScoringModel:
        return cls(
            cfg["kind"],
            vocab_size=cfg.get("vocab_size"),
            acoustic=AcousticEncoderConfig(**cfg["acoustic"]) if cfg.get("acoustic") else None,
            lexical=LexicalEncoderConfig(**cfg["lexical"]) if cfg.get("lexical") else None,
            dropout=cfg.get("dropout", 0.0),
        )

    def _lstm(self, prefix: str, direction: str) -> LSTMWeights:
        p = self.params
        return LSTMWeights(p[f"{prefix}.lstm.{direction}.w_x"], p[f"{prefix}.lstm.{direction}.w_h"], p[f"{prefix}.lstm.{direction}.b"])

    # encoders

    def frame_vectors(self, frames: np.ndarray) -> Tensor:
        """CNN stack on ``[N, n_mels, width]`` frames -> ``[N, filters[-1]]``."""
        cfg = self.acoustic
        if frames.ndim != 3 or frames.shape[1:] != (cfg.n_mels, cfg.frame_width):
            raise DimensionError(f"frames must be [N, {cfg.n_mels}, {cfg.frame_width}], got {frames.shape}")
        pad = cfg.kernel_width // 2 if cfg.conv_padding == "same" else 0
        x = Tensor(frames)
        for s in range(cfg.conv_sets):
            for c in range(cfg.convs_per_set):
                x = T.conv1d(x, self.params[f"audio.conv{s}.{c}.weight"], self.params[f"audio.conv{s}.{c}.bias"], padding=pad).relu()
            x = T.maxpool1d(x, cfg.pool_window)
        return T.global_maxpool(x)

    def _encode_audio_batch(self, frames: np.ndarray, mask: np.ndarray, training: bool, rng) -> Tensor:
        b, f = frames.shape[:2]
        vec = self.frame_vectors(frames.reshape(b * f, *frames.shape[2:]))
        vec = T.dropout(vec, self.dropout, training, rng).reshape(b, f, vec.shape[-1])
        return T.bidirectional_scan(vec, self._lstm("audio", "fwd"), self._lstm("audio", "bwd"), mask)

    def _encode_text_batch(self, ids: np.ndarray, mask: np.ndarray, training: bool, rng) -> Tensor:
        emb = T.embedding(self.params["text.embedding"], ids)
        emb = T.dropout(emb, self.dropout, training, rng)
        return T.bidirectional_scan(emb, self._lstm("text", "fwd"), self._lstm("text", "bwd"), mask)

    def encode_audio(self, frames) -> Tensor:
        """``SpectrogramFrames`` (or ``[F, mels, width]`` array) -> ``[T_a, width]`` states.

        All-padding trailing frames are dropped.
        """
        if self.acoustic is None:
            raise ContractError(f"model kind {self.kind} has no acoustic encoder")
        arr = frames.frames[: frames.valid_frames] if hasattr(frames, "valid_frames") else np.asarray(frames)
        if len(arr) == 0:
            raise DegenerateInputError("no frames")
        return self._encode_audio_batch(arr[None], np.ones((1, len(arr)), bool), False, None).reshape(len(arr), self.width)

    def encode_text(self, tokens) -> Tensor:
        """``TokenSequence`` -> ``[T_t, width]`` states over the valid region."""
        if self.lexical is None:
            raise ContractError(f"model kind {self.kind} has no lexical encoder")
        ids = np.asarray(tokens.ids[: tokens.valid_length])
        if len(ids) == 0:
            raise DegenerateInputError("transcript has no tokens")
        return self._encode_text_batch(ids[None], np.ones((1, len(ids)), bool), False, None).reshape(len(ids), self.width)

    # full forward

    def forward(self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None) -> ForwardOutput:
        parts: list[Tensor] = []
        masks: list[np.ndarray] = []
        tags: list[str] = []
        columns: list[int] = []
        if self.uses_audio:
            if batch.frames is None:
                raise ContractError("batch lacks audio frames")
            parts.append(self._encode_audio_batch(batch.frames, batch.frame_mask, training, rng))
            masks.append(np.asarray(batch.frame_mask, bool))
            tags += [AUDIO] * batch.frames.shape[1]
            columns += list(range(batch.frames.shape[1]))
        if self.uses_text:
            if batch.token_ids is None:
                raise ContractError("batch lacks token ids")
            parts.append(self._encode_text_batch(batch.token_ids, batch.token_mask, training, rng))
            masks.append(np.asarray(batch.token_mask, bool))
            tags += [TEXT] * batch.token_ids.shape[1]
            columns += list(range(batch.token_ids.shape[1]))
        states = parts[0] if len(parts) == 1 else T.concat(parts, axis=1)
        mask = masks[0] if len(masks) == 1 else np.concatenate(masks, axis=1)
        context, weights = attention_pool(states, self.params["attn.w_a"], mask)
        context = T.dropout(context, self.dropout, training, rng)
        scores = _score_head(context, self.params["out.weight"], self.params["out.bias"])[:, 0]
        return ForwardOutput(scores, weights, mask, tags, columns)

    def predict(self, batch: Batch) -> tuple[np.ndarray, list[AttentionTrace]]:
        with T.no_grad():
            out = self.forward(batch, training=False)
        return out.scores.data.copy(), out.traces()
