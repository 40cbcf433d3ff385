"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic    4 bytes  b"SGC1"
    version  u16
    kind     u8       0 = A, 1 = T, 2 = MMAF
    count    u32      number of blocks
    block*   u16 name length, UTF-8 name,
             u8 type (0 = float32 array, 1 = UTF-8 JSON),
             u8 ndim, u32 * ndim dims,
             u64 payload length, payload

The first block is ``meta`` (JSON: model config, vocabulary, grade scale,
preprocessing sizes, best validation QWK). Parameter blocks follow in model
order. Parameters are stored as float32, so a float64 model loses precision
on save; ``quantize`` applies the same rounding in memory.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import GradeScale
from .dataset import Featurizer
from .errors import FormatError
from .model import MODEL_KINDS, ScoringModel
from .text import Vocabulary

MAGIC = b"SGC1"
VERSION = 1
_FLOAT32 = 0
_JSON = 1


@dataclass
class Checkpoint:
    model: ScoringModel
    featurizer: Featurizer
    best_val_qwk: float | None = None
    prompt: str = ""
    split_seed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.model.kind

    @property
    def scale(self) -> GradeScale:
        return self.featurizer.scale


def quantize(model: ScoringModel) -> None:
    """Round every parameter to float32 precision in place."""
    for p in model.parameters():
        p.data = p.data.astype(np.float32).astype(np.float64)


def _meta(ckpt: Checkpoint) -> dict:
    f = ckpt.featurizer
    return {
        "model": ckpt.model.config(),
        "vocab": f.vocab.itos[2:],
        "scale": list(f.scale.labels),
        "max_columns": f.max_columns,
        "max_len": f.max_len,
        "best_val_qwk": ckpt.best_val_qwk,
        "prompt": ckpt.prompt,
        "split_seed": ckpt.split_seed,
        "extra": ckpt.extra,
    }


def _block(name: str, kind: int, dims: tuple[int, ...], payload: bytes) -> bytes:
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<BB", kind, len(dims))
    head += struct.pack(f"<{len(dims)}I", *dims)
    return head + struct.pack("<Q", len(payload)) + payload


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    params = list(ckpt.model.named_parameters())
    buf.write(MAGIC + struct.pack("<HBI", VERSION, MODEL_KINDS.index(ckpt.kind), 1 + len(params)))
    meta = json.dumps(_meta(ckpt), sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(_block("meta", _JSON, (), meta))
    for name, p in params:
        buf.write(_block(name, _FLOAT32, p.shape, p.data.astype("<f4").tobytes()))
    return buf.getvalue()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(dumps_checkpoint(ckpt))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_block(r: _Reader) -> tuple[str, int, tuple[int, ...], bytes]:
    (name_len,) = r.unpack("<H")
    name = r.take(name_len).decode("utf-8")
    kind, ndim = r.unpack("<BB")
    dims = r.unpack(f"<{ndim}I") if ndim else ()
    (length,) = r.unpack("<Q")
    return name, kind, tuple(dims), r.take(length)


def loads_checkpoint(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    version, kind_code, count = r.unpack("<HBI")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if kind_code >= len(MODEL_KINDS):
        raise FormatError(f"unknown model kind code {kind_code}")
    name, btype, _, payload = _read_block(r)
    if name != "meta" or btype != _JSON:
        raise FormatError("first block must be JSON meta")
    meta = json.loads(payload.decode("utf-8"))
    cfg = meta["model"]
    if cfg["kind"] != MODEL_KINDS[kind_code]:
        raise FormatError(f"header kind {MODEL_KINDS[kind_code]} disagrees with config kind {cfg['kind']}")
    model = ScoringModel.from_config(cfg)
    expected = {k: v.shape for k, v in model.named_parameters()}
    if count - 1 != len(expected):
        raise FormatError(f"checkpoint has {count - 1} parameter blocks, config implies {len(expected)}")
    state = {}
    for _ in range(count - 1):
        name, btype, dims, payload = _read_block(r)
        if btype != _FLOAT32:
            raise FormatError(f"block {name!r} is not a float32 array")
        if name not in expected or expected[name] != dims:
            raise FormatError(f"block {name!r} with shape {dims} does not match the model config")
        if len(payload) != 4 * int(np.prod(dims, dtype=np.int64)):
            raise FormatError(f"block {name!r} payload size disagrees with its shape")
        state[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    if r.pos != len(data):
        raise FormatError("trailing bytes after the last block")
    model.load_state_dict(state)
    featurizer = Featurizer(GradeScale(tuple(meta["scale"])), Vocabulary(meta["vocab"]), meta["max_columns"], meta["max_len"])
    return Checkpoint(model, featurizer, meta["best_val_qwk"], meta["prompt"], meta["split_seed"], meta.get("extra", {}))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_bytes())
