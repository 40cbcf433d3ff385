"""Quadratic weighted kappa, MSE, and QWK-maximizing threshold search."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, ParameterError, UndefinedKappaError

logger = logging.getLogger(__name__)


def quadratic_weights(n: int) -> np.ndarray:
    i = np.arange(n)
    return (i[:, None] - i[None, :]) ** 2 / float((n - 1) ** 2)


def confusion_matrix(human: Sequence[int], predicted: Sequence[int], n: int) -> np.ndarray:
    """Counts with rows indexed by the human grade, columns by the model grade."""
    h = np.asarray(human, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if h.shape != p.shape or h.ndim != 1:
        raise ContractError(f"rating vectors differ in shape: {h.shape} vs {p.shape}")
    if len(h) == 0:
        raise DegenerateInputError("no ratings")
    if n < 2:
        raise ParameterError(f"need at least 2 grades, got {n}")
    if h.min() < 0 or p.min() < 0 or h.max() >= n or p.max() >= n:
        raise ContractError(f"grades must lie in [0, {n - 1}]")
    return np.bincount(h * n + p, minlength=n * n).reshape(n, n)


def qwk(human: Sequence[int], predicted: Sequence[int], n: int) -> float:
    observed = confusion_matrix(human, predicted, n).astype(np.float64)
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / observed.sum()
    w = quadratic_weights(n)
    denom = float((w * expected).sum())
    if denom == 0.0:
        raise UndefinedKappaError("kappa undefined: both raters put all mass on one grade")
    return 1.0 - float((w * observed).sum()) / denom


def mse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    a = np.asarray(y_true, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise DegenerateInputError("mse of empty vectors")
    return float(np.mean((a - b) ** 2))


def round_default(raw, n: int):
    """Nearest grade with halves rounded up, clamped to ``[0, n-1]``."""
    r = np.floor(np.asarray(raw, dtype=np.float64) + 0.5)
    out = np.clip(r, 0, n - 1).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ThresholdSet:
    cuts: tuple[float, ...]

    def __post_init__(self):
        c = np.asarray(self.cuts, dtype=np.float64)
        if len(c) < 1:
            raise ParameterError("need at least one cut")
        if np.any(np.diff(c) <= 0):
            raise ParameterError(f"cuts must be strictly increasing: {self.cuts}")
        n = len(c) + 1
        if c[0] <= 0 or c[-1] >= n - 1:
            raise ParameterError(f"cuts must lie inside (0, {n - 1}): {self.cuts}")

    @property
    def n_grades(self) -> int:
        return len(self.cuts) + 1

    @classmethod
    def midpoints(cls, n: int) -> ThresholdSet:
        return cls(tuple(k + 0.5 for k in range(n - 1)))

    def apply(self, raw):
        return apply_thresholds(raw, self)

    def dumps(self) -> str:
        return "".join(f"{c!r}\n" for c in self.cuts)

    @classmethod
    def loads(cls, text: str) -> ThresholdSet:
        return cls(tuple(float(line) for line in text.split()))


def apply_thresholds(raw, cuts: ThresholdSet):
    """Grade = number of cuts strictly below the raw score."""
    out = np.searchsorted(np.asarray(cuts.cuts), np.asarray(raw, dtype=np.float64), side="left")
    return int(out) if np.ndim(out) == 0 else out.astype(np.int64)


def _kappa_from_lattice(raw: np.ndarray, human: np.ndarray, n: int, cut_idx: Sequence[int], step: float) -> float:
    cuts = np.asarray(cut_idx, dtype=np.float64) * step
    return qwk(human, np.searchsorted(cuts, raw, side="left"), n)


def optimize_thresholds(
    raw: Sequence[float],
    human: Sequence[int],
    n: int,
    step: float = 0.01,
    max_sweeps: int = 20,
) -> ThresholdSet:
    """Coordinate ascent over cuts on a fixed lattice, starting from midpoints.

    Each sweep moves one cut at a time to the lattice point (strictly between
    its neighbours) that maximizes QWK; a move is taken only on strict
    improvement, so the result never scores below the midpoint start.
    """
    raw_a = np.asarray(raw, dtype=np.float64)
    human_a = np.asarray(human, dtype=np.int64)
    if len(np.unique(raw_a)) < n:
        logger.warning("only %d distinct raw scores for %d grades", len(np.unique(raw_a)), n)
    per_unit = round(1.0 / step)
    if not math.isclose(per_unit * step, 1.0):
        raise ParameterError(f"step must divide 1 evenly, got {step}")
    top = (n - 1) * per_unit
    idx = [round((k + 0.5) * per_unit) for k in range(n - 1)]
    best = _kappa_from_lattice(raw_a, human_a, n, idx, step)
    for _ in range(max_sweeps):
        improved = False
        for k in range(n - 1):
            lo = idx[k - 1] + 1 if k > 0 else 1
            hi = idx[k + 1] - 1 if k < n - 2 else top - 1
            for cand in range(lo, hi + 1):
                if cand == idx[k]:
                    continue
                trial = idx.copy()
                trial[k] = cand
                score = _kappa_from_lattice(raw_a, human_a, n, trial, step)
                if score > best + 1e-12:
                    best, idx, improved = score, trial, True
        if not improved:
            break
    return ThresholdSet(tuple(i * step for i in idx))
