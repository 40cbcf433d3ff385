"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op records its parents and a closure that pushes the upstream gradient
back to them. ``Tensor.backward`` walks the graph in reverse topological order.
Graphs are not thread-safe; build and differentiate each one on one thread.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DegenerateInputError, DimensionError, NumericError, ParameterError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    # construction helpers

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    # autodiff

    def backward(self) -> None:
        if self.data.size != 1 or self.data.ndim > 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            if node.requires_grad and node.grad is None:
                node.grad = np.zeros_like(node.data)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # arithmetic

    def __add__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        a = self
        return Tensor._make(-a.data, (a,), lambda g: a._accumulate(-g))

    def __sub__(self, other) -> Tensor:
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> Tensor:
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._make(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other) -> Tensor:
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> Tensor:
        a = self
        p = float(exponent)
        return Tensor._make(a.data**p, (a,), lambda g: a._accumulate(g * p * a.data ** (p - 1)))

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index) -> Tensor:
        a = self

        fancy = _has_array_index(index)

        def backward(g):
            full = np.zeros_like(a.data)
            if fancy:
                np.add.at(full, index, g)
            else:
                full[index] += g
            a._accumulate(full)

        return Tensor._make(a.data[index], (a,), backward)

    # elementwise functions

    def exp(self) -> Tensor:
        a = self
        out = np.exp(a.data)
        return Tensor._make(out, (a,), lambda g: a._accumulate(g * out))

    def log(self) -> Tensor:
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data))

    def tanh(self) -> Tensor:
        a = self
        out = np.tanh(a.data)
        return Tensor._make(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))

    def sigmoid(self) -> Tensor:
        a = self
        out = _stable_sigmoid(a.data)
        return Tensor._make(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)))

    def relu(self) -> Tensor:
        a = self
        mask = a.data > 0
        return Tensor._make(a.data * mask, (a,), lambda g: a._accumulate(g * mask))

    # reductions and shape ops

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))

        return Tensor._make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        count = self.data.size if axis is None else np.prod([self.shape[ax] for ax in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor._make(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))

    def transpose(self, *axes) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        a = self
        return Tensor._make(a.data.transpose(axes), (a,), lambda g: a._accumulate(g.transpose(inverse)))

    @property
    def T(self) -> Tensor:
        return self.transpose()


def _has_array_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy broadcasting over leading batch axes.

    1-D operands are promoted to a row (left) or column (right) vector and the
    promoted axis is squeezed from the result.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise DimensionError(f"matmul: scalar operand in shapes {a.shape} and {b.shape}")
    avec, bvec = a.ndim == 1, b.ndim == 1
    ad = a.data[None, :] if avec else a.data
    bd = b.data[:, None] if bvec else b.data
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    out = ad @ bd
    if bvec:
        out = out[..., 0]
    if avec:
        out = out[..., 0] if bvec else out[..., 0, :]

    def backward(g):
        if avec:
            g = g[..., None] if bvec else np.expand_dims(g, -2)
        if bvec:
            g = g[..., None]
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
            a._accumulate(ga[0] if avec else ga)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
            b._accumulate(gb[:, 0] if bvec else gb)

    return Tensor._make(np.asarray(out), (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    try:
        data = np.concatenate([t.data for t in tensors], axis=ax)
    except ValueError as exc:
        raise DimensionError(f"concat: {[t.shape for t in tensors]} along axis {axis}") from exc
    return Tensor._make(data, tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % (tensors[0].ndim + 1)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=ax))

    return Tensor._make(np.stack([t.data for t in tensors], axis=ax), tensors, backward)


# neural-network primitives


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    """Cross-correlation along the last axis.

    ``x`` is ``[channels_in, steps]`` or ``[batch, channels_in, steps]``;
    ``kernels`` is ``[channels_out, channels_in, width]``. With ``padding=0``
    the output has ``steps - width + 1`` columns.
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernels.ndim != 3:
        raise DimensionError(f"conv1d: expected [C,L] or [B,C,L] input and [O,C,W] kernels, got {x.shape}, {kernels.shape}")
    c_out, c_in, width = kernels.shape
    if xd.shape[1] != c_in or bias.shape != (c_out,):
        raise DimensionError(f"conv1d: input {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    if padding:
        xd = np.pad(xd, ((0, 0), (0, 0), (padding, padding)))
    steps = xd.shape[2]
    if width > steps:
        raise DegenerateInputError(f"conv1d: kernel width {width} exceeds {steps} steps")
    n = xd.shape[0]
    steps_out = steps - width + 1
    # windows: [B, L_out, C*W]
    windows = sliding_window_view(xd, width, axis=2).transpose(0, 2, 1, 3).reshape(n, steps_out, c_in * width)
    kmat = kernels.data.reshape(c_out, c_in * width)
    out = (windows @ kmat.T).transpose(0, 2, 1) + bias.data[None, :, None]

    def backward(g):
        gb = g if not squeeze else g[None]
        gt = gb.transpose(0, 2, 1)  # [B, L_out, O]
        if kernels.requires_grad:
            gk = np.tensordot(gt, windows, axes=([0, 1], [0, 1]))
            kernels._accumulate(gk.reshape(kernels.shape))
        if bias.requires_grad:
            bias._accumulate(gb.sum(axis=(0, 2)))
        if x.requires_grad:
            gw = (gt @ kmat).reshape(n, steps_out, c_in, width)
            gx = np.zeros_like(xd)
            for k in range(width):
                gx[:, :, k : k + steps_out] += gw[:, :, :, k].transpose(0, 2, 1)
            if padding:
                gx = gx[:, :, padding:-padding]
            x._accumulate(gx[0] if squeeze else gx)

    return Tensor._make(out[0] if squeeze else out, (x, kernels, bias), backward)


def maxpool1d(x: Tensor, window: int) -> Tensor:
    """Non-overlapping max pool over the last axis; the remainder is dropped.

    Ties send the gradient to the first maximal position.
    """
    if window < 1:
        raise ParameterError(f"maxpool1d: window must be >= 1, got {window}")
    x = as_tensor(x)
    steps = x.shape[-1]
    n_out = steps // window
    if n_out == 0:
        raise DegenerateInputError(f"maxpool1d: {steps} steps cannot fill a window of {window}")
    trimmed = x.data[..., : n_out * window]
    blocks = trimmed.reshape(*x.shape[:-1], n_out, window)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gblocks = np.zeros_like(blocks)
        np.put_along_axis(gblocks, arg[..., None], g[..., None], axis=-1)
        full = np.zeros_like(x.data)
        full[..., : n_out * window] = gblocks.reshape(trimmed.shape)
        x._accumulate(full)

    return Tensor._make(out, (x,), backward)


def global_maxpool(x: Tensor) -> Tensor:
    """Maximum over the last axis."""
    x = as_tensor(x)
    if x.ndim < 1 or x.shape[-1] == 0:
        raise DegenerateInputError(f"global_maxpool: empty step axis in shape {x.shape}")
    arg = x.data.argmax(axis=-1)
    out = np.take_along_axis(x.data, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg[..., None], g[..., None], axis=-1)
        x._accumulate(full)

    return Tensor._make(out, (x,), backward)


def softmax(logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis with max-subtraction.

    Positions where ``mask`` is False get exactly zero weight.
    """
    logits = as_tensor(logits)
    if logits.ndim < 1 or logits.shape[-1] == 0:
        raise DegenerateInputError("softmax: empty input")
    z = logits.data
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax: non-finite logits")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not np.all(mask.any(axis=-1)):
            raise DegenerateInputError("softmax: a row is fully masked")
        z = np.where(mask, z, -np.inf)
    shifted = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    out = ez / ez.sum(axis=-1, keepdims=True)

    def backward(g):
        logits._accumulate(out * (g - (g * out).sum(axis=-1, keepdims=True)))

    return Tensor._make(out, (logits,), backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: kept activations are scaled by ``1 / (1 - rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    return table[np.asarray(ids, dtype=np.int64)]


# recurrent layers


@dataclass
class LSTMWeights:
    """Gate order along the last axis is input, forget, cell, output."""

    w_x: Tensor  # [d_in, 4h]
    w_h: Tensor  # [h, 4h]
    b: Tensor  # [4h]

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.w_x, self.w_h, self.b]


def _lstm_gates(pre: Tensor, c_prev: Tensor, hidden: int) -> tuple[Tensor, Tensor]:
    i = pre[..., 0:hidden].sigmoid()
    f = pre[..., hidden : 2 * hidden].sigmoid()
    cand = pre[..., 2 * hidden : 3 * hidden].tanh()
    o = pre[..., 3 * hidden : 4 * hidden].sigmoid()
    c = f * c_prev + i * cand
    h = o * c.tanh()
    return h, c


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, weights: LSTMWeights) -> tuple[Tensor, Tensor]:
    hidden = weights.hidden
    d_in = weights.w_x.shape[0]
    if (
        x.shape[-1] != d_in
        or h_prev.shape[-1] != hidden
        or c_prev.shape[-1] != hidden
        or weights.w_x.shape[1] != 4 * hidden
        or weights.w_h.shape != (hidden, 4 * hidden)
        or weights.b.shape != (4 * hidden,)
    ):
        raise DimensionError(
            f"lstm_cell: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, "
            f"w_x {weights.w_x.shape}, w_h {weights.w_h.shape}, b {weights.b.shape}"
        )
    pre = matmul(x, weights.w_x) + matmul(h_prev, weights.w_h) + weights.b
    return _lstm_gates(pre, c_prev, hidden)


def _scan(projected: Tensor, weights: LSTMWeights, mask: np.ndarray | None, reverse: bool) -> list[Tensor]:
    # projected: [B, T, 4h] = x @ w_x + b, computed once for all steps
    batch, steps = projected.shape[0], projected.shape[1]
    hidden = weights.hidden
    h = Tensor(np.zeros((batch, hidden)))
    c = Tensor(np.zeros((batch, hidden)))
    outputs: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        pre = projected[:, t, :] + matmul(h, weights.w_h)
        h_new, c_new = _lstm_gates(pre, c, hidden)
        if mask is not None and not mask[:, t].all():
            m = Tensor(mask[:, t, None].astype(np.float64))
            h = h + m * (h_new - h)
            c = c + m * (c_new - c)
        else:
            h, c = h_new, c_new
        outputs[t] = h
    return outputs  # type: ignore[return-value]


def bidirectional_scan(
    sequence: Tensor,
    forward_weights: LSTMWeights,
    backward_weights: LSTMWeights,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Run one LSTM left-to-right and another right-to-left, concatenating states.

    ``sequence`` is ``[T, d_in]`` or ``[B, T, d_in]``. ``mask`` (``[B, T]``)
    freezes the recurrent state on padded steps so that right-padded rows give
    the same valid-region output as unpadded ones.
    """
    sequence = as_tensor(sequence)
    squeeze = sequence.ndim == 2
    seq = sequence.reshape(1, *sequence.shape) if squeeze else sequence
    if seq.ndim != 3:
        raise DimensionError(f"bidirectional_scan: expected [T,d] or [B,T,d], got {sequence.shape}")
    if seq.shape[1] == 0:
        raise DegenerateInputError("bidirectional_scan: empty sequence")
    for w in (forward_weights, backward_weights):
        if w.w_x.shape[0] != seq.shape[2]:
            raise DimensionError(f"bidirectional_scan: input width {seq.shape[2]} vs w_x {w.w_x.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(seq.shape[0], seq.shape[1])
    fwd = _scan(matmul(seq, forward_weights.w_x) + forward_weights.b, forward_weights, mask, reverse=False)
    bwd = _scan(matmul(seq, backward_weights.w_x) + backward_weights.b, backward_weights, mask, reverse=True)
    out = concat([stack(fwd, axis=1), stack(bwd, axis=1)], axis=-1)
    return out.reshape(out.shape[1:]) if squeeze else out


# optimizer


@dataclass
class AdamState:
    step: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise DimensionError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    for p, g, m in zip(params, grads, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"adam_step: param {p.shape}, grad {g.shape}, moment {m.shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state


class Adam:
    """Stateful wrapper over ``adam_step`` for a fixed list of leaf tensors."""

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(learning_rate=lr, beta1=beta1, beta2=beta2, epsilon=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)
