"""Central-difference gradient oracle and small model builders for tests."""

import numpy as np

from speechgrade import tensor as T
from speechgrade.model import AcousticEncoderConfig, Batch, LexicalEncoderConfig, ScoringModel
from speechgrade.tensor import LSTMWeights, Tensor

STEP = 1e-6


def numeric_grad(loss_fn, param, step=STEP, indices=None):
    """Central differences of ``loss_fn()`` w.r.t. entries of ``param.data``."""
    out = np.zeros_like(param.data)
    idxs = list(np.ndindex(param.shape)) if indices is None else indices
    for idx in idxs:
        orig = param.data[idx]
        param.data[idx] = orig + step
        fp = loss_fn().item()
        param.data[idx] = orig - step
        fm = loss_fn().item()
        param.data[idx] = orig
        out[idx] = (fp - fm) / (2 * step)
    return out, idxs


def gradcheck(loss_fn, params, step=STEP, max_entries=None, rng=None):
    """Largest per-block relative error between autodiff and central differences.

    Error for a block is max |analytic - numeric| divided by the block's
    largest gradient magnitude (floored at 1e-6 so all-zero blocks compare
    absolutely).
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        indices = None
        if max_entries is not None and p.data.size > max_entries:
            rng = rng or np.random.default_rng(0)
            flat = rng.choice(p.data.size, size=max_entries, replace=False)
            indices = [np.unravel_index(i, p.shape) for i in flat]
        numeric, idxs = numeric_grad(loss_fn, p, step, indices)
        a = np.array([analytic[i] for i in idxs])
        n = np.array([numeric[i] for i in idxs])
        scale = max(np.abs(a).max(), np.abs(n).max(), 1e-6)
        worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


TINY_ACOUSTIC = dict(conv_sets=1, convs_per_set=2, base_filters=4, kernel_width=3, pool_window=2, lstm_hidden=2, n_mels=8, frame_width=8)
TINY_LEXICAL = dict(embedding_dim=3, lstm_hidden=2)


def tiny_model(kind="MMAF", seed=0, vocab_size=6, dropout=0.0):
    return ScoringModel(
        kind,
        vocab_size=vocab_size,
        acoustic=AcousticEncoderConfig(**TINY_ACOUSTIC),
        lexical=LexicalEncoderConfig(**TINY_LEXICAL),
        dropout=dropout,
        seed=seed,
    )


def tiny_batch(rng, batch=2, frames=2, tokens=4, vocab_size=6, ragged=True):
    """Random frames/tokens; with ``ragged`` the second row is padded."""
    f = rng.standard_normal((batch, frames, 8, 8))
    fmask = np.ones((batch, frames), bool)
    ids = rng.integers(2, vocab_size, size=(batch, tokens))
    tmask = np.ones((batch, tokens), bool)
    if ragged and batch > 1:
        fmask[1, frames - 1 :] = False
        f[1, frames - 1 :] = 0.0
        tmask[1, tokens - 2 :] = False
        ids[1, tokens - 2 :] = 0
    return Batch(f, fmask, ids, tmask)


def tiny_examples(rng, grades, frames=2, tokens=4, n_grades=3):
    """In-memory examples shaped for the tiny model, plus a matching featurizer.

    Frame content and token choice both depend on the grade so each modality
    can separate the examples on its own.
    """
    from speechgrade.audio import SpectrogramFrames
    from speechgrade.corpus import GradeScale
    from speechgrade.dataset import Example, Featurizer
    from speechgrade.text import TokenSequence, Vocabulary

    words = ["w0", "w1", "w2", "w3"]
    feat = Featurizer(GradeScale.cefr(n_grades), Vocabulary(words), frames * 8, tokens)
    out = []
    for i, g in enumerate(grades):
        f = rng.standard_normal((frames, 8, 8)) + 2.0 * g
        ids = np.full(tokens, 2 + g % 4)
        ids[0] = 2 + rng.integers(4)
        out.append(
            Example(f"E{i}", g, g / (n_grades - 1), SpectrogramFrames(f, frames * 8), TokenSequence(ids, tokens), [words[k - 2] for k in ids])
        )
    return feat, out


def leaf(rng, *shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def weighted(out, rng):
    """Random projection to a scalar so every output entry carries gradient."""
    w = Tensor(rng.standard_normal(out.shape))
    return (out * w).sum()


def _op_cases(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
    pos = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    row = leaf(rng, 4)
    m, n = leaf(rng, 4, 2), leaf(rng, 3, 4)
    x_conv, k_conv, b_conv = leaf(rng, 2, 3, 7), leaf(rng, 4, 3, 3), leaf(rng, 4)
    x_pool = leaf(rng, 2, 9)
    ids = rng.integers(0, 5, size=(2, 3))
    table = leaf(rng, 5, 3)
    mask = np.array([[True, True, False, True], [True, False, True, True], [True] * 4])
    w = lambda out: weighted(out, np.random.default_rng(99))  # noqa: E731
    return {
        "add_broadcast": (lambda: w(a + row), [a, row]),
        "sub": (lambda: w(a - b), [a, b]),
        "mul_broadcast": (lambda: w(a * row), [a, row]),
        "div": (lambda: w(a / pos), [a, pos]),
        "neg": (lambda: w(-a), [a]),
        "pow": (lambda: w(pos**2.5), [pos]),
        "exp": (lambda: w(a.exp()), [a]),
        "log": (lambda: w(pos.log()), [pos]),
        "tanh": (lambda: w(a.tanh()), [a]),
        "sigmoid": (lambda: w(a.sigmoid()), [a]),
        "relu": (lambda: w((a + 0.05).relu()), [a]),
        "sum_axis": (lambda: w(a.sum(axis=1)), [a]),
        "mean": (lambda: w(a.mean(axis=0, keepdims=True)), [a]),
        "reshape_transpose": (lambda: w(a.reshape(4, 3).T), [a]),
        "getitem_slice": (lambda: w(a[1:, ::2]), [a]),
        "getitem_fancy": (lambda: w(a[np.array([0, 0, 2])]), [a]),
        "matmul": (lambda: w(T.matmul(n, m)), [n, m]),
        "concat": (lambda: w(T.concat([a, b], axis=1)), [a, b]),
        "stack": (lambda: w(T.stack([a, b], axis=1)), [a, b]),
        "conv1d": (lambda: w(T.conv1d(x_conv, k_conv, b_conv)), [x_conv, k_conv, b_conv]),
        "conv1d_same": (lambda: w(T.conv1d(x_conv, k_conv, b_conv, padding=1)), [x_conv, k_conv, b_conv]),
        "maxpool1d": (lambda: w(T.maxpool1d(x_pool, 2)), [x_pool]),
        "global_maxpool": (lambda: w(T.global_maxpool(x_pool)), [x_pool]),
        "softmax": (lambda: w(T.softmax(a)), [a]),
        "softmax_masked": (lambda: w(T.softmax(a, mask)), [a]),
        "embedding": (lambda: w(T.embedding(table, ids)), [table]),
        "dropout_fixed_mask": (lambda: w(T.dropout(a, 0.4, True, np.random.default_rng(3))), [a]),
    }


def lstm_weights(rng, d_in, hidden):
    return LSTMWeights(leaf(rng, d_in, 4 * hidden, scale=0.5), leaf(rng, hidden, 4 * hidden, scale=0.5), leaf(rng, 4 * hidden, scale=0.5))


def _recurrent_cases(rng):
    fw, bw = lstm_weights(rng, 3, 2), lstm_weights(rng, 3, 2)
    x, h, c = leaf(rng, 3), leaf(rng, 2), leaf(rng, 2)
    seq = leaf(rng, 2, 4, 3)
    mask = np.array([[True] * 4, [True, True, False, False]])
    w = lambda out: weighted(out, np.random.default_rng(5))  # noqa: E731

    def cell():
        h1, c1 = T.lstm_cell(x, h, c, fw)
        return w(h1) + w(c1)

    flat = [fw.w_x, fw.w_h, fw.b, bw.w_x, bw.w_h, bw.b]
    return {
        "lstm_cell": (cell, [x, h, c, fw.w_x, fw.w_h, fw.b]),
        "bidirectional_scan": (lambda: w(T.bidirectional_scan(seq, fw, bw, mask)), [seq] + flat),
    }




def op_gradient_cases(rng):
    """``{name: (loss_fn, params)}`` covering every differentiable op."""
    cases = _op_cases(rng)
    cases.update(_recurrent_cases(rng))
    return cases
