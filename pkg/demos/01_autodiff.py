"""Reverse-mode autodiff on numpy arrays: gradients, a gradient check, an LSTM."""

import numpy as np

from speechgrade import tensor as T
from speechgrade.tensor import Adam, LSTMWeights, Tensor

rng = np.random.default_rng(0)

# scalar function of a matrix
x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
loss = (x.tanh() ** 2).mean()
loss.backward()
print("loss", loss.item())
print("d loss / dx\n", x.grad.round(4))

# same gradient by central differences
eps = 1e-6
num = np.zeros_like(x.data)
for idx in np.ndindex(x.shape):
    x.data[idx] += eps
    up = (x.tanh() ** 2).mean().item()
    x.data[idx] -= 2 * eps
    down = (x.tanh() ** 2).mean().item()
    x.data[idx] += eps
    num[idx] = (up - down) / (2 * eps)
print("max |autodiff - numeric|", np.abs(num - x.grad).max())

# masked softmax: padded positions get exactly zero weight
p = T.softmax(Tensor([2.0, 1.0, 0.5, 9.0]), mask=np.array([True, True, True, False]))
print("masked softmax", p.data.round(4))

# a bidirectional LSTM over a padded batch; padding leaves states frozen
hidden = 3


def lstm(d_in):
    return LSTMWeights(
        Tensor(rng.standard_normal((d_in, 4 * hidden)) * 0.3, requires_grad=True),
        Tensor(rng.standard_normal((hidden, 4 * hidden)) * 0.3, requires_grad=True),
        Tensor(np.zeros(4 * hidden), requires_grad=True),
    )


fw, bw = lstm(2), lstm(2)
seq = Tensor(rng.standard_normal((2, 5, 2)))
mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], bool)
states = T.bidirectional_scan(seq, fw, bw, mask)
print("bidirectional states", states.shape)

# fit the final forward state of row 0 to a target with Adam
opt = Adam([fw.w_x, fw.w_h, fw.b, bw.w_x, bw.w_h, bw.b], lr=0.05)
target = Tensor([0.5, -0.5, 0.25])
for step in range(60):
    out = T.bidirectional_scan(seq, fw, bw, mask)
    loss = ((out[0, -1, :hidden] - target) ** 2).sum()
    opt.zero_grad()
    loss.backward()
    opt.step()
    if step % 20 == 0:
        print(f"step {step:2d} loss {loss.item():.5f}")
print("final loss", loss.item())
