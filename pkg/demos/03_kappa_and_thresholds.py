"""Quadratic weighted kappa and QWK-maximizing thresholds on noisy predictions."""

import numpy as np

from speechgrade.metrics import ThresholdSet, apply_thresholds, confusion_matrix, mse, optimize_thresholds, qwk, round_default

# the two-grade worked example
human = [0, 0, 1, 1]
model = [0, 1, 1, 1]
print("confusion\n", confusion_matrix(human, model, 2))
print("qwk", qwk(human, model, 2))

# a regressor that is biased low on a 3-grade scale
rng = np.random.default_rng(7)
grades = rng.integers(0, 3, 200)
raw = np.clip(0.8 * grades + rng.normal(0.0, 0.35, 200), 0, 2)
val, test = slice(0, 100), slice(100, 200)

default = round_default(raw, 3)
print(f"default rounding   val QWK {qwk(grades[val], default[val], 3):.3f}  test QWK {qwk(grades[test], default[test], 3):.3f}")

cuts = optimize_thresholds(raw[val], grades[val], 3)
tuned = apply_thresholds(raw, cuts)
print("fitted cuts", cuts.cuts)
print(f"fitted thresholds  val QWK {qwk(grades[val], tuned[val], 3):.3f}  test QWK {qwk(grades[test], tuned[test], 3):.3f}")
print(f"MSE of rounded grades (normalized)  default {mse(grades / 2, default / 2):.4f}  tuned {mse(grades / 2, tuned / 2):.4f}")

# threshold files are one cut per line
text = cuts.dumps()
print(text, end="")
assert ThresholdSet.loads(text) == cuts
