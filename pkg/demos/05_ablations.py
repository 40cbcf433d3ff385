"""White-noise and swapped-audio ablations, plus an attention trace export.

Trains a fused model on a corpus where only the audio carries the grade, then
replaces the audio with white noise (or with another grade's recordings) and
watches the test QWK fall.
"""

import logging
import shutil
import tempfile
from pathlib import Path

import numpy as np

from speechgrade import SyntheticSpec, generate_synthetic_corpus, stratified_split
from speechgrade.analysis import ablate_swapped_audio, ablate_white_noise, export_attention_trace
from speechgrade.dataset import Featurizer
from speechgrade.model import AcousticEncoderConfig, LexicalEncoderConfig
from speechgrade.training import TrainConfig, calibrate, train_examples

logging.basicConfig(level=logging.ERROR)

out = Path(tempfile.mkdtemp(prefix="speechgrade-"))
manifest = generate_synthetic_corpus(SyntheticSpec(n_classes=3, per_class=40, text_signal=0.0), seed=0, out_dir=out)
train, val, test = stratified_split(manifest.records, seed=0)
feat = Featurizer.fit(train, manifest.scales["P1"])
config = TrainConfig(
    learning_rate=3e-3,
    max_epochs=40,
    patience=10,
    dropout=0.1,
    acoustic=AcousticEncoderConfig(conv_sets=2, base_filters=8, lstm_hidden=16),
    lexical=LexicalEncoderConfig(embedding_dim=32, lstm_hidden=16),
)
ckpt, _ = train_examples("MMAF", feat, feat.transform(train), feat.transform(val), config)
cuts, _, _ = calibrate(ckpt, feat.transform(val))


def show(label, rep):
    print(f"{label:10}{rep.baseline_without_to:>12.3f}{rep.baseline_with_to:>10.3f}{rep.qwk_without_to:>12.3f}{rep.qwk_with_to:>10.3f}")


print(f"{'':10}{'orig':>12}{'orig+TO':>10}{'ablated':>12}{'abl.+TO':>10}")
show("noise", ablate_white_noise(ckpt, test, seed=0, thresholds=cuts))

# swap in recordings from a different grade: rotate audio files across the test set
swap_dir = out / "swapped"
swap_dir.mkdir()
rng = np.random.default_rng(1)
order = rng.permutation(len(test))
for rec, donor in zip(test, [test[i] for i in order]):
    shutil.copy(donor.audio, swap_dir / f"{rec.id}.wav")
show("swapped", ablate_swapped_audio(ckpt, test, swap_dir, thresholds=cuts))

rows = export_attention_trace(ckpt, test[0])
print(f"\ntrace for {test[0].id} ({test[0].grade}): {len(rows)} positions")
for row in rows[:4] + rows[-3:]:
    print(" ", row.to_json())
