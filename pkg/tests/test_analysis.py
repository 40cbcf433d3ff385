import json
import shutil

import numpy as np
import pytest

from speechgrade import analysis
from speechgrade.analysis import attention_split_report, ablate_swapped_audio, ablate_white_noise, export_attention_trace, split_rows
from speechgrade.audio import AudioClip, write_wav
from speechgrade.checkpoint import Checkpoint
from speechgrade.errors import ContractError
from speechgrade.model import AUDIO, TEXT, AttentionTrace, modality_split
from speechgrade.training import evaluate

from helpers import tiny_examples, tiny_model


def test_split_rows_are_means_of_responses():
    traces = [
        AttentionTrace(np.array([0.9, 0.1]), [TEXT, AUDIO], [0, 0]),
        AttentionTrace(np.array([0.2, 0.3, 0.5]), [AUDIO, AUDIO, TEXT], [0, 1, 0]),
    ]
    (row,) = split_rows(["g", "g"], traces)
    assert row.text_pct == pytest.approx((90 + 50) / 2)
    assert row.audio_pct == pytest.approx((10 + 50) / 2)
    assert row.count == 2


def test_minmax():
    np.testing.assert_allclose(analysis.minmax(np.array([1.0, 3.0, 2.0])), [0, 1, 0.5])
    assert not analysis.minmax(np.full(3, 0.2)).any()


def test_non_mmaf_rejected():
    feat, examples = tiny_examples(np.random.default_rng(0), [0, 1])
    ckpt = Checkpoint(tiny_model("T", vocab_size=len(feat.vocab)), feat)
    with pytest.raises(ContractError, match="MMAF"):
        attention_split_report(ckpt, examples)


@pytest.mark.parametrize("by", ["prompt", "grade", "predicted"])
def test_attention_split_report(small_mmaf, by):
    ckpt, _, _, sets = small_mmaf
    rows = attention_split_report(ckpt, sets["test"], by=by)
    for row in rows:
        assert row.text_pct + row.audio_pct == pytest.approx(100, abs=1e-6)
    assert sum(r.count for r in rows) == len(sets["test"])
    if by == "prompt":
        traces = evaluate(ckpt, sets["test"]).traces
        assert rows[0].text_pct == pytest.approx(np.mean([modality_split(t)[0] for t in traces]))


def _snapshot(records):
    return {r.id: r.audio.read_bytes() for r in records}


def test_white_noise_deterministic_and_read_only(small_mmaf):
    ckpt, _, records, _ = small_mmaf
    before = _snapshot(records["test"])
    a = ablate_white_noise(ckpt, records["test"], seed=1)
    b = ablate_white_noise(ckpt, records["test"], seed=1)
    assert a == b
    assert a.scored == len(records["test"])
    assert _snapshot(records["test"]) == before


def test_swap_with_originals_is_identity(small_mmaf, tmp_path):
    ckpt, _, records, sets = small_mmaf
    for r in records["test"]:
        shutil.copy(r.audio, tmp_path / f"{r.id}.wav")
    rep = ablate_swapped_audio(ckpt, records["test"], tmp_path)
    base = evaluate(ckpt, sets["test"])
    assert rep.qwk_without_to == base.qwk and rep.skipped == 0


def test_swap_counts_missing(small_mmaf, tmp_path):
    ckpt, _, records, _ = small_mmaf
    first = records["test"][0]
    write_wav(tmp_path / f"{first.id}.wav", AudioClip(np.zeros(16000), 16000))
    rep = ablate_swapped_audio(ckpt, records["test"], tmp_path)
    assert rep.scored == 1 and rep.skipped == len(records["test"]) - 1
    with pytest.raises(ContractError):
        ablate_swapped_audio(ckpt, records["test"], tmp_path / "nothing")


def test_attention_trace_export(small_mmaf):
    ckpt, _, records, _ = small_mmaf
    rec = records["test"][0]
    rows = export_attention_trace(ckpt, rec)
    weights = np.array([r.weight for r in rows])
    assert weights.sum() == pytest.approx(1, abs=1e-9)
    for tag in (AUDIO, TEXT):
        sel = [r for r in rows if r.modality == tag]
        best = max(sel, key=lambda r: r.weight)
        assert best.minmax == 1.0
    tokens = [r.token for r in rows if r.modality == TEXT]
    assert tokens == ckpt.featurizer.example(rec).words
    audio_rows = [r for r in rows if r.modality == AUDIO]
    assert audio_rows[0].start_s == 0.0 and all(r.end_s > r.start_s for r in audio_rows)
    assert json.loads(rows[0].to_json())["modality"] in (AUDIO, TEXT)
