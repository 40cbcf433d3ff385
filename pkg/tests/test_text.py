import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from speechgrade.errors import DegenerateInputError, FormatError, ParseError
from speechgrade.text import Vocabulary, build_vocabulary, encode, load_pretrained_embeddings, tokenize


def test_tokenize_peels_punctuation():
    assert tokenize("No smoking.") == ["no", "smoking", "."]
    assert tokenize('"Well," she said!') == ['"', "well", ",", '"', "she", "said", "!"]
    assert tokenize("don't stop") == ["don't", "stop"]
    assert tokenize("   ") == []


def test_vocabulary_construction():
    v = build_vocabulary(["a b", "a"])
    assert v.itos == ["<pad>", "<unk>", "a", "b"]
    assert v.id("zebra") == 1
    assert build_vocabulary(["a b", "a"]) == v
    with pytest.raises(DegenerateInputError):
        build_vocabulary([])


def test_vocabulary_rejects_duplicates():
    with pytest.raises(FormatError):
        Vocabulary(["a", "a"])


def test_encode_examples(caplog):
    v = build_vocabulary(["no smoking"])
    seq = encode(["no", "smoking"], v, 4)
    assert list(seq.ids) == [v.id("no"), v.id("smoking"), 0, 0]
    assert seq.valid_length == 2
    assert list(encode(["x", "y"], v, 3).ids[:2]) == [1, 1]
    with caplog.at_level(logging.WARNING):
        short = encode(["no", "no", "no"], v, 2)
    assert short.valid_length == 2 and "truncating" in caplog.text


@given(st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta"]), min_size=0, max_size=6), st.integers(1, 8))
def test_encode_valid_length_and_injective(tokens, max_len):
    v = Vocabulary(["alpha", "beta", "gamma", "delta"])
    seq = encode(tokens, v, max_len)
    assert seq.valid_length == min(len(tokens), max_len)
    assert len(seq.ids) == max_len
    if len(tokens) <= max_len:
        back = [v.token(i) for i in seq.ids[: seq.valid_length]]
        assert back == tokens


def _write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def test_pretrained_empty_file(tmp_path):
    v = build_vocabulary(["a b c"])
    table = load_pretrained_embeddings(_write(tmp_path / "e.txt", []), v, dim=4, rng=np.random.default_rng(0))
    assert table.coverage == 0.0
    assert not table.matrix[1].any()
    assert np.all(np.abs(table.matrix[2:]) <= 0.05) and table.matrix[2:].any()


def test_pretrained_copies_rows_and_coverage(tmp_path):
    v = build_vocabulary(["no smoking here"])
    path = _write(tmp_path / "e.txt", ["smoking 0.1 0.2 0.3", "absent 1 1 1", "<unk> 5 5 5"])
    table = load_pretrained_embeddings(path, v, dim=3)
    np.testing.assert_array_equal(table.matrix[v.id("smoking")], [0.1, 0.2, 0.3])
    assert not table.matrix[1].any()
    assert table.coverage == pytest.approx(1 / 3)


def test_pretrained_errors(tmp_path):
    v = build_vocabulary(["a"])
    with pytest.raises(FormatError):
        load_pretrained_embeddings(_write(tmp_path / "w.txt", ["a 1 2"]), v, dim=3)
    with pytest.raises(ParseError, match="line 2"):
        load_pretrained_embeddings(_write(tmp_path / "p.txt", ["a 1 2 3", "b 1 x 3"]), v, dim=3)
