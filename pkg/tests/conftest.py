import logging

import numpy as np
import pytest

from speechgrade.corpus import SyntheticSpec, generate_synthetic_corpus, stratified_split
from speechgrade.dataset import Featurizer
from speechgrade.model import AcousticEncoderConfig, LexicalEncoderConfig
from speechgrade.training import TrainConfig, train_examples

SMALL_ACOUSTIC = dict(conv_sets=2, base_filters=8, lstm_hidden=16)
SMALL_LEXICAL = dict(embedding_dim=32, lstm_hidden=16)


def small_config(**overrides):
    base = dict(
        max_epochs=40,
        patience=10,
        dropout=0.1,
        learning_rate=3e-3,
        acoustic=AcousticEncoderConfig(**SMALL_ACOUSTIC),
        lexical=LexicalEncoderConfig(**SMALL_LEXICAL),
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """3 grades x 10 responses, written to disk."""
    out = tmp_path_factory.mktemp("small_corpus")
    manifest = generate_synthetic_corpus(SyntheticSpec(n_classes=3, per_class=10), seed=5, out_dir=out)
    return out, manifest


@pytest.fixture(scope="session")
def small_mmaf(small_corpus):
    """A briefly trained MMAF checkpoint on ``small_corpus`` plus its featurized splits."""
    logging.disable(logging.WARNING)
    _, manifest = small_corpus
    train, val, test = stratified_split(manifest.records, seed=0)
    feat = Featurizer.fit(train, manifest.scales["P1"])
    sets = {name: feat.transform(recs) for name, recs in (("train", train), ("val", val), ("test", test))}
    ckpt, report = train_examples("MMAF", feat, sets["train"], sets["val"], small_config(max_epochs=8, patience=8))
    ckpt.prompt = "P1"
    logging.disable(logging.NOTSET)
    return ckpt, report, {"train": train, "val": val, "test": test}, sets


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
