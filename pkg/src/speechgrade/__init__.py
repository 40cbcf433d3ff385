"""Multimodal attention-fusion scoring of spoken responses.

Audio goes through a log-mel frontend and a recurrent CNN, transcripts through
an embedding BiLSTM, and a single attention distribution over both state
sequences feeds a logistic scoring head.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import GradeScale, Manifest, ResponseRecord, SyntheticSpec, generate_synthetic_corpus, load_manifest, stratified_split
from .dataset import Featurizer
from .metrics import ThresholdSet, mse, optimize_thresholds, qwk
from .model import AcousticEncoderConfig, LexicalEncoderConfig, ScoringModel
from .tensor import Tensor
from .training import TrainConfig, TrainReport, evaluate, train, train_examples

__version__ = "0.1.0"

__all__ = [
    "AcousticEncoderConfig",
    "Checkpoint",
    "Featurizer",
    "GradeScale",
    "LexicalEncoderConfig",
    "Manifest",
    "ResponseRecord",
    "ScoringModel",
    "SyntheticSpec",
    "Tensor",
    "ThresholdSet",
    "TrainConfig",
    "TrainReport",
    "evaluate",
    "generate_synthetic_corpus",
    "load_checkpoint",
    "load_manifest",
    "mse",
    "optimize_thresholds",
    "qwk",
    "save_checkpoint",
    "stratified_split",
    "train",
    "train_examples",
]
