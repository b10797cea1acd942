"""fakesent: sentence encoders trained by fake-sentence detection."""

__version__ = "0.1.0"

from .corpus import (
    EmbeddingTable,
    Sentence,
    Vocabulary,
    build_vocab,
    init_embeddings,
    load_embeddings,
    tokenize,
)
from .fakegen import (
    FAKE,
    REAL,
    CorruptionRecord,
    LabeledExample,
    build_dataset,
    word_drop,
    word_edit_distance,
    word_shuffle,
)
from .classifier import DetectorModel, MlpHead, TrainConfig, classify, evaluate, train
from .encoder import SentenceEncoder, lstm_step
from .probe import ProbeConfig, ProbeDataset, run_probes, train_probe

__all__ = [
    "__version__",
    "EmbeddingTable",
    "Sentence",
    "Vocabulary",
    "build_vocab",
    "init_embeddings",
    "load_embeddings",
    "tokenize",
    "FAKE",
    "REAL",
    "CorruptionRecord",
    "LabeledExample",
    "build_dataset",
    "word_drop",
    "word_edit_distance",
    "word_shuffle",
    "DetectorModel",
    "MlpHead",
    "TrainConfig",
    "classify",
    "evaluate",
    "train",
    "SentenceEncoder",
    "lstm_step",
    "ProbeConfig",
    "ProbeDataset",
    "run_probes",
    "train_probe",
]
