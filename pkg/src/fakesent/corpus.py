"""Tokenization, vocabulary construction, and pretrained-embedding ingestion.

File formats:
  corpus     UTF-8 text, one sentence per line (blank lines skipped on read)
  embeddings one line per token: the token then d decimal floats, whitespace
             separated
  vocabulary one line per entry "token<TAB>index", written in index order
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyCorpus,
    EmptyLine,
    EmptySentence,
    MalformedLine,
)

PAD = "<pad>"
UNK = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


@dataclass(frozen=True)
class Sentence:
    """An ordered, non-empty token sequence with a corpus-unique id."""

    tokens: tuple[str, ...]
    id: str

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise EmptySentence(f"sentence {self.id!r} has no tokens")
        for t in self.tokens:
            if not t or t.split() != [t]:
                raise EmptySentence(f"sentence {self.id!r} has an empty or whitespace token")

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


def tokenize(line: str, id: str = "") -> Sentence:
    """Lower-case and whitespace-split a raw line into a Sentence."""
    tokens = line.lower().split()
    if not tokens:
        raise EmptyLine("no tokens after trimming")
    return Sentence(tuple(tokens), id)


class Vocabulary:
    """Bijection between tokens and indices with PAD=0 and UNK=1 reserved.

    Unknown tokens map to UNK on lookup. Index assignment is deterministic:
    descending frequency, ties broken lexicographically.
    """

    def __init__(self, tokens_in_order: Iterable[str]):
        self._index = {PAD: PAD_INDEX, UNK: UNK_INDEX}
        self._tokens = [PAD, UNK]
        for tok in tokens_in_order:
            if tok in self._index:
                raise ValueError(f"duplicate token {tok!r}")
            self._index[tok] = len(self._tokens)
            self._tokens.append(tok)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def token(self, index: int) -> str:
        return self._tokens[index]

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens)

    def indices(self, tokens: Iterable[str]) -> list[int]:
        get = self._index.get
        return [get(t, UNK_INDEX) for t in tokens]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, tok in enumerate(self._tokens):
                f.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    tok, idx = line.split("\t")
                    index = int(idx)
                except ValueError:
                    raise MalformedLine(f"{path}:{lineno + 1}: expected 'token<TAB>index'")
                if index != len(tokens):
                    raise MalformedLine(f"{path}:{lineno + 1}: indices must be contiguous")
                tokens.append(tok)
        if len(tokens) < 2 or tokens[0] != PAD or tokens[1] != UNK:
            raise MalformedLine(f"{path}: missing reserved {PAD}/{UNK} rows")
        return cls(tokens[2:])


def build_vocab(corpus: Iterable[Sentence], min_count: int = 1) -> Vocabulary:
    """Count token frequencies and keep everything occurring >= min_count."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    n = 0
    for sent in corpus:
        counts.update(sent.tokens)
        n += 1
    if n == 0:
        raise EmptyCorpus("no sentences in corpus")
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


@dataclass
class EmbeddingTable:
    """Vocabulary-aligned embedding matrix; the PAD row is all zeros."""

    matrix: np.ndarray  # (V, d)
    dim: int = field(init=False)

    def __post_init__(self):
        self.dim = int(self.matrix.shape[1])


def init_embeddings(
    vocab: Vocabulary, dim: int, rng: np.random.Generator, dtype=np.float32, scale: float = 1.0
) -> EmbeddingTable:
    """Random table for training without a pretrained file: rows are
    uniform(-scale, scale), PAD stays zero.

    The default scale is deliberately larger than the 0.1 used for rows
    missing from a pretrained file: with nothing but random vectors, the
    encoder needs input magnitudes comparable to real word vectors for
    gradients to be useful at desk scale.
    """
    matrix = rng.uniform(-scale, scale, size=(len(vocab), dim)).astype(dtype)
    matrix[PAD_INDEX] = 0.0
    return EmbeddingTable(matrix)


def load_embeddings(
    path, vocab: Vocabulary, rng: np.random.Generator, dtype=np.float32
) -> EmbeddingTable:
    """Read a "token v1 ... vd" text file into a vocabulary-aligned table.

    Tokens absent from the file (including UNK) get vectors drawn
    uniform(-0.1, 0.1) from ``rng``, in vocabulary-index order, so a fixed
    seed gives a fixed table. PAD stays zero.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            fields = line.split()
            if not fields:
                continue
            tok, values = fields[0], fields[1:]
            if dim is None:
                dim = len(values)
                if dim < 1:
                    raise DimensionMismatch(f"{path}:{lineno + 1}: no vector values")
            elif len(values) != dim:
                raise DimensionMismatch(
                    f"{path}:{lineno + 1}: expected {dim} values, got {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise MalformedLine(f"{path}:{lineno + 1}: non-numeric field")
            if tok in vocab:
                vectors[tok] = vec
    if dim is None:
        raise EmptyCorpus(f"{path}: embedding file has no rows")
    matrix = np.empty((len(vocab), dim), dtype=np.float64)
    for i, tok in enumerate(vocab.tokens):
        if tok == PAD:
            matrix[i] = 0.0
        elif tok in vectors:
            matrix[i] = vectors[tok]
        else:
            matrix[i] = rng.uniform(-0.1, 0.1, size=dim)
    return EmbeddingTable(matrix.astype(dtype))


def read_corpus(path) -> Iterator[Sentence]:
    """Yield one Sentence per non-blank line, ids being 0-based line numbers."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            if not line.strip():
                continue
            yield tokenize(line, id=str(lineno))


def write_corpus(path, sentences: Iterable[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sent in sentences:
            f.write(sent.text() + "\n")


def load_corpus(path) -> list[Sentence]:
    sentences = list(read_corpus(path))
    if not sentences:
        raise EmptyCorpus(f"{Path(path)}: no sentences")
    return sentences
