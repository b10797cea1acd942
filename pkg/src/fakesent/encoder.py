"""Sentence encoder: embedding lookup, single-layer bidirectional LSTM,
concatenated directional states, max-pooling over time.

Layout conventions:

* Gate order inside every 4H-wide block is (input, forget, output, cell
  candidate). Input weights are (4H, d), recurrent weights (4H, H),
  bias (4H,), kept per direction.
* The backward direction consumes tokens in reverse order; its state after
  reading tokens n-1 .. t is aligned to position t before concatenation,
  so the per-step concatenated state at t sees the full prefix (forward)
  and the full suffix (backward).
* Batches are padded with PAD (index 0) and pooling masks positions at or
  beyond each sentence's length, so encodings are bit-identical whether a
  sentence is encoded alone or inside any batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numcore as nc
from .corpus import EmbeddingTable, Sentence, Vocabulary
from .errors import EmptyDataset, ShapeMismatch

GATES = 4


@dataclass
class LstmDirection:
    """One direction's parameters: input weights, recurrent weights, bias."""

    w: nc.Parameter  # (4H, d)
    u: nc.Parameter  # (4H, H)
    b: nc.Parameter  # (4H,)
    hidden: int


def init_direction(
    prefix: str, dim: int, hidden: int, rng: np.random.Generator, dtype
) -> LstmDirection:
    """Uniform(-k, k) with k = 1/sqrt(H); forget-gate bias starts at 1.0
    so early cell memory survives the first updates."""
    k = 1.0 / math.sqrt(hidden)
    w = rng.uniform(-k, k, size=(GATES * hidden, dim)).astype(dtype)
    u = rng.uniform(-k, k, size=(GATES * hidden, hidden)).astype(dtype)
    b = np.zeros(GATES * hidden, dtype=dtype)
    b[hidden : 2 * hidden] = 1.0
    return LstmDirection(
        nc.Parameter(f"{prefix}.w", w),
        nc.Parameter(f"{prefix}.u", u),
        nc.Parameter(f"{prefix}.b", b),
        hidden,
    )


def _leaf(tape: nc.Tape | None, param: nc.Parameter) -> nc.Tensor:
    return tape.leaf(param) if tape is not None else nc.Tensor(param.value)


def _cell(tape, pre_x, h_prev, c_prev, u_leaf, hidden):
    """Gate algebra for one step, from a precomputed input projection.

    pre_x is W x_t + b for this step; the recurrent term U h_prev is added
    here. i, f, o are sigmoid gates, g the tanh candidate:
    c_t = f * c_prev + i * g ; h_t = o * tanh(c_t).
    """
    pre = nc.add(tape, pre_x, nc.matmul(tape, h_prev, u_leaf, transpose_b=True))
    i = nc.sigmoid(tape, nc.narrow(tape, pre, 1, 0, hidden))
    f = nc.sigmoid(tape, nc.narrow(tape, pre, 1, hidden, hidden))
    o = nc.sigmoid(tape, nc.narrow(tape, pre, 1, 2 * hidden, hidden))
    g = nc.tanh(tape, nc.narrow(tape, pre, 1, 3 * hidden, hidden))
    c = nc.add(tape, nc.mul(tape, f, c_prev), nc.mul(tape, i, g))
    h = nc.mul(tape, o, nc.tanh(tape, c))
    return h, c


def lstm_step(
    direction: LstmDirection,
    x_t: nc.Tensor,
    h_prev: nc.Tensor,
    c_prev: nc.Tensor,
    tape: nc.Tape | None = None,
    w_leaf: nc.Tensor | None = None,
    u_leaf: nc.Tensor | None = None,
    b_leaf: nc.Tensor | None = None,
) -> tuple[nc.Tensor, nc.Tensor]:
    """One LSTM step on a (batch, d) input; returns (h_t, c_t), (batch, H) each."""
    if x_t.data.ndim != 2 or x_t.data.shape[1] != direction.w.value.shape[1]:
        raise ShapeMismatch(f"lstm_step input shape {x_t.data.shape}")
    if w_leaf is None:
        w_leaf = _leaf(tape, direction.w)
    if u_leaf is None:
        u_leaf = _leaf(tape, direction.u)
    if b_leaf is None:
        b_leaf = _leaf(tape, direction.b)
    pre_x = nc.add(tape, nc.matmul(tape, x_t, w_leaf, transpose_b=True), b_leaf)
    return _cell(tape, pre_x, h_prev, c_prev, u_leaf, direction.hidden)


class SentenceEncoder:
    """Embedding + BiLSTM + temporal max-pooling; output width is 2H."""

    def __init__(
        self,
        vocab: Vocabulary,
        embedding: nc.Parameter,
        fwd: LstmDirection,
        bwd: LstmDirection,
    ):
        self.vocab = vocab
        self.embedding = embedding
        self.fwd = fwd
        self.bwd = bwd
        self.dim = embedding.value.shape[1]
        self.hidden = fwd.hidden

    @classmethod
    def create(
        cls,
        vocab: Vocabulary,
        table: EmbeddingTable,
        hidden: int,
        rng: np.random.Generator,
    ) -> "SentenceEncoder":
        if table.matrix.shape[0] != len(vocab):
            raise ShapeMismatch("embedding rows must match vocabulary size")
        dtype = table.matrix.dtype
        embedding = nc.Parameter("embedding", table.matrix.copy())
        fwd = init_direction("fwd", table.dim, hidden, rng, dtype)
        bwd = init_direction("bwd", table.dim, hidden, rng, dtype)
        return cls(vocab, embedding, fwd, bwd)

    @property
    def dtype(self):
        return self.embedding.value.dtype

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden

    def parameters(self, include_embedding: bool = True) -> list[nc.Parameter]:
        params = [] if not include_embedding else [self.embedding]
        for d in (self.fwd, self.bwd):
            params.extend([d.w, d.u, d.b])
        return params

    def prepare_batch(self, sentences: Sequence[Sentence]) -> tuple[np.ndarray, np.ndarray]:
        """Token-index matrix (batch, max_len) padded with PAD, plus lengths."""
        if len(sentences) == 0:
            raise EmptyDataset("empty batch")
        lengths = np.array([len(s) for s in sentences], dtype=np.int64)
        idx = np.zeros((len(sentences), int(lengths.max())), dtype=np.int64)
        for r, s in enumerate(sentences):
            idx[r, : lengths[r]] = self.vocab.indices(s.tokens)
        return idx, lengths

    def _run_direction(self, tape, direction, emb, lengths, reverse: bool):
        """States (batch, T, H) aligned to original positions."""
        b, t, d = emb.data.shape
        hidden = direction.hidden
        x = nc.reverse_within(tape, emb, lengths) if reverse else emb
        w_leaf = _leaf(tape, direction.w)
        u_leaf = _leaf(tape, direction.u)
        b_leaf = _leaf(tape, direction.b)
        # input projections for every step at once; per-step slices below
        flat = nc.reshape(tape, x, (b * t, d))
        proj = nc.add(tape, nc.matmul(tape, flat, w_leaf, transpose_b=True), b_leaf)
        proj = nc.reshape(tape, proj, (b, t, GATES * hidden))
        zeros = np.zeros((b, hidden), dtype=emb.data.dtype)
        h, c = nc.constant(zeros), nc.constant(zeros.copy())
        states = []
        for step in range(t):
            pre_x = nc.pick(tape, proj, axis=1, index=step)
            h, c = _cell(tape, pre_x, h, c, u_leaf, hidden)
            states.append(h)
        stacked = nc.stack(tape, states, axis=1)
        if reverse:
            stacked = nc.reverse_within(tape, stacked, lengths)
        return stacked

    def forward_batch(
        self, tape: nc.Tape | None, idx: np.ndarray, lengths: np.ndarray
    ) -> tuple[nc.Tensor, nc.Tensor]:
        """Pooled encodings (batch, 2H) and per-step concatenated states."""
        emb = nc.rows(tape, _leaf(tape, self.embedding), idx)
        hf = self._run_direction(tape, self.fwd, emb, lengths, reverse=False)
        hb = self._run_direction(tape, self.bwd, emb, lengths, reverse=True)
        u = nc.concat(tape, [hf, hb], axis=2)
        z, _ = nc.max_over_time(tape, u, lengths)
        return z, u

    def encode_batch(self, sentences: Sequence[Sentence], batch_size: int = 64) -> np.ndarray:
        """Encodings for a list of sentences, processed in padded chunks.

        Chunking is invisible: pooled values are bit-identical for any
        grouping because padding is masked and all forward kernels are
        row-stable.
        """
        if len(sentences) == 0:
            raise EmptyDataset("empty batch")
        out = np.empty((len(sentences), self.out_dim), dtype=self.dtype)
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            idx, lengths = self.prepare_batch(chunk)
            z, _ = self.forward_batch(None, idx, lengths)
            out[start : start + len(chunk)] = z.data
        return out

    def encode(self, sentence: Sentence) -> np.ndarray:
        """Fixed-length representation of one sentence, shape (2H,)."""
        return self.encode_batch([sentence])[0]

    def encode_with_states(self, sentence: Sentence) -> tuple[np.ndarray, np.ndarray]:
        """Encoding plus the (n, 2H) matrix of per-step concatenated states."""
        idx, lengths = self.prepare_batch([sentence])
        z, u = self.forward_batch(None, idx, lengths)
        return z.data[0], u.data[0]
