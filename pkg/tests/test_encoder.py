import math

import numpy as np
import pytest

from fakesent import numcore as nc
from fakesent.corpus import Sentence, build_vocab, init_embeddings
from fakesent.encoder import SentenceEncoder, init_direction, lstm_step
from fakesent.errors import EmptyDataset


def make_vocab(n_tokens):
    sentences = [Sentence(tuple(f"w{i:03d}" for i in range(n_tokens)), "0")]
    return build_vocab(sentences)


def make_encoder(n_tokens=20, dim=4, hidden=4, seed=0, dtype=np.float64):
    vocab = make_vocab(n_tokens)
    rng = np.random.default_rng(seed)
    table = init_embeddings(vocab, dim, rng, dtype=dtype)
    return SentenceEncoder.create(vocab, table, hidden, rng)


def rand_sentence(rng, vocab, n):
    toks = tuple(vocab.token(int(i)) for i in rng.integers(2, len(vocab), size=n))
    return Sentence(toks, f"s{rng.integers(1 << 30)}")


def zero_direction(dim, hidden, dtype=np.float64):
    d = init_direction("z", dim, hidden, np.random.default_rng(0), dtype)
    d.w.value[...] = 0.0
    d.u.value[...] = 0.0
    d.b.value[...] = 0.0
    return d


def scalar_lstm_oracle(xs, w, u, b):
    """Pure-python scalar LSTM, gate order (i, f, o, g)."""
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    h = c = 0.0
    out = []
    for x in xs:
        pre = [w[k] * x + u[k] * h + b[k] for k in range(4)]
        i, f, o = sig(pre[0]), sig(pre[1]), sig(pre[2])
        g = math.tanh(pre[3])
        c = f * c + i * g
        h = o * math.tanh(c)
        out.append((h, c))
    return out


def test_lstm_step_all_zero_parameters():
    # i = f = o = 0.5 and g = 0, so c_t = 0.5 c_prev and h_t = 0.5 tanh(c_t)
    d = zero_direction(dim=3, hidden=2)
    x = nc.constant(np.array([[0.4, -1.0, 2.0]]))
    h0 = nc.constant(np.zeros((1, 2)))
    c0 = nc.constant(np.array([[0.8, -0.6]]))
    h, c = lstm_step(d, x, h0, c0)
    np.testing.assert_allclose(c.data, 0.5 * c0.data, atol=1e-15)
    np.testing.assert_allclose(h.data, 0.5 * np.tanh(0.5 * c0.data), atol=1e-15)
    # zero initial cell: both outputs exactly zero
    h, c = lstm_step(d, x, h0, nc.constant(np.zeros((1, 2))))
    assert np.array_equal(h.data, np.zeros((1, 2)))
    assert np.array_equal(c.data, np.zeros((1, 2)))


def test_lstm_step_scalar_input_gate_only_layout():
    # H = d = 1, input weights [1, 0, 0, 0]: only the input gate sees x
    d = zero_direction(dim=1, hidden=1)
    d.w.value[0, 0] = 1.0
    h = nc.constant(np.zeros((1, 1)))
    c = nc.constant(np.zeros((1, 1)))
    for x, (eh, ec) in zip([0.0, 1.5, -2.0], scalar_lstm_oracle([0.0, 1.5, -2.0], [1, 0, 0, 0], [0] * 4, [0] * 4)):
        h, c = lstm_step(d, nc.constant(np.array([[x]])), h, c)
        np.testing.assert_allclose(h.data[0, 0], eh, atol=1e-14)
        np.testing.assert_allclose(c.data[0, 0], ec, atol=1e-14)


def test_lstm_step_scalar_sequence_matches_hand_oracle():
    w, u, b = [1.0, -0.5, 0.3, 0.8], [0.2, 0.4, -0.3, 0.6], [0.1, 1.0, -0.2, 0.05]
    d = zero_direction(dim=1, hidden=1)
    d.w.value[:, 0] = w
    d.u.value[:, 0] = u
    d.b.value[:] = b
    xs = [0.7, -0.3, 1.2, 0.0, -2.0]
    h = nc.constant(np.zeros((1, 1)))
    c = nc.constant(np.zeros((1, 1)))
    for x, (eh, ec) in zip(xs, scalar_lstm_oracle(xs, w, u, b)):
        h, c = lstm_step(d, nc.constant(np.array([[x]])), h, c)
        np.testing.assert_allclose(h.data[0, 0], eh, atol=1e-13)
        np.testing.assert_allclose(c.data[0, 0], ec, atol=1e-13)


def test_lstm_step_gradients_match_finite_differences():
    dirn = init_direction("d", 3, 2, np.random.default_rng(5), np.float64)
    rng = np.random.default_rng(6)
    xs = rng.standard_normal((4, 3))

    def loss_fn(tape):
        h = nc.constant(np.zeros((1, 2)))
        c = nc.constant(np.zeros((1, 2)))
        w = _l(tape, dirn.w)
        u = _l(tape, dirn.u)
        b = _l(tape, dirn.b)
        for t in range(4):
            h, c = lstm_step(dirn, nc.constant(xs[t : t + 1]), h, c, tape, w, u, b)
        flat = nc.reshape(tape, h, (1, 2))
        return nc.matmul(tape, flat, nc.constant(np.ones((2, 1))))

    def _l(tape, p):
        return tape.leaf(p) if tape is not None else nc.Tensor(p.value)

    err = nc.grad_check(loss_fn, [dirn.w, dirn.u, dirn.b], eps=1e-5, samples=40,
                        rng=np.random.default_rng(2))
    assert err < 1e-4


def test_encode_single_step_equals_its_state():
    enc = make_encoder()
    s = Sentence(("w003",), "x")
    z, u = enc.encode_with_states(s)
    assert u.shape == (1, 2 * enc.hidden)
    assert np.array_equal(z, u[0])


def test_pooling_dominance_on_stored_states():
    enc = make_encoder(seed=3)
    rng = np.random.default_rng(4)
    for _ in range(20):
        s = rand_sentence(rng, enc.vocab, int(rng.integers(1, 9)))
        z, u = enc.encode_with_states(s)
        assert np.array_equal(z, u.max(axis=0))


def test_batch_of_one_equals_encode():
    enc = make_encoder(seed=8)
    s = rand_sentence(np.random.default_rng(1), enc.vocab, 5)
    assert np.array_equal(enc.encode_batch([s])[0], enc.encode(s))


def test_mixed_length_batch_bit_identical_to_unbatched():
    enc = make_encoder(seed=9, dtype=np.float32)
    rng = np.random.default_rng(2)
    sents = [rand_sentence(rng, enc.vocab, n) for n in (2, 5, 3, 7, 1)]
    batched = enc.encode_batch(sents)
    for i, s in enumerate(sents):
        assert np.array_equal(batched[i], enc.encode(s)), f"sentence {i} differs"


def test_chunked_encoding_matches_single_chunk():
    enc = make_encoder(seed=10, dtype=np.float32)
    rng = np.random.default_rng(3)
    sents = [rand_sentence(rng, enc.vocab, int(rng.integers(1, 10))) for _ in range(10)]
    assert np.array_equal(enc.encode_batch(sents, batch_size=3), enc.encode_batch(sents, batch_size=64))


def test_all_unk_sentence_encodes_to_something_nonzero():
    enc = make_encoder(seed=11)
    s = Sentence(("zzz", "qqq"), "u")
    assert all(i == 1 for i in enc.vocab.indices(s.tokens))
    z = enc.encode(s)
    assert np.all(np.isfinite(z))
    assert np.any(z != 0.0)


def test_empty_batch_raises():
    enc = make_encoder()
    with pytest.raises(EmptyDataset):
        enc.encode_batch([])


def test_zeroing_backward_direction_leaves_forward_half_unchanged():
    enc = make_encoder(seed=12)
    rng = np.random.default_rng(5)
    sents = [rand_sentence(rng, enc.vocab, 6) for _ in range(5)]
    before = enc.encode_batch(sents)
    for p in (enc.bwd.w, enc.bwd.u, enc.bwd.b):
        p.value[...] = 0.0
    after = enc.encode_batch(sents)
    h = enc.hidden
    assert np.array_equal(before[:, :h], after[:, :h])
    assert np.array_equal(after[:, h:], np.zeros_like(after[:, h:]))


def test_loop_matches_manual_lstm_step_sequence():
    enc = make_encoder(seed=13)
    rng = np.random.default_rng(7)
    s = rand_sentence(rng, enc.vocab, 5)
    idx, lengths = enc.prepare_batch([s])
    _, u = enc.forward_batch(None, idx, lengths)
    # forward half, recomputed step by step through the public cell
    emb = enc.embedding.value[idx[0]]
    h = nc.constant(np.zeros((1, enc.hidden)))
    c = nc.constant(np.zeros((1, enc.hidden)))
    for t in range(5):
        h, c = lstm_step(enc.fwd, nc.constant(emb[t : t + 1]), h, c)
        assert np.array_equal(u.data[0, t, : enc.hidden], h.data[0])


def test_pad_row_receives_no_gradient():
    enc = make_encoder(seed=14)
    rng = np.random.default_rng(8)
    sents = [rand_sentence(rng, enc.vocab, n) for n in (3, 6)]  # padding present
    idx, lengths = enc.prepare_batch(sents)
    tape = nc.Tape()
    z, _ = enc.forward_batch(tape, idx, lengths)
    flat = nc.reshape(tape, z, (1, z.data.size))
    loss = nc.matmul(tape, flat, nc.constant(np.ones((z.data.size, 1))))
    nc.backward(tape, loss)
    assert np.array_equal(enc.embedding.grad[0], np.zeros(enc.dim))
    assert np.any(enc.embedding.grad != 0.0)


def test_encode_path_gradients_match_finite_differences():
    enc = make_encoder(n_tokens=15, dim=3, hidden=3, seed=15)
    rng = np.random.default_rng(9)
    sents = [rand_sentence(rng, enc.vocab, n) for n in (3, 5)]
    idx, lengths = enc.prepare_batch(sents)
    ones = np.ones((2 * enc.out_dim, 1))

    def loss_fn(tape):
        z, _ = enc.forward_batch(tape, idx, lengths)
        flat = nc.reshape(tape, z, (1, 2 * enc.out_dim))
        return nc.matmul(tape, flat, nc.constant(ones))

    err = nc.grad_check(loss_fn, enc.parameters(), eps=1e-5, samples=80,
                        rng=np.random.default_rng(3))
    assert err < 1e-4


def test_prepare_batch_pads_with_pad_index():
    enc = make_encoder()
    s1 = Sentence(("w001", "w002"), "a")
    s2 = Sentence(("w003",), "b")
    idx, lengths = enc.prepare_batch([s1, s2])
    assert idx.shape == (2, 2)
    assert np.array_equal(lengths, [2, 1])
    assert idx[1, 1] == 0  # PAD
    assert idx[0, 0] == enc.vocab.index("w001")
