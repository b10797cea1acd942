from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fakesent import fakegen as fg
from fakesent.corpus import Sentence
from fakesent.errors import EmptyDataset, NoDistinctPair, TooShort


def sent(tokens, id="s"):
    return Sentence(tuple(tokens), id)


def dp_edit_distance(a, b):
    """Independent full-matrix Levenshtein oracle."""
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = d[i - 1][j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, sub)
    return d[n][m]


def random_sentence(rng, min_len=2, max_len=12, alphabet_size=30):
    n = int(rng.integers(min_len, max_len + 1))
    toks = tuple(f"w{int(k)}" for k in rng.integers(0, alphabet_size, size=n))
    return Sentence(toks, f"r{rng.integers(1 << 30)}")


def test_swap_positions_matches_flipped_bigram_example():
    s = sent(["it", "shone", "in", "the", "light", "."])
    out = fg.swap_positions(s, 2, 3, "x")
    assert out.tokens == ("it", "shone", "the", "in", "light", ".")


def test_shuffle_two_tokens_forced_outcome():
    out, rec = fg.word_shuffle(sent(["a", "b"]), np.random.default_rng(0))
    assert out.tokens == ("b", "a")
    assert rec.strategy == fg.WORD_SHUFFLE
    assert {rec.i, rec.j} == {0, 1}


def test_shuffle_identical_tokens_raises():
    with pytest.raises(NoDistinctPair):
        fg.word_shuffle(sent(["a", "a", "a"]), np.random.default_rng(0))


def test_shuffle_too_short_raises():
    with pytest.raises(TooShort):
        fg.word_shuffle(sent(["a"]), np.random.default_rng(0))


def test_shuffle_swaps_exactly_the_recorded_pair():
    rng = np.random.default_rng(7)
    for _ in range(200):
        s = random_sentence(rng)
        try:
            out, rec = fg.word_shuffle(s, rng)
        except NoDistinctPair:
            continue
        assert len(out.tokens) == len(s.tokens)
        assert out.tokens != s.tokens
        assert Counter(out.tokens) == Counter(s.tokens)
        assert out.tokens[rec.i] == s.tokens[rec.j]
        assert out.tokens[rec.j] == s.tokens[rec.i]
        assert s.tokens[rec.i] != s.tokens[rec.j]
        back = list(out.tokens)
        back[rec.i], back[rec.j] = back[rec.j], back[rec.i]
        assert tuple(back) == s.tokens


def test_drop_removes_recorded_position():
    out, rec = fg.word_drop(sent(["a", "b", "c"]), np.random.default_rng(3))
    assert len(out.tokens) == 2
    assert out.tokens == tuple(t for k, t in enumerate(("a", "b", "c")) if k != rec.i)


def test_drop_forced_cases():
    s = sent(["a", "b", "c"])
    seen = set()
    for seed in range(50):
        out, rec = fg.word_drop(s, np.random.default_rng(seed))
        seen.add(rec.i)
        if rec.i == 1:
            assert out.tokens == ("a", "c")
    assert seen == {0, 1, 2}
    out, rec = fg.word_drop(sent(["a", "b"]), np.random.default_rng(1))
    if rec.i == 0:
        assert out.tokens == ("b",)
    with pytest.raises(TooShort):
        fg.word_drop(sent(["a"]), np.random.default_rng(0))


def test_edit_distance_identity_and_deletion():
    assert fg.word_edit_distance(["a", "b", "c"], ["a", "b", "c"]) == 0
    assert fg.word_edit_distance(["a", "b", "c"], ["a", "c"]) == 1


def test_edit_distance_of_shuffles_is_two_against_dp_oracle():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 200:
        s = random_sentence(rng, min_len=3)
        try:
            out, rec = fg.word_shuffle(s, rng)
        except NoDistinctPair:
            continue
        d = fg.word_edit_distance(s, out)
        assert d == dp_edit_distance(s.tokens, out.tokens)
        if abs(rec.i - rec.j) > 1:
            assert d == 2
        else:
            # adjacent distinct swap: also 2 (one substitution per position)
            assert d == 2
        checked += 1


def test_edit_distance_of_drops_is_one():
    rng = np.random.default_rng(12)
    for _ in range(100):
        s = random_sentence(rng)
        out, _ = fg.word_drop(s, rng)
        assert fg.word_edit_distance(s, out) == 1
        assert dp_edit_distance(s.tokens, out.tokens) == 1


@given(st.data())
@settings(max_examples=100, deadline=None)
def test_edit_distance_symmetric_and_triangle(data):
    words = st.sampled_from(["a", "b", "c"])
    seqs = st.lists(words, min_size=0, max_size=6)
    x, y, z = data.draw(seqs), data.draw(seqs), data.draw(seqs)
    dxy = fg.word_edit_distance(x, y)
    assert dxy == fg.word_edit_distance(y, x)
    assert dxy == dp_edit_distance(x, y)
    assert dxy <= fg.word_edit_distance(x, z) + fg.word_edit_distance(z, y)


def test_build_dataset_single_pair():
    data = fg.build_dataset([sent(["a", "b"], "0")], fg.WORD_SHUFFLE, 1, seed=5)
    assert len(data) == 2
    real, fake = data
    assert real.label == fg.REAL and real.record is None
    assert fake.label == fg.FAKE and fake.sentence.tokens == ("b", "a")
    assert fake.source_id == "0"
    assert fake.record.strategy == fg.WORD_SHUFFLE


def test_build_dataset_ineligible_only_raises():
    with pytest.raises(EmptyDataset):
        fg.build_dataset([sent(["a"], "0")], fg.WORD_DROP, 1, seed=0)


def test_build_dataset_skips_ineligible_sentences_entirely():
    corpus = [sent(["a"], "0"), sent(["x", "y"], "1"), sent(["q", "q"], "2")]
    data = fg.build_dataset(corpus, fg.WORD_SHUFFLE, 1, seed=0)
    assert [ex.sentence.id for ex in data] == ["1", "1:f0"]


def test_build_dataset_counts_and_balance():
    # oracle: simple counting over a fully eligible corpus
    rng = np.random.default_rng(21)
    corpus = [random_sentence(rng, min_len=4, alphabet_size=1000) for _ in range(1000)]
    corpus = [Sentence(s.tokens, str(i)) for i, s in enumerate(corpus)]
    data = fg.build_dataset(corpus, fg.WORD_SHUFFLE, 1, seed=3)
    assert len(data) == 2000
    labels = Counter(ex.label for ex in data)
    assert labels[fg.REAL] == labels[fg.FAKE] == 1000


def test_build_dataset_fakes_per_real():
    data = fg.build_dataset([sent(["a", "b", "c"], "0")], fg.WORD_DROP, 3, seed=1)
    assert len(data) == 4
    assert [ex.label for ex in data] == [fg.REAL, fg.FAKE, fg.FAKE, fg.FAKE]
    assert len({ex.sentence.id for ex in data}) == 4


def test_build_dataset_reproducible_and_order_independent_per_sentence():
    rng = np.random.default_rng(33)
    corpus = [random_sentence(rng, min_len=4) for _ in range(50)]
    corpus = [Sentence(s.tokens, str(i)) for i, s in enumerate(corpus)]
    d1 = fg.build_dataset(corpus, fg.WORD_SHUFFLE, 2, seed=9)
    d2 = fg.build_dataset(corpus, fg.WORD_SHUFFLE, 2, seed=9)
    assert d1 == d2
    d3 = fg.build_dataset(corpus, fg.WORD_SHUFFLE, 2, seed=10)
    assert d3 != d1
    # per-sentence streams: reversing corpus order permutes but does not change fakes
    rev = fg.build_dataset(list(reversed(corpus)), fg.WORD_SHUFFLE, 2, seed=9)
    assert sorted(ex.sentence.tokens for ex in rev) == sorted(ex.sentence.tokens for ex in d1)


def test_every_fake_differs_from_source():
    rng = np.random.default_rng(44)
    corpus = [Sentence(random_sentence(rng, min_len=2).tokens, str(i)) for i in range(300)]
    for strategy in fg.STRATEGIES:
        data = fg.build_dataset(corpus, strategy, 1, seed=8)
        by_id = {ex.sentence.id: ex for ex in data}
        for ex in data:
            if ex.label == fg.FAKE:
                assert ex.sentence.tokens != by_id[ex.source_id].sentence.tokens


def test_dataset_jsonl_roundtrip(tmp_path):
    data = fg.build_dataset([sent(["a", "b", "c"], "7")], fg.WORD_SHUFFLE, 2, seed=2)
    p = tmp_path / "d.jsonl"
    fg.write_dataset(p, data)
    back = fg.load_dataset(p)
    assert back == data
    first = p.read_text().splitlines()[0]
    assert '"strategy"' not in first  # real record carries no corruption fields


def test_real_record_json_shape(tmp_path):
    import json

    data = fg.build_dataset([sent(["a", "b"], "0")], fg.WORD_DROP, 1, seed=2)
    objs = [json.loads(fg.example_to_json(ex)) for ex in data]
    assert set(objs[0]) == {"id", "tokens", "label", "source_id"}
    assert set(objs[1]) == {"id", "tokens", "label", "source_id", "strategy", "i"}
    assert objs[1]["strategy"] == "drop"
