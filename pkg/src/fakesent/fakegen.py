"""Fake-sentence generation: word shuffle, word drop, and dataset assembly.

A fake sentence is a corrupted copy of a real one. Shuffling swaps the
tokens at two sampled positions; dropping removes the token at one sampled
position. Positions are 0-based everywhere, including in serialized records.

Dataset records are JSON objects, one per line:
    {"id", "tokens", "label", "source_id", "strategy", "i", "j"}
with strategy/i/j absent for real records and j absent for drop records.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .corpus import Sentence
from .errors import EmptyDataset, MalformedLine, NoDistinctPair, TooShort

REAL = 1
FAKE = 0

WORD_SHUFFLE = "shuffle"
WORD_DROP = "drop"
STRATEGIES = (WORD_SHUFFLE, WORD_DROP)

# identical-token swaps would produce a "fake" equal to the real sentence;
# resample the index pair this many times before giving up on the sentence
_MAX_PAIR_DRAWS = 10


@dataclass(frozen=True)
class CorruptionRecord:
    strategy: str
    i: int
    j: int | None = None  # shuffle only


@dataclass(frozen=True)
class LabeledExample:
    sentence: Sentence
    label: int
    record: CorruptionRecord | None
    source_id: str

    def __post_init__(self):
        if (self.label == FAKE) != (self.record is not None):
            raise ValueError("label FAKE iff a corruption record is present")


def swap_positions(s: Sentence, i: int, j: int, id: str) -> Sentence:
    """Deterministic core of word_shuffle: swap tokens at positions i and j."""
    toks = list(s.tokens)
    toks[i], toks[j] = toks[j], toks[i]
    return Sentence(tuple(toks), id)


def word_shuffle(
    s: Sentence, rng: np.random.Generator, id: str | None = None
) -> tuple[Sentence, CorruptionRecord]:
    """Swap two sampled positions holding distinct tokens.

    Raises TooShort for n < 2 and NoDistinctPair when no acceptable pair is
    drawn within the resampling budget (guaranteed when all tokens are
    identical).
    """
    n = len(s.tokens)
    if n < 2:
        raise TooShort(f"sentence {s.id!r} has {n} token(s), need 2 to shuffle")
    for _ in range(_MAX_PAIR_DRAWS):
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1  # uniform over pairs with i != j
        if s.tokens[i] != s.tokens[j]:
            out = swap_positions(s, i, j, id if id is not None else s.id + ":shuffle")
            return out, CorruptionRecord(WORD_SHUFFLE, i, j)
    raise NoDistinctPair(f"sentence {s.id!r}: no distinct-token pair found")


def word_drop(
    s: Sentence, rng: np.random.Generator, id: str | None = None
) -> tuple[Sentence, CorruptionRecord]:
    """Remove the token at one sampled position."""
    n = len(s.tokens)
    if n < 2:
        raise TooShort(f"sentence {s.id!r} has {n} token(s), need 2 to drop")
    i = int(rng.integers(n))
    toks = s.tokens[:i] + s.tokens[i + 1 :]
    out = Sentence(toks, id if id is not None else s.id + ":drop")
    return out, CorruptionRecord(WORD_DROP, i)


def word_edit_distance(a: Sentence | Iterable[str], b: Sentence | Iterable[str]) -> int:
    """Levenshtein distance over token sequences, unit edit costs.

    Two-row dynamic program, O(len(a) * len(b)) time, O(len(b)) space.
    """
    ta = a.tokens if isinstance(a, Sentence) else tuple(a)
    tb = b.tokens if isinstance(b, Sentence) else tuple(b)
    if len(ta) < len(tb):
        ta, tb = tb, ta
    prev = list(range(len(tb) + 1))
    for i, tok_a in enumerate(ta, start=1):
        cur = [i] + [0] * len(tb)
        for j, tok_b in enumerate(tb, start=1):
            cost = 0 if tok_a == tok_b else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def sentence_rng(run_seed: int, sentence_id: str) -> np.random.Generator:
    """Per-sentence random stream: derived from (run seed, sentence id).

    Corruption of distinct sentences is therefore independent of corpus
    order and safe to parallelize with a deterministic merge.
    """
    digest = hashlib.sha256(sentence_id.encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32)
    return np.random.default_rng([np.uint32(run_seed & 0xFFFFFFFF), *words])


def build_dataset(
    corpus: Iterable[Sentence],
    strategy: str,
    fakes_per_real: int,
    seed: int,
) -> list[LabeledExample]:
    """Emit each eligible real sentence followed by its corruption(s).

    Sentences failing the strategy's precondition are skipped entirely so
    the class balance stays at 1 : fakes_per_real.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if fakes_per_real < 1:
        raise ValueError("fakes_per_real must be >= 1")
    corrupt = word_shuffle if strategy == WORD_SHUFFLE else word_drop
    out: list[LabeledExample] = []
    for sent in corpus:
        rng = sentence_rng(seed, sent.id)
        fakes = []
        try:
            for k in range(fakes_per_real):
                fake_sent, record = corrupt(sent, rng, id=f"{sent.id}:f{k}")
                fakes.append(LabeledExample(fake_sent, FAKE, record, sent.id))
        except (TooShort, NoDistinctPair):
            continue
        out.append(LabeledExample(sent, REAL, None, sent.id))
        out.extend(fakes)
    if not out:
        raise EmptyDataset(f"no sentence was eligible for {strategy}")
    return out


def example_to_json(ex: LabeledExample) -> str:
    obj: dict = {
        "id": ex.sentence.id,
        "tokens": list(ex.sentence.tokens),
        "label": ex.label,
        "source_id": ex.source_id,
    }
    if ex.record is not None:
        obj["strategy"] = ex.record.strategy
        obj["i"] = ex.record.i
        if ex.record.j is not None:
            obj["j"] = ex.record.j
    return json.dumps(obj, ensure_ascii=False)


def example_from_json(line: str) -> LabeledExample:
    try:
        obj = json.loads(line)
        sent = Sentence(tuple(obj["tokens"]), obj["id"])
        record = None
        if "strategy" in obj:
            record = CorruptionRecord(obj["strategy"], obj["i"], obj.get("j"))
        return LabeledExample(sent, int(obj["label"]), record, obj["source_id"])
    except (KeyError, ValueError, TypeError) as e:
        raise MalformedLine(f"bad dataset record: {e}")


def write_dataset(path, examples: Iterable[LabeledExample]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(example_to_json(ex) + "\n")


def read_dataset(path) -> Iterator[LabeledExample]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield example_from_json(line)


def load_dataset(path) -> list[LabeledExample]:
    examples = list(read_dataset(path))
    if not examples:
        raise EmptyDataset(f"{path}: no examples")
    return examples
