"""Frozen-encoder evaluation: probing-task generators and logistic probes.

Three tasks are generable from raw tokens alone:

  sentlen  predict the binned token count of a sentence
  wc       predict which one of K target words the sentence contains
  bshift   detect whether one adjacent token pair was swapped

Each generator produces a deterministic 80/10/10 train/valid/test split
keyed by a hash of (seed, sentence id). Probes are multinomial logistic
regressions trained by full-batch gradient descent with an L2 penalty on
the weights (bias unpenalized); the penalty is picked on the validation
split (ties go to the smaller penalty) and only the test accuracy of the
chosen probe is reported. The encoder is never touched.
"""

from __future__ import annotations

import hashlib
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Sentence, Vocabulary
from .errors import DegenerateBins, InsufficientExamples

SENTLEN = "sentlen"
WC = "wc"
BSHIFT = "bshift"
TASKS = (SENTLEN, WC, BSHIFT)


@dataclass
class ProbeConfig:
    l2_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    max_iterations: int = 300
    tolerance: float = 1e-5

    def __post_init__(self):
        if not self.l2_grid or any(l2 <= 0 for l2 in self.l2_grid):
            raise ValueError("l2_grid must be non-empty and strictly positive")


@dataclass
class ProbeDataset:
    name: str
    num_classes: int
    train: list[tuple[Sentence, int]]
    valid: list[tuple[Sentence, int]]
    test: list[tuple[Sentence, int]]

    def __post_init__(self):
        for split in (self.train, self.valid, self.test):
            for _, label in split:
                if not 0 <= label < self.num_classes:
                    raise ValueError(f"label {label} outside [0, {self.num_classes})")
        present = {label for _, label in self.train}
        if len(present) < self.num_classes:
            missing = sorted(set(range(self.num_classes)) - present)
            raise InsufficientExamples(f"{self.name}: classes {missing} absent from train split")

    @property
    def split_sizes(self) -> dict[str, int]:
        return {"train": len(self.train), "valid": len(self.valid), "test": len(self.test)}

    def sentences(self) -> list[Sentence]:
        return [s for split in (self.train, self.valid, self.test) for s, _ in split]


def _bucket(seed: int, sentence_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{sentence_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") % 10


def _split(pairs: Iterable[tuple[Sentence, int]], seed: int):
    """Deterministic 80/10/10 assignment by hashed sentence id."""
    train, valid, test = [], [], []
    for sent, label in pairs:
        b = _bucket(seed, sent.id)
        (train if b < 8 else valid if b == 8 else test).append((sent, label))
    return train, valid, test


def sextile_thresholds(lengths: Sequence[int]) -> list[int]:
    """Five empirical sextile cut points giving six length bins."""
    ordered = sorted(lengths)
    n = len(ordered)
    cuts = []
    for k in range(1, 6):
        cuts.append(int(ordered[min(n - 1, (k * n) // 6)]))
    if any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise DegenerateBins(f"sextile thresholds collapse: {cuts}")
    return cuts


def gen_sentlen(
    sentences: Sequence[Sentence], thresholds: Sequence[int] | None = None, seed: int = 0
) -> ProbeDataset:
    """Label each sentence with its length bin.

    Bin k holds lengths in (thresholds[k-1], thresholds[k]]; the last bin is
    open-ended. Default thresholds are the corpus's empirical sextiles.
    """
    if thresholds is None:
        thresholds = sextile_thresholds([len(s) for s in sentences])
    else:
        thresholds = list(thresholds)
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")
    num_classes = len(thresholds) + 1
    pairs = [(s, bisect_left(thresholds, len(s))) for s in sentences]
    counts = np.bincount([label for _, label in pairs], minlength=num_classes)
    if (counts == 0).any():
        raise DegenerateBins(f"empty length bins at thresholds {thresholds}: counts {counts.tolist()}")
    return ProbeDataset(SENTLEN, num_classes, *_split(pairs, seed))


def default_wc_targets(vocab: Vocabulary, k: int = 10) -> list[str]:
    """Mid-frequency target words: vocabulary ranks 100..109 when available,
    otherwise a centered window (stopwords and hapaxes are both poor probes)."""
    n_tokens = len(vocab) - 2
    if n_tokens < k:
        raise InsufficientExamples(f"vocabulary has only {n_tokens} tokens, need {k}")
    start = 100 if n_tokens >= 100 + k else (n_tokens - k) // 2
    return [vocab.token(2 + start + i) for i in range(k)]


def gen_wc(
    sentences: Sequence[Sentence],
    targets: Sequence[str] | None = None,
    vocab: Vocabulary | None = None,
    seed: int = 0,
    min_per_class: int = 10,
) -> ProbeDataset:
    """Keep sentences containing exactly one distinct target word; the label
    is that word's index in the target list."""
    if targets is None:
        if vocab is None:
            raise ValueError("gen_wc needs explicit targets or a vocabulary")
        targets = default_wc_targets(vocab)
    targets = list(targets)
    if len(targets) < 2:
        raise ValueError("need at least two target words")
    target_index = {t: i for i, t in enumerate(targets)}
    pairs = []
    for s in sentences:
        hits = {target_index[t] for t in set(s.tokens) if t in target_index}
        if len(hits) == 1:
            pairs.append((s, hits.pop()))
    counts = np.bincount([label for _, label in pairs], minlength=len(targets))
    if (counts < min_per_class).any():
        starved = [targets[i] for i in np.flatnonzero(counts < min_per_class)]
        raise InsufficientExamples(
            f"target words {starved} have fewer than {min_per_class} exactly-one sentences"
        )
    return ProbeDataset(WC, len(targets), *_split(pairs, seed))


def gen_bshift(sentences: Sequence[Sentence], seed: int = 0) -> ProbeDataset:
    """Binary task: original sentence (0) versus a copy with one random
    adjacent distinct-token pair swapped (1), roughly balanced by coin flip.

    Only sentences with n >= 3 and at least one adjacent distinct pair are
    eligible.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for s in sentences:
        if len(s) < 3:
            continue
        positions = [p for p in range(len(s) - 1) if s.tokens[p] != s.tokens[p + 1]]
        if not positions:
            continue
        if rng.integers(2) == 0:
            pairs.append((s, 0))
        else:
            p = positions[int(rng.integers(len(positions)))]
            toks = list(s.tokens)
            toks[p], toks[p + 1] = toks[p + 1], toks[p]
            pairs.append((Sentence(tuple(toks), s.id + ":b"), 1))
    if not pairs:
        raise InsufficientExamples("no sentence is eligible for bshift")
    return ProbeDataset(BSHIFT, 2, *_split(pairs, seed))


@dataclass
class ProbeResult:
    name: str
    test_accuracy: float
    chosen_l2: float
    converged: bool
    num_classes: int
    split_sizes: dict[str, int]
    valid_accuracy: float

    def to_dict(self) -> dict:
        return {
            "test_accuracy": self.test_accuracy,
            "chosen_l2": self.chosen_l2,
            "converged": self.converged,
            "num_classes": self.num_classes,
            "split_sizes": self.split_sizes,
            "valid_accuracy": self.valid_accuracy,
        }


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def fit_logistic(
    x: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    l2: float,
    max_iterations: int = 300,
    tolerance: float = 1e-5,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Multinomial logistic regression by full-batch gradient descent.

    Minimizes mean cross-entropy + l2 * sum(W^2) with a backtracking
    (Armijo) line search; the bias is not penalized. Returns (W, b,
    converged) where converged means the gradient norm fell below the
    tolerance within the iteration budget.
    """
    n, d = x.shape
    w = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0

    def loss_of(w_, b_):
        logits = x @ w_ + b_
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        ce = float(np.mean(logz - shifted[np.arange(n), y]))
        return ce + l2 * float((w_ * w_).sum())

    def grad_of(w_, b_):
        probs = _softmax_rows(x @ w_ + b_)
        r = (probs - onehot) / n
        return x.T @ r + 2.0 * l2 * w_, r.sum(axis=0)

    loss = loss_of(w, b)
    step = 1.0
    converged = False
    for _ in range(max_iterations):
        gw, gb = grad_of(w, b)
        gnorm2 = float((gw * gw).sum() + (gb * gb).sum())
        if np.sqrt(gnorm2) < tolerance:
            converged = True
            break
        while step > 1e-14:
            w_new = w - step * gw
            b_new = b - step * gb
            loss_new = loss_of(w_new, b_new)
            if loss_new <= loss - 0.5 * step * gnorm2:
                break
            step *= 0.5
        w, b, loss = w_new, b_new, loss_new
        step = min(step * 2.0, 1e6)
    return w, b, converged


def _features(split, encodings) -> tuple[np.ndarray, np.ndarray]:
    try:
        x = np.stack([np.asarray(encodings[s.id], dtype=np.float64) for s, _ in split])
    except KeyError as e:
        raise ValueError(f"missing encoding for sentence id {e.args[0]!r}")
    y = np.array([label for _, label in split], dtype=np.int64)
    return x, y


def train_probe(
    dataset: ProbeDataset, encodings: dict[str, np.ndarray], cfg: ProbeConfig | None = None
) -> ProbeResult:
    """Fit one probe per grid penalty, pick by validation accuracy, and
    report the chosen probe's test accuracy. Encoder parameters are not
    part of this computation at all, only the cached encodings."""
    cfg = cfg or ProbeConfig()
    x_train, y_train = _features(dataset.train, encodings)
    x_valid, y_valid = _features(dataset.valid, encodings)
    x_test, y_test = _features(dataset.test, encodings)
    best = None
    for l2 in sorted(cfg.l2_grid):
        w, b, converged = fit_logistic(
            x_train, y_train, dataset.num_classes, l2, cfg.max_iterations, cfg.tolerance
        )
        val_acc = float((np.argmax(x_valid @ w + b, axis=1) == y_valid).mean())
        if best is None or val_acc > best[0]:
            best = (val_acc, l2, w, b, converged)
    val_acc, l2, w, b, converged = best
    test_acc = float((np.argmax(x_test @ w + b, axis=1) == y_test).mean())
    return ProbeResult(
        name=dataset.name,
        test_accuracy=test_acc,
        chosen_l2=l2,
        converged=converged,
        num_classes=dataset.num_classes,
        split_sizes=dataset.split_sizes,
        valid_accuracy=val_acc,
    )


def run_probes(
    encoder,
    sentences: Sequence[Sentence],
    tasks: Sequence[str] = TASKS,
    seed: int = 0,
    cfg: ProbeConfig | None = None,
) -> dict[str, ProbeResult]:
    """Generate the requested probe datasets, encode every sentence they
    contain with the frozen encoder, and train the probes."""
    results = {}
    for task in tasks:
        if task == SENTLEN:
            dataset = gen_sentlen(sentences, seed=seed)
        elif task == WC:
            dataset = gen_wc(sentences, vocab=encoder.vocab, seed=seed)
        elif task == BSHIFT:
            dataset = gen_bshift(sentences, seed=seed)
        else:
            raise ValueError(f"unknown probing task {task!r}")
        needed = dataset.sentences()
        vectors = encoder.encode_batch(needed).astype(np.float64)
        encodings = {s.id: vectors[i] for i, s in enumerate(needed)}
        results[task] = train_probe(dataset, encodings, cfg)
    return results
