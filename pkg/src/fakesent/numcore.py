"""Minimal dense-tensor core: tape-based reverse-mode differentiation and SGD.

Everything the encoder and classifier compute is assembled from the ops in
this module. Each op computes its forward value eagerly on numpy arrays and,
when a Tape is supplied, records a closure implementing its backward rule.
``backward`` replays the tape in reverse and accumulates gradients into the
Parameters that were registered as leaves.

Determinism notes, load-bearing for the batch/unbatched bit-identity
guarantee of the encoder:

* Forward matrix products go through ``np.einsum(..., optimize=False)``,
  whose per-row summation order does not depend on the number of rows.
  BLAS (``@``) does not give that guarantee, so it is only used in backward
  rules, where bit-stability across batch sizes is not required.
* All other forward ops are elementwise or pure indexing, which numpy
  evaluates value-deterministically.

Every forward output is checked for NaN/Inf and raises NonFiniteValue.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteValue, ShapeMismatch

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "backward",
    "sgd_step",
    "grad_check",
    "constant",
    "matmul",
    "add",
    "mul",
    "concat",
    "narrow",
    "pick",
    "sigmoid",
    "tanh",
    "softmax_cross_entropy",
    "softmax",
    "max_over_axis",
    "max_over_time",
    "rows",
    "stack",
    "reshape",
    "reverse_within",
]


class Tensor:
    """A node in the computation graph: an ndarray plus a gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter:
    """A named trainable array with a persistent gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of executed ops for the reverse sweep.

    Construction order is the topological order: every op's inputs are
    created before the op runs, so sweeping the records in reverse visits
    each tensor's consumers before the tensor itself.
    """

    __slots__ = ("_records", "_leaves")

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []
        self._leaves: list[tuple[Tensor, Parameter]] = []

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], fn: BackwardFn) -> None:
        self._records.append((out, inputs, fn))

    def leaf(self, param: Parameter) -> Tensor:
        """Enter ``param`` into the graph; its gradient is collected by backward()."""
        t = Tensor(param.value)
        self._leaves.append((t, param))
        return t

    def __len__(self) -> int:
        return len(self._records)


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteValue(f"non-finite value in output of {op}")
    return arr


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(tape: Tape, loss: Tensor) -> None:
    """Reverse sweep: accumulate d(loss)/d(param) into each registered Parameter.

    Intermediate gradients are freed as soon as their record has been
    processed; only Parameter.grad survives the sweep.
    """
    if loss.data.size != 1:
        raise ShapeMismatch(f"loss must be scalar, got shape {loss.data.shape}")
    if len(tape) == 0:
        raise ShapeMismatch("backward on an empty tape")
    loss.grad = np.ones_like(loss.data)
    for out, inputs, fn in reversed(tape._records):
        if out.grad is None:
            continue
        grads = fn(out.grad)
        for t, g in zip(inputs, grads):
            if g is None:
                continue
            _accumulate(t, g)
        out.grad = None
    for leaf, param in tape._leaves:
        if leaf.grad is not None:
            if not np.isfinite(leaf.grad).all():
                raise NonFiniteValue(f"non-finite gradient for {param.name}")
            param.grad += leaf.grad
            leaf.grad = None


def sgd_step(params: Sequence[Parameter], learning_rate: float) -> None:
    """value <- value - lr * grad for every parameter, then zero the grads."""
    for p in params:
        if not np.isfinite(p.grad).all():
            raise NonFiniteValue(f"non-finite gradient for {p.name}")
        p.value -= learning_rate * p.grad
        p.zero_grad()


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def constant(data) -> Tensor:
    """A graph input with no gradient path."""
    return Tensor(np.asarray(data))


def _mm(a: np.ndarray, b: np.ndarray, transpose_b: bool) -> np.ndarray:
    # einsum with optimize=False: per-row summation order is independent of
    # the number of rows, unlike BLAS.
    if transpose_b:
        return np.einsum("ij,kj->ik", a, b, optimize=False)
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def matmul(tape: Tape | None, a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    """2-D matrix product a @ b (or a @ b.T when transpose_b)."""
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {ad.shape} and {bd.shape}")
    inner = bd.shape[1] if transpose_b else bd.shape[0]
    if ad.shape[1] != inner:
        raise ShapeMismatch(f"matmul inner dims differ: {ad.shape} vs {bd.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = Tensor(_check_finite(_mm(ad, bd, transpose_b), "matmul"))
    if tape is not None:
        if transpose_b:
            # out = a b^T : da = g b ; db = g^T a
            tape.record(out, (a, b), lambda g: (g @ bd, g.T @ ad))
        else:
            tape.record(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))
    return out


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may also be a vector broadcast over leading axes."""
    ad, bd = a.data, b.data
    if ad.shape == bd.shape:
        with np.errstate(over="ignore"):
            out = Tensor(_check_finite(ad + bd, "add"))
        if tape is not None:
            tape.record(out, (a, b), lambda g: (g, g))
        return out
    if bd.ndim == 1 and ad.ndim >= 1 and ad.shape[-1] == bd.shape[0]:
        with np.errstate(over="ignore"):
            out = Tensor(_check_finite(ad + bd, "add"))
        if tape is not None:
            lead = tuple(range(ad.ndim - 1))
            tape.record(out, (a, b), lambda g: (g, g.sum(axis=lead)))
        return out
    raise ShapeMismatch(f"add shapes {ad.shape} and {bd.shape}")


def mul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of same-shape tensors."""
    ad, bd = a.data, b.data
    if ad.shape != bd.shape:
        raise ShapeMismatch(f"mul shapes {ad.shape} and {bd.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = Tensor(_check_finite(ad * bd, "mul"))
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g * bd, g * ad))
    return out


def concat(tape: Tape | None, parts: Sequence[Tensor], axis: int) -> Tensor:
    out = Tensor(_check_finite(np.concatenate([p.data for p in parts], axis=axis), "concat"))
    if tape is not None:
        sizes = [p.data.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def back(g, axis=axis, splits=splits):
            return tuple(np.split(g, splits, axis=axis))

        tape.record(out, tuple(parts), back)
    return out


def narrow(tape: Tape | None, x: Tensor, axis: int, start: int, size: int) -> Tensor:
    """Contiguous slice of ``size`` entries along ``axis`` starting at ``start``."""
    if start < 0 or start + size > x.data.shape[axis]:
        raise ShapeMismatch(f"narrow [{start}:{start + size}] out of range for {x.data.shape}")
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + size)
    idx = tuple(idx)
    out = Tensor(x.data[idx])
    if tape is not None:

        def back(g):
            gx = np.zeros_like(x.data)
            gx[idx] = g
            return (gx,)

        tape.record(out, (x,), back)
    return out


def pick(tape: Tape | None, x: Tensor, axis: int, index: int) -> Tensor:
    """Select one entry along ``axis``, dropping that axis."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = index
    idx = tuple(idx)
    out = Tensor(x.data[idx])
    if tape is not None:

        def back(g):
            gx = np.zeros_like(x.data)
            gx[idx] = g
            return (gx,)

        tape.record(out, (x,), back)
    return out


def sigmoid(tape: Tape | None, x: Tensor) -> Tensor:
    xd = x.data
    # overflow-free split form; elementwise, so value-deterministic
    z = np.exp(-np.abs(xd))
    out_d = np.where(xd >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    out = Tensor(_check_finite(out_d, "sigmoid"))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * (out_d * (1.0 - out_d)),))
    return out


def tanh(tape: Tape | None, x: Tensor) -> Tensor:
    out_d = np.tanh(x.data)
    out = Tensor(_check_finite(out_d, "tanh"))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * (1.0 - out_d * out_d),))
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-stable softmax probabilities (inference helper, no tape)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(
    tape: Tape | None, logits: Tensor, labels: np.ndarray
) -> tuple[Tensor, np.ndarray]:
    """Fused stable softmax + mean cross-entropy over the batch.

    Returns the scalar loss tensor and the (batch, classes) probability
    matrix. The fusion avoids the overflow of a separate log/softmax pair:
    log-probabilities are computed from max-shifted logits.
    """
    ld = logits.data
    if ld.ndim != 2:
        raise ShapeMismatch(f"logits must be 2-D, got {ld.shape}")
    n, c = ld.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeMismatch(f"labels must lie in [0, {c})")
    shifted = ld - ld.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    logp = shifted - np.log(z)
    loss_val = -logp[np.arange(n), labels].mean()
    out = Tensor(_check_finite(np.asarray(loss_val, dtype=ld.dtype), "softmax_cross_entropy"))
    if tape is not None:
        onehot = np.zeros_like(ld)
        onehot[np.arange(n), labels] = 1.0

        def back(g):
            return ((probs - onehot) * (g / n),)

        tape.record(out, (logits,), back)
    return out, probs


def max_over_axis(tape: Tape | None, x: Tensor, axis: int) -> tuple[Tensor, np.ndarray]:
    """Maximum along ``axis``; also returns the argmax used by the backward rule.

    Gradient is routed only to the argmax positions; ties go to the first
    maximal index (np.argmax convention), which keeps the backward pass
    deterministic.
    """
    am = np.argmax(x.data, axis=axis)
    out_d = np.take_along_axis(x.data, np.expand_dims(am, axis), axis=axis).squeeze(axis)
    out = Tensor(_check_finite(out_d, "max_over_axis"))
    if tape is not None:

        def back(g):
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, np.expand_dims(am, axis), np.expand_dims(g, axis), axis=axis)
            return (gx,)

        tape.record(out, (x,), back)
    return out, am


def max_over_time(tape: Tape | None, x: Tensor, lengths: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Per-row masked max over axis 1 of a (batch, time, features) tensor.

    Positions at or beyond each row's length are excluded, so padding can
    never leak into the pooled output. Returns (pooled, argmax).
    """
    b, t, k = x.data.shape
    mask = np.arange(t)[None, :] >= np.asarray(lengths)[:, None]  # True where padded
    masked = x.data.copy()
    masked[mask] = -np.inf
    am = np.argmax(masked, axis=1)  # (b, k)
    out_d = np.take_along_axis(x.data, am[:, None, :], axis=1)[:, 0, :]
    out = Tensor(_check_finite(out_d, "max_over_time"))
    if tape is not None:

        def back(g):
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, am[:, None, :], g[:, None, :], axis=1)
            return (gx,)

        tape.record(out, (x,), back)
    return out, am


def rows(tape: Tape | None, table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table by integer index array (embedding lookup)."""
    if table.data.ndim != 2:
        raise ShapeMismatch(f"rows needs a 2-D table, got {table.data.shape}")
    indices = np.asarray(indices)
    out = Tensor(table.data[indices])
    if tape is not None:

        def back(g):
            gt = np.zeros_like(table.data)
            np.add.at(gt, indices, g)
            return (gt,)

        tape.record(out, (table,), back)
    return out


def stack(tape: Tape | None, parts: Sequence[Tensor], axis: int) -> Tensor:
    """Stack same-shape tensors along a new axis."""
    out = Tensor(np.stack([p.data for p in parts], axis=axis))
    if tape is not None:
        n = len(parts)

        def back(g):
            return tuple(np.take(g, i, axis=axis) for i in range(n))

        tape.record(out, tuple(parts), back)
    return out


def reshape(tape: Tape | None, x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    if tape is not None:
        orig = x.data.shape
        tape.record(out, (x,), lambda g: (g.reshape(orig),))
    return out


def reverse_within(tape: Tape | None, x: Tensor, lengths: np.ndarray) -> Tensor:
    """Reverse each row's first ``lengths[b]`` steps along axis 1; tail unchanged.

    The per-row index map is an involution (reversing a prefix twice is the
    identity), so the backward rule is the same gather applied to the
    incoming gradient.
    """
    b, t = x.data.shape[0], x.data.shape[1]
    lengths = np.asarray(lengths)
    ar = np.arange(t)[None, :]
    idx = np.where(ar < lengths[:, None], lengths[:, None] - 1 - ar, ar)
    rows_ix = np.arange(b)[:, None]
    out = Tensor(x.data[rows_ix, idx])
    if tape is not None:
        tape.record(out, (x,), lambda g: (g[rows_ix, idx],))
    return out


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(
    model_loss: Callable[[Tape | None], Tensor],
    params: Sequence[Parameter],
    eps: float = 1e-5,
    samples: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients to central finite differences.

    ``model_loss(tape)`` must rebuild the forward computation from the
    parameters' current values; it is called once with a fresh tape for the
    analytic gradients and twice per sampled coordinate with ``tape=None``
    for the numeric estimate (L(th+eps) - L(th-eps)) / 2 eps.

    Relative error per coordinate is |a - f| / max(1e-8, |a| + |f|); the
    worst over all sampled coordinates is returned. Parameters must be
    float64: central differences need the headroom.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ValueError(f"eps {eps} outside [1e-6, 1e-4]")
    for p in params:
        if p.value.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 parameters, {p.name} is {p.value.dtype}")
    if rng is None:
        rng = np.random.default_rng(0)

    for p in params:
        p.zero_grad()
    tape = Tape()
    loss = model_loss(tape)
    backward(tape, loss)
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    sizes = np.array([p.value.size for p in params])
    total = int(sizes.sum())
    n = min(samples, total)
    flat_choice = rng.choice(total, size=n, replace=False)
    bounds = np.cumsum(sizes)

    worst = 0.0
    for flat in flat_choice:
        pi = int(np.searchsorted(bounds, flat, side="right"))
        local = int(flat - (bounds[pi - 1] if pi > 0 else 0))
        p = params[pi]
        orig = p.value.flat[local]
        p.value.flat[local] = orig + eps
        lp = model_loss(None).data.item()
        p.value.flat[local] = orig - eps
        lm = model_loss(None).data.item()
        p.value.flat[local] = orig
        numeric = (lp - lm) / (2.0 * eps)
        a = float(analytic[pi].flat[local])
        rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, rel)
    return worst
