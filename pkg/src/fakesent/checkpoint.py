"""Binary model checkpoints with a bit-exact round trip.

Layout (all integers little-endian):

    magic           8 bytes  b"FSENTCK1"
    header length   uint32
    header          UTF-8 JSON: format_version, d, H, V, precision,
                    mlp hidden widths
    vocab count     uint32   followed by count entries of
                             uint16 byte-length + UTF-8 token, in index order
    param count     uint32   followed by count blocks of
                             uint16 name length + name,
                             uint8 ndim, uint32 dims...,
                             2-byte dtype code (f4/f8),
                             raw row-major little-endian values
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

from . import numcore as nc
from .corpus import PAD, UNK, Vocabulary
from .errors import CheckpointFormatError

MAGIC = b"FSENTCK1"
FORMAT_VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}
_PRECISIONS = {"float32": "f4", "float64": "f8"}


def _write_str(f: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise CheckpointFormatError(f"string too long ({len(raw)} bytes)")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)


def _read_exact(f: BinaryIO, n: int) -> bytes:
    raw = f.read(n)
    if len(raw) != n:
        raise CheckpointFormatError("truncated checkpoint")
    return raw


def _read_str(f: BinaryIO) -> str:
    (n,) = struct.unpack("<H", _read_exact(f, 2))
    return _read_exact(f, n).decode("utf-8")


def _write_param(f: BinaryIO, p: nc.Parameter) -> None:
    _write_str(f, p.name)
    arr = p.value
    code = {np.dtype(np.float32): "f4", np.dtype(np.float64): "f8"}.get(arr.dtype)
    if code is None:
        raise CheckpointFormatError(f"unsupported dtype {arr.dtype} for {p.name}")
    f.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        f.write(struct.pack("<I", dim))
    f.write(code.encode("ascii"))
    f.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def _read_param(f: BinaryIO) -> nc.Parameter:
    name = _read_str(f)
    (ndim,) = struct.unpack("<B", _read_exact(f, 1))
    shape = tuple(struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(ndim))
    code = _read_exact(f, 2).decode("ascii")
    if code not in _DTYPES:
        raise CheckpointFormatError(f"unknown dtype code {code!r}")
    dtype = _DTYPES[code]
    count = int(np.prod(shape)) if shape else 1
    raw = _read_exact(f, count * dtype.itemsize)
    value = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return nc.Parameter(name, value)


def save_model(path, model) -> None:
    """Serialize a DetectorModel (encoder + classifier head + vocabulary)."""
    enc = model.encoder
    header = {
        "format_version": FORMAT_VERSION,
        "d": int(enc.dim),
        "H": int(enc.hidden),
        "V": len(enc.vocab),
        "precision": {np.dtype(np.float32): "float32", np.dtype(np.float64): "float64"}[
            np.dtype(enc.dtype)
        ],
        "mlp": [int(w) for w in model.head.hidden_widths],
    }
    header_raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_raw)))
        f.write(header_raw)
        tokens = enc.vocab.tokens
        f.write(struct.pack("<I", len(tokens)))
        for tok in tokens:
            _write_str(f, tok)
        params = model.all_parameters()
        f.write(struct.pack("<I", len(params)))
        for p in params:
            _write_param(f, p)


def load_model(path):
    """Rebuild the DetectorModel; arrays come back bit-identical."""
    from .classifier import DetectorModel, MlpHead
    from .encoder import GATES, LstmDirection, SentenceEncoder

    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC)) != MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic")
        (hlen,) = struct.unpack("<I", _read_exact(f, 4))
        try:
            header = json.loads(_read_exact(f, hlen).decode("utf-8"))
        except json.JSONDecodeError as e:
            raise CheckpointFormatError(f"{path}: bad header: {e}")
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointFormatError(f"{path}: unsupported version {header.get('format_version')}")
        (vcount,) = struct.unpack("<I", _read_exact(f, 4))
        tokens = [_read_str(f) for _ in range(vcount)]
        if len(tokens) < 2 or tokens[0] != PAD or tokens[1] != UNK:
            raise CheckpointFormatError(f"{path}: reserved vocabulary rows missing")
        vocab = Vocabulary(tokens[2:])
        (pcount,) = struct.unpack("<I", _read_exact(f, 4))
        params = {p.name: p for p in (_read_param(f) for _ in range(pcount))}

    d, hidden, v = header["d"], header["H"], header["V"]
    if len(vocab) != v:
        raise CheckpointFormatError(f"{path}: vocab size {len(vocab)} != header V {v}")

    def take(name, shape):
        p = params.pop(name, None)
        if p is None:
            raise CheckpointFormatError(f"{path}: missing parameter {name}")
        if p.value.shape != shape:
            raise CheckpointFormatError(f"{path}: {name} has shape {p.value.shape}, want {shape}")
        return p

    embedding = take("embedding", (v, d))
    directions = {}
    for prefix in ("fwd", "bwd"):
        directions[prefix] = LstmDirection(
            take(f"{prefix}.w", (GATES * hidden, d)),
            take(f"{prefix}.u", (GATES * hidden, hidden)),
            take(f"{prefix}.b", (GATES * hidden,)),
            hidden,
        )
    encoder = SentenceEncoder(vocab, embedding, directions["fwd"], directions["bwd"])

    h1, h2 = header["mlp"]
    head = MlpHead(
        take("head.w1", (2 * hidden, h1)),
        take("head.b1", (h1,)),
        take("head.w2", (h1, h2)),
        take("head.b2", (h2,)),
        take("head.w3", (h2, 2)),
        take("head.b3", (2,)),
    )
    if params:
        raise CheckpointFormatError(f"{path}: unexpected parameters {sorted(params)}")
    return DetectorModel(encoder, head)
