"""Binary checkpoint format for parameter sets.

Layout (all integers little-endian):
  magic: 4 bytes ("DRNW" for codec models, "DRNE" for rate estimators)
  version: 1 byte
  count: uint32
  per parameter, in a fixed order:
    id_len: uint16, id: utf-8 bytes
    ndim: uint8, dims: uint32 each
    data: float64 little-endian, C order

Identical training runs produce byte-identical files.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import BitstreamError
from .tensor import Parameter

MODEL_MAGIC = b"DRNW"
ESTIMATOR_MAGIC = b"DRNE"
VERSION = 1


def save_params(path: str, params: list[Parameter], magic: bytes = MODEL_MAGIC) -> None:
    chunks = [magic, bytes([VERSION]), struct.pack("<I", len(params))]
    for p in params:
        ident = p.name.encode("utf-8")
        chunks.append(struct.pack("<H", len(ident)))
        chunks.append(ident)
        chunks.append(bytes([p.value.ndim]))
        for d in p.value.shape:
            chunks.append(struct.pack("<I", d))
        chunks.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_raw(path: str, magic: bytes = MODEL_MAGIC) -> dict[str, np.ndarray]:
    """Read a checkpoint into an id -> array mapping."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 9:
        raise BitstreamError(f"checkpoint {path}: truncated header")
    if buf[:4] != magic:
        raise BitstreamError(f"checkpoint {path}: bad magic {buf[:4]!r}, expected {magic!r}")
    if buf[4] != VERSION:
        raise BitstreamError(f"checkpoint {path}: unsupported version {buf[4]}")
    (count,) = struct.unpack_from("<I", buf, 5)
    pos = 9
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        ident = buf[pos:pos + id_len].decode("utf-8")
        pos += id_len
        ndim = buf[pos]
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(dims)
        pos += 8 * n
        out[ident] = data.astype(np.float64)
    if pos != len(buf):
        raise BitstreamError(f"checkpoint {path}: {len(buf) - pos} trailing bytes")
    return out


def load_into(path: str, params: list[Parameter], magic: bytes = MODEL_MAGIC) -> None:
    """Load a checkpoint into an existing parameter set, strict on names/shapes."""
    raw = load_raw(path, magic)
    seen = set()
    for p in params:
        if p.name not in raw:
            raise BitstreamError(f"checkpoint {path}: missing parameter {p.name!r}")
        val = raw[p.name]
        if val.shape != p.value.shape:
            raise BitstreamError(
                f"checkpoint {path}: parameter {p.name!r} has shape {val.shape}, expected {p.value.shape}"
            )
        p.value[...] = val
        seen.add(p.name)
    extra = set(raw) - seen
    if extra:
        raise BitstreamError(f"checkpoint {path}: unknown parameters {sorted(extra)}")
