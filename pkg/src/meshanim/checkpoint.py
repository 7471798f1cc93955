"""Binary checkpoint container.

Layout (all integers little-endian): magic ``MDCK``, u32 version, u32 tensor
count; then per tensor a u32 name length, the UTF-8 name, a u8 dtype code
(1 = f32, 2 = f64), a u8 rank, rank u64 dims and the raw little-endian
payload. Parameters are stored under ``param/``, Adam moments under
``adam_m/`` and ``adam_v/``, bookkeeping scalars under ``meta/``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError
from .training import OptimizerState, ParameterSet

__all__ = ["save_checkpoint", "load_checkpoint", "save_tensors", "load_tensors"]

_MAGIC = b"MDCK"
_VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


def save_tensors(tensors: dict, path) -> None:
    path = Path(path)
    chunks = [_MAGIC, struct.pack("<II", _VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise DataError(f"unsupported dtype {arr.dtype} for tensor '{name}'")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ParseError("unexpected end of tensor table", self.path)
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out


def load_tensors(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such checkpoint: {path}")
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != _MAGIC:
        raise DataError(f"magic mismatch (not a checkpoint): {path}")
    version, count = struct.unpack("<II", r.take(8))
    if version != _VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", r.take(4))
        name = r.take(name_len).decode("utf-8")
        code, rank = struct.unpack("<BB", r.take(2))
        if code not in _DTYPES:
            raise ParseError(f"unknown dtype code {code} for '{name}'", path)
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank))
        dtype = _DTYPES[code]
        n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
        data = np.frombuffer(r.take(n_bytes), dtype=dtype).reshape(dims)
        tensors[name] = data.astype(dtype.newbyteorder("="), copy=True)
    return tensors


def save_checkpoint(
    params: ParameterSet, state: OptimizerState | None, path, meta: dict | None = None
) -> None:
    """Write parameters, optimizer moments and scalar metadata."""
    tensors: dict[str, np.ndarray] = {}
    for name, arr in params.items():
        tensors[f"param/{name}"] = arr
    if state is not None:
        for name, arr in state.m.items():
            tensors[f"adam_m/{name}"] = arr
        for name, arr in state.v.items():
            tensors[f"adam_v/{name}"] = arr
        tensors["meta/step"] = np.array([float(state.step)])
    for key, value in (meta or {}).items():
        tensors[f"meta/{key}"] = np.array([float(value)])
    save_tensors(tensors, path)


def load_checkpoint(path):
    """Read back ``(params, state, meta)``; state is None if absent."""
    tensors = load_tensors(path)
    params: ParameterSet = {}
    m: ParameterSet = {}
    v: ParameterSet = {}
    meta: dict[str, float] = {}
    for name, arr in tensors.items():
        kind, _, rest = name.partition("/")
        if kind == "param":
            params[rest] = arr
        elif kind == "adam_m":
            m[rest] = arr
        elif kind == "adam_v":
            v[rest] = arr
        elif kind == "meta":
            meta[rest] = float(arr.reshape(-1)[0])
        else:
            raise ParseError(f"unknown tensor group '{kind}'", path)
    state = None
    if m or v:
        if set(m) != set(params) or set(v) != set(params):
            raise DataError("optimizer moments do not cover the parameters")
        state = OptimizerState(m=m, v=v, step=int(meta.get("step", 0)))
    return params, state, meta
