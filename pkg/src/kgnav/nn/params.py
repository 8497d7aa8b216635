"""Named parameter tensors, shared-memory backing, and checkpoint files.

Checkpoint layout (all integers little-endian)::

    8 bytes   magic b"KGNAVCKP"
    uint32    format version (1)
    uint64    global frame count
    uint32    metadata length M, then M bytes of UTF-8 JSON (sorted keys)
    uint32    record count
    per record:
        uint16  name length, name bytes (UTF-8)
        uint8   ndim, then ndim x uint32 dims
        float32 values, C order, little-endian

Record names are prefixed ``param/``, ``opt/`` or ``kg/``.
"""

from __future__ import annotations

import contextlib
import ctypes
import io
import json
import multiprocessing as mp
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"KGNAVCKP"
FORMAT_VERSION = 1


class ParameterSet:
    """Ordered name -> ndarray map with fixed shapes.

    When built by :meth:`share`, arrays live in shared memory and each tensor
    has its own lock; :meth:`lock` returns it (or a null context).
    """

    def __init__(self, tensors=None, locks=None):
        self._t: OrderedDict = OrderedDict()
        self._locks = locks or {}
        for name, arr in (tensors or {}).items():
            self.add(name, arr)

    def add(self, name: str, arr: np.ndarray) -> None:
        if name in self._t:
            raise KeyError(f"duplicate parameter {name!r}")
        self._t[name] = arr

    def __getitem__(self, name):
        return self._t[name]

    def __contains__(self, name):
        return name in self._t

    def __iter__(self):
        return iter(self._t)

    def __len__(self):
        return len(self._t)

    def items(self):
        return self._t.items()

    def names(self):
        return list(self._t)

    def shapes(self) -> dict:
        return {k: v.shape for k, v in self._t.items()}

    @property
    def dtype(self):
        return next(iter(self._t.values())).dtype

    def lock(self, name):
        return self._locks.get(name) or contextlib.nullcontext()

    def snapshot(self, dtype=None) -> "ParameterSet":
        """Independent copy; each tensor is read under its own lock."""
        out = ParameterSet()
        for k, v in self._t.items():
            with self.lock(k):
                out.add(k, np.array(v, dtype=dtype or v.dtype))
        return out

    def copy_from(self, other: "ParameterSet") -> None:
        for k, v in self._t.items():
            with self.lock(k):
                v[...] = other[k]

    def zeros_like(self, dtype=None) -> dict:
        return {k: np.zeros_like(v, dtype=dtype or v.dtype) for k, v in self._t.items()}

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet({k: v.astype(dtype) for k, v in self._t.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self._t.values()])

    def share(self) -> "ParameterSet":
        """Copy into process-shared memory (inherit via fork)."""
        tensors, locks = {}, {}
        for k, v in self._t.items():
            ctype = ctypes.c_float if v.dtype == np.float32 else ctypes.c_double
            raw = mp.RawArray(ctype, int(v.size))
            arr = np.frombuffer(raw, dtype=v.dtype).reshape(v.shape)
            arr[...] = v
            tensors[k] = arr
            locks[k] = mp.Lock()
        return ParameterSet(tensors, locks)


def glorot_uniform(rng: np.random.Generator, shape, fan_in=None, fan_out=None):
    fan_out = shape[0] if fan_out is None else fan_out
    fan_in = shape[-1] if fan_in is None else fan_in
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------- checkpoints


def _write_record(buf, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    buf.write(struct.pack("<H", len(nb)))
    buf.write(nb)
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def checkpoint_bytes(frames: int, records: dict, meta: dict | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<IQI", FORMAT_VERSION, int(frames), len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(records)))
    for name, arr in records.items():
        _write_record(buf, name, np.asarray(arr))
    return buf.getvalue()


class CheckpointError(ValueError):
    pass


def parse_checkpoint(data: bytes) -> tuple[int, dict, "OrderedDict[str, np.ndarray]"]:
    """Returns (frames, metadata, records)."""
    if data[:8] != MAGIC:
        raise CheckpointError("not a kgnav checkpoint")
    pos = 8
    try:
        version, frames, mlen = struct.unpack_from("<IQI", data, pos)
        pos += 16
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        meta = json.loads(data[pos : pos + mlen].decode("utf-8"))
        pos += mlen
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        records = OrderedDict()
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + ln].decode("utf-8")
            pos += ln
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            if pos + 4 * count > len(data):
                raise CheckpointError(f"truncated checkpoint: record {name!r}")
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
            pos += 4 * count
            records[name] = arr.astype(np.float32)
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(data):
        raise CheckpointError("trailing bytes after last record")
    return frames, meta, records


def save_checkpoint(path, frames: int, records: dict, meta: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(frames, records, meta))


def load_checkpoint(path):
    return parse_checkpoint(Path(path).read_bytes())
