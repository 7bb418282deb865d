"""Binary model checkpoints.

Layout, all integers little-endian u32:

    magic "PTRN" | format version | task tag (length + UTF-8 bytes)
    | hidden size | records until EOF

Each record is one named parameter: name length, name bytes, shape rank,
the dims, then the values as little-endian float64 in row-major order.
Values pass through untouched, so save followed by load is bit-exact.
The architecture is not stored; it is recovered from the parameter names.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .models import Model, model_from_params
from .tensor import Parameter

__all__ = ["CheckpointError", "MAGIC", "FORMAT_VERSION", "save_model", "load_model"]

MAGIC = b"PTRN"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or truncated."""


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_model(path: str | os.PathLike, model: Model, task: str) -> None:
    """Write the model atomically: a temp file in the same directory is
    renamed over the target, so a crash never leaves a partial file."""
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_str(task),
              struct.pack("<I", model.hidden)]
    for name in sorted(model.params):
        value = model.params[name].value
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    blob = b"".join(chunks)
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.blob):
            raise CheckpointError(
                f"truncated checkpoint: wanted {k} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}")
        out = self.blob[self.pos:self.pos + k]
        self.pos += k
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.blob)


def load_model(path: str | os.PathLike) -> tuple[Model, str]:
    """Read a checkpoint, returning the rebuilt model and its task tag."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a model checkpoint")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    task = r.string()
    hidden = r.u32()
    params: dict[str, Parameter] = {}
    while not r.exhausted:
        name = r.string()
        rank = r.u32()
        if rank > 2:
            raise CheckpointError(f"parameter {name!r} has rank {rank} > 2")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims)
        if name in params:
            raise CheckpointError(f"duplicate parameter {name!r}")
        params[name] = Parameter(name, data.astype(np.float64))
    if not params:
        raise CheckpointError("checkpoint holds no parameters")
    try:
        model = model_from_params(hidden, params)
    except ValueError as e:
        raise CheckpointError(str(e)) from None
    return model, task
