"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic        8 bytes  b"STORYCKP"
    version      u32
    config       u32 length + UTF-8 JSON
    vocab        u32 length + UTF-8 JSON
    n_tensors    u32
    per tensor:  u16 name length, name, u8 ndim, u32 dims..., float32 data (row-major)
    checksum     32 bytes SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .config import RunConfig
from .data import Vocabulary

MAGIC = b"STORYCKP"
VERSION = 1
_DIGEST = 32


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    def __init__(self, found: int, expected: int = VERSION):
        super().__init__(f"checkpoint format version {found} is not supported (expected {expected})")
        self.found = found
        self.expected = expected


class ChecksumError(CheckpointError):
    pass


def _block(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def serialize(params: dict[str, Tensor], run_config: RunConfig, vocab: Vocabulary,
              version: int = VERSION) -> bytes:
    parts = [MAGIC, struct.pack("<I", version),
             _block(json.dumps(run_config.to_dict(), sort_keys=True).encode()),
             _block(json.dumps(vocab.to_dict()).encode()),
             struct.pack("<I", len(params))]
    for name, tensor in params.items():
        encoded = name.encode()
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(path: str | Path, params: dict[str, Tensor], run_config: RunConfig,
                    vocab: Vocabulary) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(serialize(params, run_config, vocab))
    tmp.replace(path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ChecksumError("checkpoint is truncated")
        out = self.buf[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def deserialize(buf: bytes):
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise BadMagicError("not a storyend checkpoint (bad magic bytes)")
    if len(buf) < len(MAGIC) + 4:
        raise ChecksumError("checkpoint is truncated")
    (version,) = struct.unpack_from("<I", buf, len(MAGIC))
    if version != VERSION:
        raise VersionMismatchError(version)
    body, digest = buf[:-_DIGEST], buf[-_DIGEST:]
    if len(buf) < len(MAGIC) + 4 + _DIGEST or hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch (file corrupted or truncated)")

    r = _Reader(body)
    r.take(len(MAGIC) + 4)
    (n,) = r.unpack("<I")
    config = RunConfig.from_dict(json.loads(r.take(n)))
    (n,) = r.unpack("<I")
    vocab = Vocabulary.from_dict(json.loads(r.take(n)))
    (count,) = r.unpack("<I")
    params = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params, config, vocab


def load_checkpoint(path: str | Path):
    """Returns ``(params, run_config, vocab)``; raises a CheckpointError subclass on bad input."""
    return deserialize(Path(path).read_bytes())
