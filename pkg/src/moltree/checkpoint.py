"""Self-describing binary checkpoint container.

Byte layout (all integers little-endian, unsigned):

    offset  size  field
    0       8     magic ``b"MTCK0001"``
    8       4     config length C
    12      C     config as canonical JSON (sorted keys, UTF-8)
    .       4     vocabulary length V
    .       V     vocabulary labels, one per line, trailing newline
    .       4     training-set length T
    .       T     training canonical strings, one per line (may be empty)
    .       64    SHA-256 hex digest of the config block
    .       64    SHA-256 hex digest of the vocabulary block
    .       4     parameter record count N
    then N records, each:
            2     name length L
            L     parameter name, UTF-8
            1     rank R
            4*R   extents
            8*k   float64 values, row-major, little-endian

Saving the result of a load reproduces the input byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

MAGIC = b"MTCK0001"

__all__ = ["MAGIC", "save_checkpoint", "load_checkpoint", "CheckpointError"]


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


def save_checkpoint(
    path,
    params: dict[str, np.ndarray],
    config: dict,
    vocab_labels: list[str],
    train_canonical: list[str],
) -> None:
    config_blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    vocab_blob = ("".join(s + "\n" for s in vocab_labels)).encode()
    canon_blob = ("".join(s + "\n" for s in train_canonical)).encode()
    out = bytearray()
    out += MAGIC
    for blob in (config_blob, vocab_blob, canon_blob):
        out += struct.pack("<I", len(blob))
        out += blob
    out += hashlib.sha256(config_blob).hexdigest().encode()
    out += hashlib.sha256(vocab_blob).hexdigest().encode()
    names = sorted(params)
    out += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        nb = name.encode()
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            out += struct.pack("<I", d)
        out += arr.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(out)


def load_checkpoint(path):
    """Returns (params, config, vocab_labels, train_canonical, hashes)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:8]!r}")
    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at offset {pos}")
        out = buf[pos : pos + n]
        pos += n
        return out

    def take_u32() -> int:
        return struct.unpack("<I", take(4))[0]

    config_blob = take(take_u32())
    vocab_blob = take(take_u32())
    canon_blob = take(take_u32())
    config_hash = take(64).decode()
    vocab_hash = take(64).decode()
    if hashlib.sha256(config_blob).hexdigest() != config_hash:
        raise CheckpointError(f"{path}: config hash mismatch")
    if hashlib.sha256(vocab_blob).hexdigest() != vocab_hash:
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    n_params = take_u32()
    params: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        (rank,) = struct.unpack("<B", take(1))
        shape = tuple(take_u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").reshape(shape)
        params[name] = data.copy()
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    config = json.loads(config_blob.decode())
    vocab_labels = vocab_blob.decode().splitlines()
    train_canonical = canon_blob.decode().splitlines()
    return params, config, vocab_labels, train_canonical, (config_hash, vocab_hash)
