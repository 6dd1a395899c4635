"""Binary container for trained classifier parameters.

Layout (all little-endian)::

    magic      8 bytes  b"FLSGMDL\\x00"
    version    uint16
    family     uint8    (1 = cnn, 2 = gmm)
    task       uint8    (1 = vocal, 2 = guitar, 3 = palmas)
    n_arrays   uint16
    table      per array: uint8 name length, name (ascii), uint8 ndim, ndim x uint32 dims
    blob       float32 values of every array, in table order, C order
    crc32      uint32 over everything above
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"FLSGMDL\x00"
VERSION = 1
FAMILIES = {"cnn": 1, "gmm": 2}
TASKS = {"vocal": 1, "guitar": 2, "palmas": 3}


class ModelFileError(ValueError):
    """Corrupt, foreign or incompatible model file."""


def save_arrays(path, family: str, task: str, arrays: dict) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    head = bytearray(MAGIC)
    head += struct.pack("<HBBH", VERSION, FAMILIES[family], TASKS[task], len(arrays))
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        raw = name.encode("ascii")
        head += struct.pack("<B", len(raw)) + raw + struct.pack("<B", arr.ndim)
        head += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    payload = bytes(head) + b"".join(blobs)
    Path(path).write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))


def load_arrays(path, family: str | None = None):
    """Return ``(family, task, arrays)``; arrays come back as float32."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 10 or data[:len(MAGIC)] != MAGIC:
        raise ModelFileError(f"{path}: not a model file (bad magic bytes)")
    payload, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(payload) != crc:
        raise ModelFileError(f"{path}: checksum mismatch, file is corrupt")
    pos = len(MAGIC)
    version, fam_code, task_code, n_arrays = struct.unpack_from("<HBBH", payload, pos)
    pos += 6
    if version != VERSION:
        raise ModelFileError(f"{path}: unsupported model version {version} (expected {VERSION})")
    fam = {v: k for k, v in FAMILIES.items()}.get(fam_code)
    task = {v: k for k, v in TASKS.items()}.get(task_code)
    if fam is None or task is None:
        raise ModelFileError(f"{path}: unknown family/task code")
    if family is not None and fam != family:
        raise ModelFileError(f"{path}: expected a {family} model, found {fam}")
    shapes = []
    try:
        for _ in range(n_arrays):
            (n,) = struct.unpack_from("<B", payload, pos)
            name = payload[pos + 1:pos + 1 + n].decode("ascii")
            pos += 1 + n
            (ndim,) = struct.unpack_from("<B", payload, pos)
            dims = struct.unpack_from(f"<{ndim}I", payload, pos + 1)
            pos += 1 + 4 * ndim
            shapes.append((name, dims))
        arrays = {}
        for name, dims in shapes:
            count = int(np.prod(dims, dtype=np.int64))
            arr = np.frombuffer(payload, dtype="<f4", count=count, offset=pos)
            arrays[name] = arr.reshape(dims).astype(np.float32)
            pos += 4 * count
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"{path}: truncated layer table or weights") from exc
    if pos != len(payload):
        raise ModelFileError(f"{path}: trailing bytes after weight blob")
    return fam, task, arrays
