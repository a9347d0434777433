"""Persistence: tensor files, flat key=value documents, trace CSV, hashes.

Tensor file layout (all little-endian)::

    b"LSCT"  u8 version  u8 ndim  u32 dims[ndim]  f32 payload  u32 crc32(payload)
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import struct
import zlib
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import FormatError

MAGIC = b"LSCT"
VERSION = 1


def encode_tensor(arr) -> bytes:
    arr = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    if arr.ndim > 255:
        raise FormatError("too many dimensions for a tensor file")
    payload = arr.tobytes(order="C")
    header = MAGIC + struct.pack("<BB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + payload + struct.pack("<I", zlib.crc32(payload))


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 6:
        raise FormatError("truncated header", offset=len(buf))
    if buf[:4] != MAGIC:
        raise FormatError("bad magic bytes, not a tensor file", offset=0)
    version, ndim = struct.unpack_from("<BB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    dims_end = 6 + 4 * ndim
    if len(buf) < dims_end:
        raise FormatError("truncated dimension list", offset=len(buf))
    dims = struct.unpack_from(f"<{ndim}I", buf, 6)
    n_bytes = 4 * int(np.prod(dims, dtype=np.int64))
    expected = dims_end + n_bytes + 4
    if len(buf) != expected:
        at = min(len(buf), dims_end + n_bytes)
        raise FormatError(
            f"payload length mismatch: dims {dims} need {expected} bytes, file has {len(buf)}",
            offset=at)
    payload = buf[dims_end:dims_end + n_bytes]
    (crc,) = struct.unpack_from("<I", buf, dims_end + n_bytes)
    if zlib.crc32(payload) != crc:
        raise FormatError("CRC32 mismatch, payload corrupted", offset=dims_end + n_bytes)
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def write_tensor(path, arr) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def git_blob_hash(data: bytes) -> str:
    """Content hash in the same form git uses for blobs."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_kv(items: Mapping[str, object], header: str = "") -> str:
    lines = [f"# {line}" for line in header.splitlines()]
    lines += [f"{k}={format_value(v)}" for k, v in items.items()]
    return "\n".join(lines) + "\n"


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment line."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def write_csv(path, columns: list[str], rows: Iterable[Iterable]) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if v is None else format_value(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
