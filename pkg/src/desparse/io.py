"""File formats used by the command-line runner.

Matrices go to a small binary container::

    b"DSPM1" | u64 ndim | u64 dims[ndim] | float64 data (little-endian, row-major)

Tables are CSV (header row, LF line ends, UTF-8) and manifests are JSON
with sorted keys, so identical inputs give identical bytes. Every writer
goes through a temporary file and ``os.replace`` so that a file either
exists complete or not at all.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"DSPM1"


class FormatError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_matrix(a) -> bytes:
    a = np.asarray(a, dtype="<f8")
    head = MAGIC + struct.pack("<Q", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + np.ascontiguousarray(a).tobytes(order="C")


def decode_matrix(buf: bytes) -> np.ndarray:
    if buf[:5] != MAGIC:
        raise FormatError("not a DSPM1 container")
    if len(buf) < 13:
        raise FormatError("truncated header")
    (ndim,) = struct.unpack_from("<Q", buf, 5)
    off = 13 + 8 * ndim
    if len(buf) < off:
        raise FormatError("truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 13)
    count = math.prod(shape)
    if len(buf) != off + 8 * count:
        raise FormatError(f"payload has {len(buf) - off} bytes, expected {8 * count}")
    return np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)


def write_matrix(path, a) -> None:
    atomic_write_bytes(path, encode_matrix(a))


def read_matrix(path) -> np.ndarray:
    return decode_matrix(Path(path).read_bytes())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if math.isfinite(o) else repr(o)
    return o


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    atomic_write_bytes(path, text.encode("utf-8"))


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
