"""File helpers: directories, atomic writes, CSV/JSON and the tensor container."""
from __future__ import annotations

from pathlib import Path
import json
import logging
import os
import tempfile
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import NonFiniteError, TensorFormatError

logger = logging.getLogger(__name__)

TENSOR_MAGIC = b"CRSH"
TENSOR_VERSION = 1
DTYPE_FLOAT32 = 0
HEADER_SIZE = 8


def ensure_dir(path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_bytes_atomic(path: str | Path, payload: bytes) -> Path:
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    ensure_dir(path.parent)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_text(path: str | Path, content: str) -> Path:
    return write_bytes_atomic(path, content.encode("utf-8"))


def write_json(path: str | Path, payload) -> Path:
    return write_text(path, json.dumps(payload, indent=2, sort_keys=False) + "\n")


def read_json(path: str | Path):
    with Path(path).open("r", encoding="utf-8") as handle:
        return json.load(handle)


def write_csv(path: str | Path, df: pd.DataFrame) -> Path:
    return write_text(path, df.to_csv(index=False))


def read_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path)


def encode_tensor(array) -> bytes:
    """Serialize to the container: magic, version, dtype, ndim, reserved, dims, payload."""
    data = np.ascontiguousarray(np.asarray(array), dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("refusing to write non-finite values to a tensor file")
    if data.ndim > 255:
        raise TensorFormatError(f"too many dimensions: {data.ndim}")
    header = TENSOR_MAGIC + bytes([TENSOR_VERSION, DTYPE_FLOAT32, data.ndim, 0])
    dims = np.asarray(data.shape, dtype="<u4").tobytes()
    return header + dims + data.tobytes(order="C")


def decode_tensor(buffer: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one record starting at `offset`; returns (array, offset past the record)."""
    if len(buffer) - offset < HEADER_SIZE:
        raise TensorFormatError("truncated tensor header")
    head = buffer[offset : offset + HEADER_SIZE]
    if head[:4] != TENSOR_MAGIC:
        raise TensorFormatError(f"bad magic {head[:4]!r}")
    version, dtype, ndim, reserved = head[4], head[5], head[6], head[7]
    if version != TENSOR_VERSION:
        raise TensorFormatError(f"unsupported tensor version {version}")
    if dtype != DTYPE_FLOAT32:
        raise TensorFormatError(f"unsupported dtype code {dtype}")
    if reserved != 0:
        raise TensorFormatError("reserved header byte must be zero")
    pos = offset + HEADER_SIZE
    if len(buffer) - pos < 4 * ndim:
        raise TensorFormatError("truncated dimension table")
    shape = tuple(int(v) for v in np.frombuffer(buffer, dtype="<u4", count=ndim, offset=pos))
    pos += 4 * ndim
    count = int(np.prod(shape, dtype=np.int64))
    if len(buffer) - pos < 4 * count:
        raise TensorFormatError(f"payload shorter than {count} float32 values")
    data = np.frombuffer(buffer, dtype="<f4", count=count, offset=pos).reshape(shape).copy()
    return data, pos + 4 * count


def write_tensor(path: str | Path, array) -> Path:
    path = write_bytes_atomic(path, encode_tensor(array))
    logger.debug("wrote tensor %s shape=%s", path, np.shape(array))
    return path


def read_tensor(path: str | Path) -> np.ndarray:
    buffer = Path(path).read_bytes()
    data, end = decode_tensor(buffer)
    if end != len(buffer):
        raise TensorFormatError(f"{path}: {len(buffer) - end} trailing bytes after tensor payload")
    return data


def write_tensor_bundle(path: str | Path, tensors: Mapping[str, np.ndarray]) -> Path:
    """Concatenate one record per tensor; the order of `tensors` is the file order."""
    return write_bytes_atomic(path, b"".join(encode_tensor(v) for v in tensors.values()))


def read_tensor_bundle(path: str | Path, names: list[str]) -> dict[str, np.ndarray]:
    buffer = Path(path).read_bytes()
    out: dict[str, np.ndarray] = {}
    offset = 0
    for name in names:
        out[name], offset = decode_tensor(buffer, offset)
    if offset != len(buffer):
        raise TensorFormatError(f"{path}: bundle holds more records than the {len(names)} named")
    return out
