"""Readers and writers for the two file formats the exporter bridges.

safetensors (read side): u64 little-endian header length, a JSON header
mapping tensor names to {dtype, shape, data_offsets}, then one contiguous
data buffer.  Offsets are relative to the start of the buffer.

.rtz (write side): little-endian container with magic "RTZ1", u16 version 1,
u32 tensor count, then per tensor a u16-length-prefixed UTF-8 name, a u8
dtype code (0 = float32, 1 = float16), u8 rank, u64 dims, and the raw
payload.  This module keeps its own implementation of the format so the
exporter stays a standalone tool; compatibility with other readers is
covered by the test suite.
"""

from __future__ import annotations

import json
import struct

import numpy as np


class FormatError(ValueError):
    """A checkpoint or container file is malformed."""


# safetensors dtype tag -> (numpy dtype for the raw bytes, element size)
_SAFETENSORS_DTYPES = {
    "F64": ("<f8", 8),
    "F32": ("<f4", 4),
    "F16": ("<f2", 2),
    "BF16": ("<u2", 2),
    "I64": ("<i8", 8),
    "I32": ("<i4", 4),
    "I16": ("<i2", 2),
    "I8": ("<i1", 1),
    "U8": ("<u1", 1),
    "BOOL": ("<u1", 1),
}


def _bf16_to_float32(raw: np.ndarray) -> np.ndarray:
    """Widen bfloat16 bit patterns to float32 exactly (high half copy)."""
    return (raw.astype(np.uint32) << 16).view(np.float32)


def read_safetensors(path) -> dict[str, dict]:
    """Parse one safetensors file.

    Returns an ordered mapping name -> {"dtype": tag, "shape": tuple,
    "array": float32 ndarray}; every payload is cast to 32-bit floats
    (an exact widening for F16 and BF16 sources).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise FormatError(f"{path}: too short for a safetensors header")
    (header_len,) = struct.unpack("<Q", blob[:8])
    if 8 + header_len > len(blob):
        raise FormatError(f"{path}: header length {header_len} exceeds the file")
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad header JSON ({exc})") from None
    buffer = blob[8 + header_len :]

    entries = [(k, v) for k, v in header.items() if k != "__metadata__"]
    entries.sort(key=lambda kv: kv[1]["data_offsets"][0])
    out: dict[str, dict] = {}
    for name, meta in entries:
        tag = meta["dtype"]
        if tag not in _SAFETENSORS_DTYPES:
            raise FormatError(f"{path}: tensor '{name}' has unsupported dtype {tag}")
        wire, width = _SAFETENSORS_DTYPES[tag]
        shape = tuple(int(s) for s in meta["shape"])
        begin, end = (int(x) for x in meta["data_offsets"])
        n_elem = 1
        for s in shape:
            n_elem *= s
        if not (0 <= begin <= end <= len(buffer)) or end - begin != n_elem * width:
            raise FormatError(
                f"{path}: tensor '{name}' offsets [{begin}, {end}) do not match "
                f"shape {shape} ({tag})"
            )
        raw = np.frombuffer(buffer, dtype=wire, count=n_elem, offset=begin)
        if tag == "BF16":
            data = _bf16_to_float32(raw)
        else:
            data = raw.astype(np.float32)
        out[name] = {"dtype": tag, "shape": shape, "array": data.reshape(shape)}
    return out


RTZ_MAGIC = b"RTZ1"
RTZ_VERSION = 1
_RTZ_FLOAT32 = 0


def write_rtz(path, tensors: dict[str, np.ndarray]) -> None:
    """Write float32 arrays into a .rtz container, in mapping order."""
    chunks = [RTZ_MAGIC, struct.pack("<HI", RTZ_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            raise FormatError(f"tensor '{name}': exporter only writes float32 payloads")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw_name)) + raw_name)
        chunks.append(struct.pack("<BB", _RTZ_FLOAT32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_rtz(path) -> dict[str, np.ndarray]:
    """Read a .rtz container (float32 and float16 entries)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(f"{path}: truncated while reading {what} (offset {pos})")
        out = blob[pos : pos + n]
        pos += n
        return out

    if take(4, "magic") != RTZ_MAGIC:
        raise FormatError(f"{path}: bad magic")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != RTZ_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        if name in out:
            raise FormatError(f"{path}: duplicate tensor name '{name}'")
        dtype_code, rank = struct.unpack("<BB", take(2, "dtype/rank"))
        if dtype_code == 0:
            wire, width = "<f4", 4
        elif dtype_code == 1:
            wire, width = "<f2", 2
        else:
            raise FormatError(f"{path}: tensor '{name}' has unknown dtype code {dtype_code}")
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, "dims"))
        n_elem = 1
        for d in dims:
            n_elem *= d
        payload = take(n_elem * width, f"payload of '{name}'")
        out[name] = np.frombuffer(payload, dtype=wire).reshape(dims)
    if pos != len(blob):
        raise FormatError(f"{path}: trailing bytes after the last tensor")
    return out
