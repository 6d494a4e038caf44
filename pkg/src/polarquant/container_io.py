"""Bit-exact binary containers for raw tensors (.rtz) and quantized models (.pqz).

Both formats are little-endian throughout and serialize canonically: writing,
reading, and writing again produces byte-identical files.

.rtz layout::

    magic "RTZ1" | u16 version=1 | u32 tensor_count
    per tensor: u16 name_len | name utf-8 | u8 dtype (0=float32, 1=float16)
                | u8 rank | rank x u64 dims | raw little-endian payload

.pqz layout::

    magic "PQZ1" | u16 version=1 | u32 block_size
    u8 table_count | per table: u8 bits | 2^bits x float32 centroids
    u32 tensor_count
    per tensor: u16 name_len | name utf-8
                | u8 rank | rank x u64 dims (original shape)
                | u64 original_len
                | u8 bits            (0 marks an unquantized float16 payload)
                | u64 num_blocks
                | u8 flags           (bit 0: channel scales present)
                | codes  num_blocks * block_size bytes     (bits > 0 only)
                | norms  num_blocks x float16              (bits > 0)
                | payload num_blocks x float16             (bits == 0; then
                  num_blocks == original_len and no codes section exists)
                | channel scales dims[1] x float32         (flag bit 0)

Centroid tables are stored once, shared by every tensor of the same width.
Readers validate magic, version, every declared size, code ranges, and
reject trailing bytes; each failure names the offending tensor and offset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .gauss_quant import CentroidTable
from .polar_codec import QuantizedTensor
from .tensors import HalfTensor

RTZ_MAGIC = b"RTZ1"
PQZ_MAGIC = b"PQZ1"
FORMAT_VERSION = 1

DTYPE_FLOAT32 = 0
DTYPE_FLOAT16 = 1

FLAG_CHANNEL_SCALES = 0x01
KEEP_FP_BITS = 0


class ContainerError(ValueError):
    """A container file violated the format or one of its invariants."""


@dataclass
class QuantizedModel:
    """In-memory image of a .pqz file."""

    block_size: int
    tensors: list
    tables: dict[int, CentroidTable] = field(default_factory=dict)


def build_model(block_size: int, tensors) -> QuantizedModel:
    """Assemble a model, solving one shared table per bit width in use."""
    from .gauss_quant import default_table

    tensors = list(tensors)
    tables = {
        t.bits: default_table(t.bits) for t in tensors if isinstance(t, QuantizedTensor)
    }
    return QuantizedModel(block_size=block_size, tensors=tensors, tables=tables)


# ---------------------------------------------------------------------------
# low-level helpers


class _Reader:
    def __init__(self, buf: bytes, label: str):
        self.buf = buf
        self.pos = 0
        self.label = label

    def fail(self, message: str):
        raise ContainerError(f"{self.label}: {message} (offset {self.pos})")

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            self.fail(f"truncated file while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def name(self) -> str:
        n = self.u16("name length")
        raw = self.take(n, "tensor name")
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            self.fail("tensor name is not valid UTF-8")

    def done(self):
        if self.pos != len(self.buf):
            self.fail(f"{len(self.buf) - self.pos} trailing bytes after the last tensor")


def _encode_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ContainerError(f"tensor name too long ({len(raw)} bytes)")
    return struct.pack("<H", len(raw)) + raw


def _check_header(reader: _Reader, magic: bytes):
    got = reader.take(4, "magic")
    if got != magic:
        reader.fail(f"bad magic {got!r}, expected {magic!r}")
    version = reader.u16("version")
    if version != FORMAT_VERSION:
        reader.fail(f"unsupported version {version}, expected {FORMAT_VERSION}")


# ---------------------------------------------------------------------------
# .rtz


def write_rtz(path, tensors) -> None:
    """Write named arrays (float32 or float16) to ``path``.

    ``tensors`` maps names to shaped numpy arrays; iteration order is the
    file order.
    """
    chunks = [RTZ_MAGIC, struct.pack("<HI", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype == np.float32:
            dtype_code, wire = DTYPE_FLOAT32, "<f4"
        elif arr.dtype == np.float16:
            dtype_code, wire = DTYPE_FLOAT16, "<f2"
        else:
            raise ContainerError(
                f"tensor '{name}': dtype {arr.dtype} not storable; cast to float32 or float16"
            )
        if arr.ndim > 255:
            raise ContainerError(f"tensor '{name}': rank {arr.ndim} exceeds 255")
        chunks.append(_encode_name(name))
        chunks.append(struct.pack("<BB", dtype_code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=wire).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_rtz(path) -> dict[str, np.ndarray]:
    """Read a .rtz file back into an ordered name -> array mapping."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), str(path))
    _check_header(reader, RTZ_MAGIC)
    count = reader.u32("tensor count")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = reader.name()
        if name in out:
            reader.fail(f"duplicate tensor name '{name}'")
        dtype_code = reader.u8(f"dtype of '{name}'")
        if dtype_code == DTYPE_FLOAT32:
            wire, width = "<f4", 4
        elif dtype_code == DTYPE_FLOAT16:
            wire, width = "<f2", 2
        else:
            reader.fail(f"tensor '{name}': unknown dtype code {dtype_code}")
        rank = reader.u8(f"rank of '{name}'")
        dims = struct.unpack(f"<{rank}Q", reader.take(8 * rank, f"dims of '{name}'"))
        n_elem = 1
        for d in dims:
            n_elem *= d
        payload = reader.take(n_elem * width, f"payload of '{name}'")
        out[name] = np.frombuffer(payload, dtype=wire).reshape(dims)
    reader.done()
    return out


# ---------------------------------------------------------------------------
# .pqz


def write_pqz(path, model: QuantizedModel) -> None:
    """Serialize a quantized model; see the module docstring for the layout."""
    if model.block_size < 1:
        raise ContainerError(f"invalid block size {model.block_size}")
    seen: set[str] = set()
    for t in model.tensors:
        if t.name in seen:
            raise ContainerError(f"duplicate tensor name '{t.name}'")
        seen.add(t.name)
        if isinstance(t, QuantizedTensor):
            if t.bits not in model.tables:
                raise ContainerError(f"tensor '{t.name}' needs a {t.bits}-bit table")
            if t.block_size != model.block_size:
                raise ContainerError(
                    f"tensor '{t.name}' uses block size {t.block_size}, "
                    f"model declares {model.block_size}"
                )
    if len(model.tables) > 255:
        raise ContainerError("too many centroid tables")

    chunks = [PQZ_MAGIC, struct.pack("<HI", FORMAT_VERSION, model.block_size)]
    chunks.append(struct.pack("<B", len(model.tables)))
    for bits in sorted(model.tables):
        table = model.tables[bits]
        if table.bits != bits:
            raise ContainerError(f"table registered under {bits} bits reports {table.bits}")
        chunks.append(struct.pack("<B", bits))
        chunks.append(np.ascontiguousarray(table.centroids, dtype="<f4").tobytes())
    chunks.append(struct.pack("<I", len(model.tensors)))
    for t in model.tensors:
        chunks.append(_encode_name(t.name))
        chunks.append(struct.pack("<B", len(t.shape)))
        chunks.append(struct.pack(f"<{len(t.shape)}Q", *t.shape))
        if isinstance(t, QuantizedTensor):
            flags = FLAG_CHANNEL_SCALES if t.channel_scales is not None else 0
            chunks.append(struct.pack("<QBQB", t.original_len, t.bits, t.num_blocks, flags))
            chunks.append(np.ascontiguousarray(t.codes, dtype=np.uint8).tobytes())
            chunks.append(np.ascontiguousarray(t.norms, dtype="<f2").tobytes())
            if t.channel_scales is not None:
                chunks.append(np.ascontiguousarray(t.channel_scales, dtype="<f4").tobytes())
        elif isinstance(t, HalfTensor):
            n = t.data.size
            chunks.append(struct.pack("<QBQB", n, KEEP_FP_BITS, n, 0))
            chunks.append(np.ascontiguousarray(t.data, dtype="<f2").tobytes())
        else:
            raise ContainerError(f"cannot serialize object of type {type(t).__name__}")
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_pqz(path) -> QuantizedModel:
    """Read and validate a .pqz file."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), str(path))
    _check_header(reader, PQZ_MAGIC)
    block_size = reader.u32("block size")
    if block_size < 1 or (block_size & (block_size - 1)) != 0 or block_size > (1 << 16):
        reader.fail(f"block size {block_size} is not a supported power of two")

    tables: dict[int, CentroidTable] = {}
    for _ in range(reader.u8("table count")):
        bits = reader.u8("table bits")
        if not 2 <= bits <= 8:
            reader.fail(f"centroid table has invalid width {bits}")
        if bits in tables:
            reader.fail(f"duplicate centroid table for {bits} bits")
        raw = reader.take(4 * (1 << bits), f"{bits}-bit centroid table")
        centroids = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.diff(centroids) > 0):
            reader.fail(f"{bits}-bit centroid table is not strictly increasing")
        tables[bits] = CentroidTable.from_centroids(bits, centroids)

    count = reader.u32("tensor count")
    tensors = []
    seen: set[str] = set()
    for _ in range(count):
        name = reader.name()
        if name in seen:
            reader.fail(f"duplicate tensor name '{name}'")
        seen.add(name)
        rank = reader.u8(f"rank of '{name}'")
        dims = struct.unpack(f"<{rank}Q", reader.take(8 * rank, f"dims of '{name}'"))
        n_elem = 1
        for d in dims:
            n_elem *= d
        original_len = reader.u64(f"length of '{name}'")
        if original_len != n_elem:
            reader.fail(
                f"tensor '{name}': shape {dims} holds {n_elem} elements "
                f"but declares {original_len}"
            )
        bits = reader.u8(f"bit width of '{name}'")
        num_blocks = reader.u64(f"block count of '{name}'")
        flags = reader.u8(f"flags of '{name}'")
        if flags & ~FLAG_CHANNEL_SCALES:
            reader.fail(f"tensor '{name}': unknown flag bits 0x{flags:02x}")

        if bits == KEEP_FP_BITS:
            if flags:
                reader.fail(f"tensor '{name}': full-precision payloads take no flags")
            if num_blocks != original_len:
                reader.fail(
                    f"tensor '{name}': full-precision payload declares {num_blocks} "
                    f"values for {original_len} elements"
                )
            raw = reader.take(2 * num_blocks, f"payload of '{name}'")
            data = np.frombuffer(raw, dtype="<f2")
            if not np.all(np.isfinite(data.astype(np.float64))):
                reader.fail(f"tensor '{name}': payload contains non-finite values")
            tensors.append(HalfTensor(name=name, shape=dims, data=data))
            continue

        if not 2 <= bits <= 8:
            reader.fail(f"tensor '{name}': invalid bit width {bits}")
        if bits not in tables:
            reader.fail(f"tensor '{name}': no centroid table for {bits} bits")
        expected_blocks = -(-original_len // block_size)
        if num_blocks != expected_blocks:
            reader.fail(
                f"tensor '{name}': {original_len} elements need {expected_blocks} "
                f"blocks, file declares {num_blocks}"
            )
        codes_at = reader.pos
        codes = np.frombuffer(
            reader.take(num_blocks * block_size, f"codes of '{name}'"), dtype=np.uint8
        )
        bad = np.nonzero(codes >= (1 << bits))[0]
        if bad.size:
            raise ContainerError(
                f"{reader.label}: tensor '{name}': code {codes[bad[0]]} at offset "
                f"{codes_at + int(bad[0])} is out of range for {bits} bits"
            )
        norms = np.frombuffer(reader.take(2 * num_blocks, f"norms of '{name}'"), dtype="<f2")
        if not np.all(np.isfinite(norms.astype(np.float64))) or np.any(norms < 0):
            reader.fail(f"tensor '{name}': norms must be finite and non-negative")
        scales = None
        if flags & FLAG_CHANNEL_SCALES:
            if rank != 2:
                reader.fail(f"tensor '{name}': channel scales require a 2-D shape")
            raw = reader.take(4 * dims[1], f"channel scales of '{name}'")
            scales = np.frombuffer(raw, dtype="<f4")
            if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
                reader.fail(f"tensor '{name}': channel scales must be finite and positive")
        tensors.append(
            QuantizedTensor(
                name=name,
                shape=dims,
                original_len=original_len,
                bits=bits,
                block_size=block_size,
                codes=codes,
                norms=norms,
                channel_scales=scales,
                table_ref=tables[bits].ref,
            )
        )
    reader.done()
    return QuantizedModel(block_size=block_size, tensors=tensors, tables=tables)


def models_equal(a: QuantizedModel, b: QuantizedModel) -> bool:
    """Structural equality of two in-memory models (table payloads at fp32)."""
    if a.block_size != b.block_size or len(a.tensors) != len(b.tensors):
        return False
    if sorted(a.tables) != sorted(b.tables):
        return False
    for bits in a.tables:
        lhs = a.tables[bits].centroids.astype("<f4").tobytes()
        rhs = b.tables[bits].centroids.astype("<f4").tobytes()
        if lhs != rhs:
            return False
    for ta, tb in zip(a.tensors, b.tensors):
        if type(ta) is not type(tb) or ta.name != tb.name or ta.shape != tb.shape:
            return False
        if isinstance(ta, HalfTensor):
            if ta.data.tobytes() != tb.data.tobytes():
                return False
            continue
        if (ta.bits, ta.block_size, ta.original_len) != (tb.bits, tb.block_size, tb.original_len):
            return False
        if ta.codes.tobytes() != tb.codes.tobytes():
            return False
        if ta.norms.tobytes() != tb.norms.tobytes():
            return False
        sa, sb = ta.channel_scales, tb.channel_scales
        if (sa is None) != (sb is None):
            return False
        if sa is not None and sa.tobytes() != sb.tobytes():
            return False
    return True
