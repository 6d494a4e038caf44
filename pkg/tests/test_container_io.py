import numpy as np
import pytest

from polarquant.container_io import (
    ContainerError,
    QuantizedModel,
    build_model,
    models_equal,
    read_pqz,
    read_rtz,
    write_pqz,
    write_rtz,
)
from polarquant.gauss_quant import default_table
from polarquant.polar_codec import polar_quantize
from polarquant.tensors import DenseTensor, HalfTensor

# Published binary16 test vectors: (bit pattern, exact float64 value).
# Covers signed zero, subnormals (smallest and largest), the smallest
# normal, interior values, the maximum finite value 65504, and negatives.
HALF_DECODE_VECTORS = [
    (0x0000, 0.0),
    (0x8000, -0.0),
    (0x0001, 2.0 ** -24),
    (0x03FF, 1023.0 * 2.0 ** -24),
    (0x0400, 2.0 ** -14),
    (0x3555, 0.333251953125),
    (0x3BFF, 0.99951171875),
    (0x3C00, 1.0),
    (0x3C01, 1.0009765625),
    (0x3E00, 1.5),
    (0x4248, 3.140625),
    (0x5640, 100.0),
    (0x7BFF, 65504.0),
    (0xC000, -2.0),
]

# Round-to-nearest-even at exact midpoints between adjacent halves.
HALF_ENCODE_TIES = [
    (1.00048828125, 0x3C00),  # midpoint of 1.0 and 1.0009765625 -> even
    (1.00146484375, 0x3C02),  # midpoint of 0x3C01 and 0x3C02 -> even
]


class TestBinary16:
    @pytest.mark.parametrize("pattern,value", HALF_DECODE_VECTORS)
    def test_decode(self, pattern, value):
        half = np.frombuffer(np.uint16(pattern).tobytes(), dtype="<f2")[0]
        assert float(half) == value
        if value == 0.0:
            assert np.signbit(half) == (pattern == 0x8000)

    @pytest.mark.parametrize("pattern,value", HALF_DECODE_VECTORS)
    def test_encode_roundtrip(self, pattern, value):
        encoded = np.float64(value).astype("<f2")
        assert encoded.tobytes() == np.uint16(pattern).tobytes()

    @pytest.mark.parametrize("value,pattern", HALF_ENCODE_TIES)
    def test_round_to_nearest_even_ties(self, value, pattern):
        assert np.float64(value).astype("<f2").tobytes() == np.uint16(pattern).tobytes()


@pytest.fixture
def rtz_fixture():
    rng = np.random.default_rng(60)
    return {
        "layer.0.weight": rng.standard_normal((16, 32)).astype(np.float32),
        "layer.0.bias": rng.standard_normal(16).astype(np.float16),
        "scalar": np.array(1.5, dtype=np.float32),
    }


@pytest.fixture
def pqz_fixture():
    rng = np.random.default_rng(61)
    plain = polar_quantize(
        DenseTensor.from_array("w.plain", rng.standard_normal(256).astype(np.float32)),
        bits=5,
    )
    scaled = polar_quantize(
        DenseTensor.from_array("w.scaled", rng.standard_normal((4, 128)).astype(np.float32)),
        bits=3,
        channel_scales=np.exp(rng.uniform(-1, 1, 128)).astype(np.float32),
    )
    kept = HalfTensor.from_array("w.norm", rng.standard_normal(64).astype(np.float16))
    return build_model(128, [plain, scaled, kept])


class TestRtz:
    def test_empty_file_is_ten_bytes(self, tmp_path):
        path = tmp_path / "empty.rtz"
        write_rtz(path, {})
        assert path.stat().st_size == 10
        assert read_rtz(path) == {}

    def test_roundtrip(self, tmp_path, rtz_fixture):
        path = tmp_path / "model.rtz"
        write_rtz(path, rtz_fixture)
        back = read_rtz(path)
        assert list(back) == list(rtz_fixture)
        for name, arr in rtz_fixture.items():
            assert back[name].dtype == arr.dtype
            assert back[name].shape == arr.shape
            assert np.array_equal(back[name], arr)

    def test_write_read_write_byte_identical(self, tmp_path, rtz_fixture):
        p1, p2 = tmp_path / "a.rtz", tmp_path / "b.rtz"
        write_rtz(p1, rtz_fixture)
        write_rtz(p2, read_rtz(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_bad_magic(self, tmp_path, rtz_fixture):
        path = tmp_path / "bad.rtz"
        write_rtz(path, rtz_fixture)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(raw)
        with pytest.raises(ContainerError, match="magic"):
            read_rtz(path)

    def test_rejects_bad_version(self, tmp_path, rtz_fixture):
        path = tmp_path / "bad.rtz"
        write_rtz(path, rtz_fixture)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(raw)
        with pytest.raises(ContainerError, match="version"):
            read_rtz(path)

    def test_rejects_truncation(self, tmp_path, rtz_fixture):
        path = tmp_path / "cut.rtz"
        write_rtz(path, rtz_fixture)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ContainerError, match="truncated"):
            read_rtz(path)

    def test_rejects_trailing_garbage(self, tmp_path, rtz_fixture):
        path = tmp_path / "extra.rtz"
        write_rtz(path, rtz_fixture)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ContainerError, match="trailing"):
            read_rtz(path)

    def test_rejects_unsupported_dtype(self, tmp_path):
        with pytest.raises(ContainerError, match="dtype"):
            write_rtz(tmp_path / "x.rtz", {"w": np.zeros(4, np.float64)})


class TestPqz:
    def test_roundtrip_structural_identity(self, tmp_path, pqz_fixture):
        path = tmp_path / "model.pqz"
        write_pqz(path, pqz_fixture)
        back = read_pqz(path)
        assert models_equal(pqz_fixture, back)

    def test_write_read_write_byte_identical(self, tmp_path, pqz_fixture):
        p1, p2 = tmp_path / "a.pqz", tmp_path / "b.pqz"
        write_pqz(p1, pqz_fixture)
        write_pqz(p2, read_pqz(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_section_sizes_for_single_q5_tensor(self, tmp_path):
        t = polar_quantize(
            DenseTensor.from_array("w", np.random.default_rng(62).standard_normal(256)),
            bits=5,
        )
        model = build_model(128, [t])
        path = tmp_path / "one.pqz"
        write_pqz(path, model)
        size = path.stat().st_size
        # header 4+2+4, table 1+1+32*4, count 4, name 2+1, rank/dims 1+8,
        # fixed fields 8+1+8+1, codes 256, norms 2 blocks * 2 bytes
        expected = (4 + 2 + 4) + (1 + 1 + 128) + 4 + (2 + 1) + (1 + 8) + 18 + 256 + 4
        assert size == expected

    def test_flipped_code_byte_rejected(self, tmp_path, pqz_fixture):
        path = tmp_path / "model.pqz"
        write_pqz(path, pqz_fixture)
        raw = bytearray(path.read_bytes())
        # First tensor is 5-bit: find its codes section and plant 0xFF.
        marker = raw.find(b"w.plain")
        codes_at = marker + len(b"w.plain") + 1 + 8 + 8 + 1 + 8 + 1
        raw[codes_at] = 0xFF
        path.write_bytes(raw)
        with pytest.raises(ContainerError, match="w.plain.*out of range"):
            read_pqz(path)

    def test_missing_table_rejected(self, tmp_path, pqz_fixture):
        path = tmp_path / "model.pqz"
        model = QuantizedModel(
            block_size=pqz_fixture.block_size,
            tensors=pqz_fixture.tensors,
            tables={5: pqz_fixture.tables[5]},
        )
        with pytest.raises(ContainerError, match="table"):
            write_pqz(path, model)

    def test_truncated_rejected(self, tmp_path, pqz_fixture):
        path = tmp_path / "model.pqz"
        write_pqz(path, pqz_fixture)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(ContainerError, match="truncated"):
            read_pqz(path)

    def test_trailing_garbage_rejected(self, tmp_path, pqz_fixture):
        path = tmp_path / "model.pqz"
        write_pqz(path, pqz_fixture)
        path.write_bytes(path.read_bytes() + b"zz")
        with pytest.raises(ContainerError, match="trailing"):
            read_pqz(path)

    def test_bad_magic_rejected(self, tmp_path, pqz_fixture):
        path = tmp_path / "model.pqz"
        write_pqz(path, pqz_fixture)
        raw = bytearray(path.read_bytes())
        raw[0] = ord("X")
        path.write_bytes(raw)
        with pytest.raises(ContainerError, match="magic"):
            read_pqz(path)

    def test_keep_fp_payload_roundtrip(self, tmp_path):
        data = np.random.default_rng(63).standard_normal(100).astype(np.float16)
        model = build_model(128, [HalfTensor.from_array("fp", data)])
        path = tmp_path / "fp.pqz"
        write_pqz(path, model)
        back = read_pqz(path)
        assert isinstance(back.tensors[0], HalfTensor)
        assert np.array_equal(back.tensors[0].data, data)

    def test_decoded_tables_match_fp32_centroids(self, tmp_path, pqz_fixture):
        path = tmp_path / "model.pqz"
        write_pqz(path, pqz_fixture)
        back = read_pqz(path)
        for bits, table in back.tables.items():
            original = default_table(bits).centroids.astype(np.float32)
            assert np.array_equal(table.centroids.astype(np.float32), original)

    def test_duplicate_names_rejected_on_write(self, tmp_path):
        t = polar_quantize(
            DenseTensor.from_array("w", np.random.default_rng(64).standard_normal(128)),
            bits=4,
        )
        model = build_model(128, [t, t])
        with pytest.raises(ContainerError, match="duplicate"):
            write_pqz(tmp_path / "dup.pqz", model)
