import numpy as np
import pytest

from polarquant.gauss_quant import default_table, nearest_centroid, quantizer_mse
from polarquant.hadamard import fwht, fwht_batch
from polarquant.polar_codec import (
    REFERENCE_LAYOUT,
    ROLE_BITS,
    QuantizedTensor,
    allocate_bits,
    apply_channel_scales,
    average_bpw,
    bits_per_weight,
    polar_dequantize,
    polar_quantize,
    remove_channel_scales,
)
from polarquant.cascade import relative_mse
from polarquant.tensors import DenseTensor


def rel_mse(t: DenseTensor, r: DenseTensor) -> float:
    return relative_mse(t, r)


class TestEncodeDecode:
    def test_zero_tensor_roundtrips_exactly(self):
        t = DenseTensor.from_array("z", np.zeros(256, np.float32))
        q = polar_quantize(t, bits=4)
        assert q.num_blocks == 2
        assert q.norms.tolist() == [0.0, 0.0]
        recon = polar_dequantize(q)
        assert np.array_equal(recon.data, np.zeros(256, np.float32))

    def test_scaled_basis_vector(self):
        data = np.zeros(128, np.float32)
        data[0] = 5.0
        q = polar_quantize(DenseTensor.from_array("e0", data), bits=5)
        assert q.num_blocks == 1
        assert q.norms[0] == np.float16(5.0)
        # The rotation of e0 is the constant column, so all codes agree.
        assert np.unique(q.codes).size == 1

    def test_gaussian_q5_relative_error(self, gauss_tensor_1m):
        q = polar_quantize(gauss_tensor_1m, bits=5)
        recon = polar_dequantize(q)
        assert 0.002 <= rel_mse(gauss_tensor_1m, recon) <= 0.003

    def test_gaussian_q8_relative_error(self, gauss_tensor_128k):
        q = polar_quantize(gauss_tensor_128k, bits=8)
        recon = polar_dequantize(q)
        assert rel_mse(gauss_tensor_128k, recon) < 3e-4

    def test_error_monotone_in_bits(self, gauss_tensor_128k):
        errors = [
            rel_mse(gauss_tensor_128k, polar_dequantize(polar_quantize(gauss_tensor_128k, b)))
            for b in (2, 3, 4, 5)
        ]
        assert all(a > b for a, b in zip(errors, errors[1:]))

    def test_relative_error_tracks_codebook_mse(self, gauss_tensor_128k):
        for bits in (3, 4, 5):
            err = rel_mse(
                gauss_tensor_128k,
                polar_dequantize(polar_quantize(gauss_tensor_128k, bits)),
            )
            expected = quantizer_mse(default_table(bits))
            assert 0.8 * expected <= err <= 1.2 * expected

    def test_blockwise_norm_algebra(self):
        # Scalar oracle: quantize the known z vector directly and predict the
        # reconstructed block norm as r * ||zhat|| / sqrt(d).
        rng = np.random.default_rng(21)
        d = 64
        block = rng.standard_normal(d).astype(np.float32)
        table = default_table(4)
        t = DenseTensor.from_array("b", block)
        q = polar_quantize(t, bits=4, block_size=d)
        r = float(np.linalg.norm(block.astype(np.float64)))
        z = fwht(block.astype(np.float64) / r) * np.sqrt(d)
        zhat = table.centroids[[nearest_centroid(v, table) for v in z]]
        assert np.array_equal(q.codes, nearest_centroid(z, table).astype(np.uint8))
        predicted = float(np.float16(r)) * np.linalg.norm(zhat) / np.sqrt(d)
        recon = polar_dequantize(q)
        assert np.linalg.norm(recon.data.astype(np.float64)) == pytest.approx(
            predicted, rel=1e-6
        )

    def test_transform_roundtrip_isolated_from_quantization(self):
        # Identity "quantizer": skip the codebook, keep exact z values.
        rng = np.random.default_rng(22)
        blocks = rng.standard_normal((32, 128))
        norms = np.linalg.norm(blocks, axis=1, keepdims=True)
        z = fwht_batch(blocks / norms) * np.sqrt(128)
        back = fwht_batch(z / np.sqrt(128)) * norms
        assert np.max(np.abs(back - blocks)) <= 1e-6 * np.max(np.abs(blocks))

    def test_determinism(self, gauss_tensor_128k):
        a = polar_quantize(gauss_tensor_128k, bits=3)
        b = polar_quantize(gauss_tensor_128k, bits=3)
        assert np.array_equal(a.codes, b.codes)
        assert np.array_equal(a.norms, b.norms)

    def test_scale_covariance(self, gauss_tensor_128k):
        base = polar_quantize(gauss_tensor_128k, bits=4)
        for alpha in (2.0, 0.5, 1.7, 3.3e-2):
            scaled = DenseTensor.from_array(
                "s", gauss_tensor_128k.array.astype(np.float64) * alpha
            )
            q = polar_quantize(scaled, bits=4)
            assert np.array_equal(q.codes, base.codes)
        # Power-of-two scaling is exact all the way through binary16.
        doubled = DenseTensor.from_array("d", gauss_tensor_128k.array * np.float32(2))
        q2 = polar_quantize(doubled, bits=4)
        assert np.array_equal(q2.norms, (base.norms.astype(np.float64) * 2).astype(np.float16))

    def test_padding_is_truncated(self):
        data = np.random.default_rng(23).standard_normal(300).astype(np.float32)
        t = DenseTensor.from_array("p", data)
        q = polar_quantize(t, bits=5)
        assert q.num_blocks == 3
        recon = polar_dequantize(q)
        assert recon.data.size == 300
        assert recon.shape == (300,)

    def test_norm_overflow_is_a_hard_error(self):
        data = np.full(128, 1.0e4, dtype=np.float32)  # norm ~ 1.13e5 > 65504
        with pytest.raises(ValueError, match="block 0"):
            polar_quantize(DenseTensor.from_array("big", data), bits=4)

    def test_table_bits_mismatch(self, gauss_tensor_128k):
        with pytest.raises(ValueError, match="bits"):
            polar_quantize(gauss_tensor_128k, bits=5, table=default_table(4))

    def test_dequantize_table_mismatch(self, gauss_tensor_128k):
        q = polar_quantize(gauss_tensor_128k, bits=5)
        with pytest.raises(ValueError, match="encoded with"):
            polar_dequantize(q, table=default_table(4))

    def test_rejects_bad_block_size(self, gauss_tensor_128k):
        with pytest.raises(ValueError):
            polar_quantize(gauss_tensor_128k, bits=4, block_size=100)


class TestChannelScales:
    def test_identity_scales(self):
        arr = np.random.default_rng(30).standard_normal((8, 16)).astype(np.float32)
        t = DenseTensor.from_array("w", arr)
        out = apply_channel_scales(t, np.ones(16))
        assert np.array_equal(out.array, arr)

    def test_hand_example(self):
        t = DenseTensor.from_array("w", np.array([[1.0, 2.0], [3.0, 4.0]]))
        out = apply_channel_scales(t, [2.0, 10.0])
        assert out.array.tolist() == [[2.0, 20.0], [6.0, 40.0]]

    def test_roundtrip_within_one_ulp(self):
        rng = np.random.default_rng(31)
        arr = rng.standard_normal((64, 96)).astype(np.float32)
        scales = np.exp(rng.uniform(-3, 3, 96)).astype(np.float32)
        t = DenseTensor.from_array("w", arr)
        back = remove_channel_scales(apply_channel_scales(t, scales), scales).array
        ulps = np.abs(back.view(np.int32) - arr.view(np.int32))
        assert np.max(ulps) <= 1

    def test_rejects_bad_scales(self):
        t = DenseTensor.from_array("w", np.ones((4, 4), np.float32))
        with pytest.raises(ValueError):
            apply_channel_scales(t, [1.0, 2.0])
        with pytest.raises(ValueError):
            apply_channel_scales(t, [1.0, -1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            apply_channel_scales(DenseTensor.from_array("v", np.ones(4, np.float32)), [1.0])

    def test_scales_travel_with_the_artifact(self):
        rng = np.random.default_rng(32)
        arr = rng.standard_normal((32, 128)).astype(np.float32)
        scales = np.exp(rng.uniform(-1, 1, 128)).astype(np.float32)
        t = DenseTensor.from_array("w", arr)
        q = polar_quantize(t, bits=6, channel_scales=scales)
        assert q.channel_scales is not None
        recon = polar_dequantize(q)
        # Dequantization divides the scales back out automatically.
        assert rel_mse(t, recon) < 0.01


class TestBitAllocation:
    @pytest.mark.parametrize(
        "role,bits",
        [
            ("mlp_gate_up", 3),
            ("mlp_down", 4),
            ("attn_qkv", 5),
            ("attn_o", 6),
            ("embedding", 5),
            ("lm_head", 6),
            ("keep_fp", None),
        ],
    )
    def test_role_table(self, role, bits):
        assert allocate_bits(role) == bits

    def test_unknown_role(self):
        with pytest.raises(ValueError, match="unknown tensor role"):
            allocate_bits("conv_stem")

    def test_bits_per_weight_values(self):
        assert bits_per_weight(5, 128) == 5.125
        assert bits_per_weight(4, 128) == 4.125
        assert f"{16 / bits_per_weight(5, 128):.1f}" == "3.1"

    def test_average_bpw_reference_layout(self):
        # Hand-summed oracle over the documented layout.
        expected = sum(
            count * (16.0 if ROLE_BITS[role] is None else ROLE_BITS[role] + 0.125)
            for role, count in REFERENCE_LAYOUT
        ) / sum(count for _, count in REFERENCE_LAYOUT)
        assert average_bpw(REFERENCE_LAYOUT) == pytest.approx(expected, abs=1e-12)
        assert abs(average_bpw(REFERENCE_LAYOUT) - 3.7) <= 0.2

    def test_average_bpw_rejects_empty_layout(self):
        with pytest.raises(ValueError):
            average_bpw([])

    def test_average_bpw_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            average_bpw([("mlp_down", 0)])


class TestArtifactValidation:
    def test_code_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            QuantizedTensor(
                name="w",
                shape=(128,),
                original_len=128,
                bits=2,
                block_size=128,
                codes=np.full(128, 4, np.uint8),
                norms=np.ones(1, np.float16),
                channel_scales=None,
                table_ref="lloyd-max-normal-b2",
            )

    def test_norm_count_mismatch(self):
        with pytest.raises(ValueError, match="block norms"):
            QuantizedTensor(
                name="w",
                shape=(256,),
                original_len=256,
                bits=2,
                block_size=128,
                codes=np.zeros(256, np.uint8),
                norms=np.ones(1, np.float16),
                channel_scales=None,
                table_ref="lloyd-max-normal-b2",
            )
