import dataclasses

import numpy as np
import pytest

from pm2lat.compute import (
    CLAMP_ABOVE,
    CLAMP_BELOW,
    MATCH_EXACT,
    MATCH_NEAREST,
    ConfigResolver,
    WaveModel,
    interpolate_throughput,
    predict_compute,
    predict_generic,
    resolve_config,
    wave_count,
)
from pm2lat.core import (
    CurveSample,
    DType,
    KernelKey,
    Library,
    MatMulShape,
    ThroughputCurve,
    TransposeMode,
)
from pm2lat.errors import (
    CurveMismatch,
    InvalidTile,
    NoConfigAvailable,
    UnknownFamily,
    ValidationError,
)
from pm2lat.ingest import ConfigRecord


def mk_key(**overrides):
    kwargs = dict(family="matmul", dtype=DType.FP32, library=Library.CUBLAS,
                  algorithm_id=0, tile_m=128, tile_n=128,
                  transpose_mode=TransposeMode.NN)
    kwargs.update(overrides)
    return KernelKey(**kwargs)


def mk_curve(key=None, samples=((64, 100.0), (256, 300.0), (8192, 500.0)),
             ref_duration=40.0, ref_waves=1, varying="K", **overrides):
    kwargs = dict(
        kernel=key or mk_key(),
        varying_dim_name=varying,
        samples=tuple(CurveSample(d, t) for d, t in samples),
        ref_dim_value=samples[-1][0],
        ref_duration_us=ref_duration,
        ref_waves=ref_waves,
        device_id="dev0",
    )
    kwargs.update(overrides)
    return ThroughputCurve(**kwargs)


class TestWaveCount:
    def test_single_full_tile(self):
        key = mk_key(tile_m=64, tile_n=64)
        shape = MatMulShape(batch=1, m=64, n=64, k=512)
        assert wave_count(shape, key, WaveModel(sm_count=30)) == 1

    def test_partial_tile_costs_full_block(self):
        key = mk_key(tile_m=128, tile_n=128)
        shape = MatMulShape(batch=1, m=129, n=128, k=64)
        # 2 blocks still fit one 30-slot wave
        assert wave_count(shape, key, WaveModel(sm_count=30)) == 1

    def test_batched_split_k(self):
        key = mk_key(tile_m=128, tile_n=128, split_k=2)
        shape = MatMulShape(batch=8, m=512, n=512, k=4096)
        # 8 * 4 * 4 * 2 = 256 blocks over 30 per wave -> 9 waves
        assert wave_count(shape, key, WaveModel(sm_count=30)) == 9

    def test_blocks_per_sm_scales_wave_capacity(self):
        key = mk_key(tile_m=64, tile_n=64)
        shape = MatMulShape(batch=1, m=64 * 60, n=64, k=64)
        assert wave_count(shape, key, WaveModel(sm_count=30)) == 2
        assert wave_count(shape, key, WaveModel(sm_count=30, blocks_per_sm=2)) == 1

    def test_invalid_wave_model(self):
        with pytest.raises(InvalidTile):
            WaveModel(sm_count=0)

    def test_corrupted_tile_guard(self):
        # bypass KernelKey validation to exercise the block_count guard
        key = mk_key()
        object.__setattr__(key, "tile_m", 0)
        with pytest.raises(InvalidTile):
            wave_count(MatMulShape(batch=1, m=8, n=8, k=8), key, WaveModel(sm_count=30))

    def test_wave_quantization_in_m(self):
        key = mk_key(tile_m=64, tile_n=64)
        wm = WaveModel(sm_count=30)
        shape_lo = MatMulShape(batch=1, m=64 * 3, n=64 * 5, k=64)   # 15 blocks
        shape_hi = MatMulShape(batch=1, m=64 * 6, n=64 * 5, k=64)   # 30 blocks
        assert wave_count(shape_lo, key, wm) == wave_count(shape_hi, key, wm) == 1
        shape_over = MatMulShape(batch=1, m=64 * 7, n=64 * 5, k=64)  # 35 blocks
        assert wave_count(shape_over, key, wm) == 2


class TestInterpolation:
    def test_exact_grid_hit(self):
        curve = mk_curve()
        assert interpolate_throughput(curve, 256) == 300.0

    def test_midpoint_formula(self):
        curve = mk_curve(samples=((64, 100.0), (256, 300.0)))
        expected = 100.0 + (128 - 64) / (256 - 64) * (300.0 - 100.0)
        assert interpolate_throughput(curve, 128) == expected
        assert expected == pytest.approx(166.6666666, rel=1e-9)

    def test_clamp_above_uses_cap_throughput(self):
        curve = mk_curve()
        assert interpolate_throughput(curve, 10 * curve.ref_dim_value) == 500.0

    def test_clamp_below_uses_first_sample(self):
        curve = mk_curve()
        assert interpolate_throughput(curve, 8) == 100.0

    def test_sandwich_property(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            dims = np.unique(rng.integers(1, 10000, size=6))
            if len(dims) < 2:
                continue
            thrs = rng.uniform(1.0, 1000.0, size=len(dims))
            curve = mk_curve(samples=tuple(zip((int(d) for d in dims), thrs)))
            dim = int(rng.integers(dims[0], dims[-1] + 1))
            value = interpolate_throughput(curve, dim)
            idx = int(np.searchsorted(dims, dim))
            if dims[idx] == dim:
                assert value == thrs[idx]
            else:
                lo, hi = sorted((thrs[idx - 1], thrs[idx]))
                assert lo <= value <= hi


class TestPredictCompute:
    def test_identity_at_reference(self):
        key = mk_key()
        curve = mk_curve(key, ref_duration=40.0, ref_waves=1)
        shape = MatMulShape(batch=1, m=128, n=128, k=curve.ref_dim_value)
        pred = predict_compute(shape, key, curve, WaveModel(sm_count=30))
        assert pred.latency_us == 40.0
        assert pred.components["clamp"] is None

    def test_flat_curve_halving(self):
        key = mk_key()
        curve = mk_curve(key, samples=((64, 250.0), (4096, 250.0), (8192, 250.0)))
        shape = MatMulShape(batch=1, m=128, n=128, k=4096)
        pred = predict_compute(shape, key, curve, WaveModel(sm_count=30))
        assert pred.latency_us == 20.0

    def test_wave_scaling_is_linear(self):
        key = mk_key(tile_m=64, tile_n=64)
        curve = mk_curve(key, ref_waves=2)
        wm = WaveModel(sm_count=30)
        shape_2w = MatMulShape(batch=1, m=64 * 10, n=64 * 6, k=8192)   # 60 blocks
        shape_4w = MatMulShape(batch=1, m=64 * 10, n=64 * 12, k=8192)  # 120 blocks
        p2 = predict_compute(shape_2w, key, curve, wm)
        p4 = predict_compute(shape_4w, key, curve, wm)
        assert p2.latency_us == curve.ref_duration_us
        assert p4.latency_us == 2 * p2.latency_us

    def test_curve_mismatch(self):
        curve = mk_curve(mk_key(algorithm_id=5))
        with pytest.raises(CurveMismatch):
            predict_compute(MatMulShape(batch=1, m=8, n=8, k=8), mk_key(),
                            curve, WaveModel(sm_count=30))

    def test_determinism(self):
        key = mk_key()
        curve = mk_curve(key)
        shape = MatMulShape(batch=3, m=777, n=333, k=1234)
        wm = WaveModel(sm_count=30)
        a = predict_compute(shape, key, curve, wm).latency_us
        b = predict_compute(shape, key, curve, wm).latency_us
        assert a == b

    def test_clamp_flag_above(self):
        key = mk_key()
        curve = mk_curve(key)
        pred = predict_compute(MatMulShape(batch=1, m=128, n=128, k=81920),
                               key, curve, WaveModel(sm_count=30))
        assert pred.components["clamp"] == CLAMP_ABOVE
        assert pred.latency_us == pytest.approx(10 * curve.ref_duration_us)

    def test_kernel_differentiation(self):
        # same shape, two keys with their own curves: predictions differ and
        # route only through the matching curve
        key_a = mk_key(algorithm_id=0)
        key_b = mk_key(algorithm_id=1, tile_m=64, tile_n=64)
        curve_a = mk_curve(key_a, ref_duration=40.0)
        curve_b = mk_curve(key_b, ref_duration=90.0)
        shape = MatMulShape(batch=1, m=512, n=512, k=2048)
        wm = WaveModel(sm_count=30)
        pred_a = predict_compute(shape, key_a, curve_a, wm)
        pred_b = predict_compute(shape, key_b, curve_b, wm)
        assert pred_a.latency_us != pred_b.latency_us
        with pytest.raises(CurveMismatch):
            predict_compute(shape, key_a, curve_b, wm)

    def test_rejects_rowblock_families(self):
        key = mk_key(family="triton_vec", tile_m=1024, tile_n=1)
        curve = mk_curve(key, varying="length")
        with pytest.raises(UnknownFamily):
            predict_compute(MatMulShape(batch=1, m=1, n=1, k=4096), key,
                            curve, WaveModel(sm_count=30))

    def test_curve_blocks_per_sm_overrides_wave_model(self):
        key = mk_key(tile_m=64, tile_n=64)
        shape = MatMulShape(batch=1, m=64 * 10, n=64 * 6, k=8192)   # 60 blocks
        wm = WaveModel(sm_count=30)
        plain = predict_compute(shape, key, mk_curve(key, ref_waves=1), wm)
        assert plain.components["waves"] == 2
        boosted_curve = mk_curve(key, ref_waves=1, blocks_per_sm=2)
        boosted = predict_compute(shape, key, boosted_curve, wm)
        assert boosted.components["waves"] == 1
        assert boosted.latency_us == plain.latency_us / 2


class TestPredictGeneric:
    def test_attention_grid_hit_identity(self, generic_dev, generic_dataset):
        plan = next(p for p in generic_dev.plans
                    if p.key.family == "flash_attention")
        curve = generic_dataset.curves[plan.key]
        shape = plan.collection_shape(plan.ref_dim)
        pred = predict_generic(shape, plan.key, curve, generic_dev.wave_model())
        assert pred.latency_us == curve.ref_duration_us

    def test_vec_flat_curve_doubles(self):
        key = mk_key(family="triton_vec", tile_m=1024, tile_n=1,
                     library=Library.TRITON)
        curve = mk_curve(key, samples=((4096, 50.0), (8192, 50.0), (16384, 50.0)),
                         varying="length", ref_waves=1)
        wm = WaveModel(sm_count=30)
        p1 = predict_generic(MatMulShape(batch=1, m=1, n=1, k=4096), key, curve, wm)
        p2 = predict_generic(MatMulShape(batch=1, m=1, n=1, k=8192), key, curve, wm)
        assert p2.latency_us == 2 * p1.latency_us

    def test_varying_dim_name_checked(self):
        key = mk_key(family="flash_attention", tile_m=64, tile_n=1)
        curve = mk_curve(key, varying="K")
        with pytest.raises(CurveMismatch, match="seq_len"):
            predict_generic(MatMulShape(batch=96, m=1, n=1, k=256), key, curve,
                            WaveModel(sm_count=30))

    def test_utility_family_rejected(self):
        key = KernelKey.for_utility("softmax", DType.FP32)
        curve = mk_curve()
        with pytest.raises(UnknownFamily):
            predict_generic(MatMulShape(batch=1, m=1, n=1, k=64), key, curve,
                            WaveModel(sm_count=30))


def mk_record(m, n, k, batch=1, **key_overrides):
    key = mk_key(**key_overrides)
    return ConfigRecord(family=key.family, dtype=key.dtype,
                        transpose_mode=key.transpose_mode,
                        shape=MatMulShape(batch=batch, m=m, n=n, k=k),
                        chosen_key=key)


class TestConfigResolver:
    def test_exact_match(self):
        records = [mk_record(64, 64, 64, algorithm_id=1),
                   mk_record(128, 128, 128, algorithm_id=2)]
        resolver = ConfigResolver(records)
        resolved = resolver.resolve("matmul", DType.FP32, TransposeMode.NN,
                                    MatMulShape(batch=1, m=64, n=64, k=64))
        assert resolved.match == MATCH_EXACT
        assert resolved.key.algorithm_id == 1

    def test_nearest_log2_chebyshev(self):
        # log2(100) is 0.36 from log2(128) and 0.64 from log2(64)
        records = [mk_record(64, 64, 64, algorithm_id=1),
                   mk_record(128, 128, 128, algorithm_id=2)]
        resolver = ConfigResolver(records)
        resolved = resolver.resolve("matmul", DType.FP32, TransposeMode.NN,
                                    MatMulShape(batch=1, m=100, n=100, k=100))
        assert resolved.match == MATCH_NEAREST
        assert resolved.key.algorithm_id == 2
        assert resolved.distance == pytest.approx(
            np.log2(128) - np.log2(100), rel=1e-12)

    def test_tie_breaks_to_smaller_shape(self):
        # 96 is log2-equidistant from 64*1.5 and 96/1.5... use exact symmetry:
        # query 2^6.5 between 64 and 128 on every axis
        records = [mk_record(128, 128, 128, algorithm_id=2),
                   mk_record(64, 64, 64, algorithm_id=1)]
        resolver = ConfigResolver(records)
        q = round(2 ** 6.5)   # 91; |log2 91 - 6| = 0.508, vs 0.492 -> not a tie
        shape = MatMulShape(batch=1, m=q, n=q, k=q)
        first = resolver.resolve("matmul", DType.FP32, TransposeMode.NN, shape)
        # exact tie via duplicate-distance records: same (m,n,k), different batch
        records = [mk_record(64, 64, 64, batch=4, algorithm_id=3),
                   mk_record(64, 64, 64, batch=1, algorithm_id=1)]
        resolver = ConfigResolver(records)
        resolved = resolver.resolve("matmul", DType.FP32, TransposeMode.NN,
                                    MatMulShape(batch=2, m=200, n=200, k=200))
        assert resolved.key.algorithm_id == 1   # smaller batch wins the tie
        assert first.key.algorithm_id in (1, 2)

    def test_no_config_for_dtype(self):
        resolver = ConfigResolver([mk_record(64, 64, 64)])
        with pytest.raises(NoConfigAvailable):
            resolver.resolve("matmul", DType.BF16, TransposeMode.NN,
                             MatMulShape(batch=1, m=64, n=64, k=64))

    def test_resolve_config_wrapper(self):
        records = [mk_record(64, 64, 64, algorithm_id=9)]
        key = resolve_config("matmul", DType.FP32, TransposeMode.NN,
                             MatMulShape(batch=1, m=64, n=64, k=64),
                             ConfigResolver(records))
        assert key.algorithm_id == 9

    def test_ambiguous_records_rejected(self):
        records = [mk_record(64, 64, 64, algorithm_id=1),
                   mk_record(64, 64, 64, algorithm_id=2)]
        with pytest.raises(ValidationError, match="ambiguous"):
            ConfigResolver(records)

    def test_determinism(self):
        rng = np.random.default_rng(3)
        records = [mk_record(int(2 ** rng.integers(4, 12)),
                             int(2 ** rng.integers(4, 12)),
                             int(2 ** rng.integers(4, 12)),
                             algorithm_id=i)
                   for i in range(20)]
        resolver = ConfigResolver(records)
        shape = MatMulShape(batch=1, m=300, n=500, k=700)
        picks = {resolver.resolve("matmul", DType.FP32, TransposeMode.NN,
                                  shape).key for _ in range(10)}
        assert len(picks) == 1


class TestMonotonicity:
    def test_latency_nondecreasing_in_each_dim(self, fp32_dev, fp32_dataset, wm):
        rng = np.random.default_rng(17)
        plan = fp32_dev.plans[0]
        curve = fp32_dataset.curves[plan.key]
        for _ in range(300):
            b, m, n = (int(v) for v in rng.integers(1, 2048, size=3))
            k = int(rng.integers(32, 8192))
            base = predict_compute(MatMulShape(batch=b, m=m, n=n, k=k),
                                   plan.key, curve, wm).latency_us
            for bump in (dict(batch=b + int(rng.integers(1, 64))),
                         dict(m=m + int(rng.integers(1, 512))),
                         dict(n=n + int(rng.integers(1, 512))),
                         dict(k=k + int(rng.integers(1, 512)))):
                shape = MatMulShape(**{**dict(batch=b, m=m, n=n, k=k), **bump})
                bumped = predict_compute(shape, plan.key, curve, wm).latency_us
                assert bumped >= base
