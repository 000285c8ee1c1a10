import dataclasses

import numpy as np
import pytest

from pm2lat import oracle
from pm2lat.aggregate import (
    ErrorCase,
    ModelPredictor,
    build_error_report,
    predict_model,
    relative_error,
)
from pm2lat.core import (
    DType,
    LayerSpec,
    MatMulShape,
    MemBoundFeatures,
    ModelGraph,
    TransposeMode,
)
from pm2lat.errors import EmptyInput, UnresolvedLayer, ZeroMeasured
from pm2lat.ingest import model_graph_from_json_obj
from pm2lat.membound import MemBoundModel
from test_ingest import TRANSFORMER_BLOCK


def compute_layer(layer_id, plan, dim, batch_mult=1):
    shape = plan.collection_shape(dim)
    if batch_mult != 1:
        shape = MatMulShape(batch=shape.batch * batch_mult, m=shape.m,
                            n=shape.n, k=shape.k)
    return LayerSpec(layer_id=layer_id, family=plan.key.family,
                     dtype=plan.key.dtype, shape=shape,
                     transpose_mode=plan.key.transpose_mode)


def utility_layer(layer_id, seed=0):
    rng = np.random.default_rng(seed)
    return LayerSpec(layer_id=layer_id, family="utility:softmax",
                     dtype=DType.FP32, features=oracle.synth_features(rng))


class TestPredictModel:
    def test_single_layer_total(self, fp32_dev, fp32_dataset_full):
        layer = compute_layer("only", fp32_dev.plans[0], 512)
        graph = ModelGraph(model_name="one", layers=(layer,))
        result = predict_model(graph, fp32_dataset_full)
        assert result.total_latency_us == result.per_layer[0].prediction.latency_us

    def test_concat_additivity(self, fp32_dev, fp32_dataset_full):
        import math

        layers_a = tuple(compute_layer(f"a{i}", fp32_dev.plans[i], 256 + 64 * i)
                         for i in range(4))
        layers_b = tuple(compute_layer(f"b{i}", fp32_dev.plans[i + 4], 1024)
                         for i in range(3))
        result_a = predict_model(ModelGraph("a", layers_a), fp32_dataset_full)
        result_b = predict_model(ModelGraph("b", layers_b), fp32_dataset_full)
        total_ab = predict_model(ModelGraph("ab", layers_a + layers_b),
                                 fp32_dataset_full).total_latency_us
        assert total_ab == math.fsum(
            lp.prediction.latency_us
            for lp in result_a.per_layer + result_b.per_layer)

    def test_order_independence_of_total(self, fp32_dev, fp32_dataset_full):
        layers = [compute_layer(f"l{i}", fp32_dev.plans[i], 128 * (i + 1))
                  for i in range(6)]
        forward = predict_model(ModelGraph("f", tuple(layers)), fp32_dataset_full)
        reverse = predict_model(ModelGraph("r", tuple(reversed(layers))),
                                fp32_dataset_full)
        assert forward.total_latency_us == reverse.total_latency_us
        assert [lp.layer_id for lp in reverse.per_layer] == [
            f"l{i}" for i in reversed(range(6))]

    def test_mixed_graph_with_utility_layers(self, fp32_dev, fp32_dataset_full):
        graph = ModelGraph("mixed", (
            compute_layer("mm", fp32_dev.plans[0], 2048),
            utility_layer("act", seed=1),
            compute_layer("mm2", fp32_dev.plans[1], 512),
        ))
        result = predict_model(graph, fp32_dataset_full)
        kinds = [lp.predictor_kind for lp in result.per_layer]
        assert kinds == ["compute", "membound", "compute"]
        import math
        assert result.total_latency_us == math.fsum(
            lp.prediction.latency_us for lp in result.per_layer)

    def test_transformer_block_against_oracle(self, fp32_dev, fp32_dataset_full):
        graph = model_graph_from_json_obj(TRANSFORMER_BLOCK)
        result = predict_model(graph, fp32_dataset_full)
        assert len(result.per_layer) == 8
        predictor = ModelPredictor(fp32_dataset_full)
        truth = 0.0
        for layer, lp in zip(graph.layers, result.per_layer):
            if layer.family.startswith("utility:"):
                planted = next(p for p in oracle.DEFAULT_PLANTED_LINEARS
                               if p.kernel_name == "softmax")
                truth += max(planted.latency(layer.features), 2.0)
            else:
                transpose = layer.transpose_mode or (
                    TransposeMode.TN if layer.family == "linear" else TransposeMode.NN)
                resolved = predictor.resolver.resolve(
                    layer.family, layer.dtype, transpose, layer.shape)
                truth += oracle.true_duration(fp32_dev, resolved.key, layer.shape,
                                              predictor.wm)
        assert abs(result.total_latency_us - truth) / truth <= 0.03

    def test_unknown_family_aborts_with_layer_id(self, fp32_dataset_full):
        graph = model_graph_from_json_obj(
            {"model_name": "m", "batch_size": 1, "layers": [
                {"layer_id": "weird", "family": "conv2d", "dtype": "fp32",
                 "shape": {"batch": 1, "m": 8, "n": 8, "k": 8}}]})
        with pytest.raises(UnresolvedLayer, match="weird"):
            predict_model(graph, fp32_dataset_full)

    def test_missing_membound_data(self, fp32_dataset):
        graph = ModelGraph("m", (utility_layer("act"),))
        with pytest.raises(UnresolvedLayer, match="softmax"):
            predict_model(graph, fp32_dataset)   # fixture without records

    def test_prefitted_models_take_priority(self, fp32_dataset):
        # a deliberately wrong stored model must be used over refitting
        bogus = MemBoundModel("softmax", DType.FP32, (0, 0, 0, 0, 0), 123.0,
                              "synth-gpu-a", 0.0, 0.0)
        dataset = dataclasses.replace(
            oracle.with_membound_fixture(fp32_dataset),
            membound_models=(bogus,))
        result = predict_model(ModelGraph("m", (utility_layer("act"),)), dataset)
        assert result.per_layer[0].prediction.latency_us == 123.0

    def test_nearest_config_flagged(self, fp32_dataset_full):
        layer = LayerSpec(layer_id="odd", family="matmul", dtype=DType.FP32,
                          shape=MatMulShape(batch=1, m=333, n=555, k=777),
                          transpose_mode=TransposeMode.NN)
        result = predict_model(ModelGraph("m", (layer,)), fp32_dataset_full)
        assert ("odd", "nearest_config") in result.flags


class TestRelativeError:
    @pytest.mark.parametrize("measured,predicted,expected", [
        (100.0, 100.0, 0.0),
        (100.0, 110.0, 0.10),
        (200.0, 150.0, -0.25),
    ])
    def test_examples(self, measured, predicted, expected):
        assert relative_error(measured, predicted) == pytest.approx(expected, abs=1e-15)

    def test_zero_measured(self):
        with pytest.raises(ZeroMeasured):
            relative_error(0.0, 5.0)


class TestErrorReport:
    def test_all_zero_errors(self):
        cases = [ErrorCase(f"c{i}", 10.0 + i, 10.0 + i, axis_value=float(i))
                 for i in range(50)]
        report = build_error_report(cases)
        assert report.mean_abs_rel_err == 0.0
        assert report.histogram[0] == 50
        assert sum(report.histogram) == 50
        assert all(b.max_abs_rel_err in (None, 0.0) for b in report.binned_max)

    def test_singleton(self):
        report = build_error_report([ErrorCase("x", 10.0, 12.0, axis_value=3.0)])
        non_empty = [b for b in report.binned_max if b.count]
        assert len(non_empty) == 1
        assert non_empty[0].max_abs_rel_err == pytest.approx(0.2)

    def test_planted_outlier_lands_in_its_bin(self):
        rng = np.random.default_rng(9)
        cases = []
        for i in range(1000):
            axis = float(rng.uniform(0.0, 100.0))
            measured = 50.0
            predicted = measured * (1 + float(rng.uniform(-0.02, 0.02)))
            cases.append(ErrorCase(f"c{i}", measured, predicted, axis_value=axis))
        outlier_axis = 43.21
        cases.append(ErrorCase("outlier", 100.0, 112.0, axis_value=outlier_axis))
        report = build_error_report(cases, bins=100)
        width = (report.axis_max - report.axis_min) / 100
        idx = min(int((outlier_axis - report.axis_min) / width), 99)
        assert report.binned_max[idx].max_abs_rel_err == pytest.approx(0.12)

    def test_bins_partition_axis_exactly(self):
        cases = [ErrorCase(f"c{i}", 10.0, 11.0, axis_value=float(i))
                 for i in range(10)]
        report = build_error_report(cases, bins=4)
        assert report.binned_max[0].lo == report.axis_min
        assert report.binned_max[-1].hi == report.axis_max
        for left, right in zip(report.binned_max, report.binned_max[1:]):
            assert left.hi == right.lo
        assert sum(b.count for b in report.binned_max) == 10

    def test_empty_bins_are_none_not_zero(self):
        cases = [ErrorCase("a", 10.0, 10.0, axis_value=0.0),
                 ErrorCase("b", 10.0, 15.0, axis_value=100.0)]
        report = build_error_report(cases, bins=10)
        middles = report.binned_max[1:-1]
        assert all(b.max_abs_rel_err is None and b.count == 0 for b in middles)

    def test_overflow_bucket(self):
        cases = [ErrorCase("huge", 10.0, 30.0, axis_value=0.0),
                 ErrorCase("ok", 10.0, 10.1, axis_value=1.0)]
        report = build_error_report(cases)
        assert report.histogram[-1] == 1
        assert sum(report.histogram) == 2

    def test_mean_equals_arithmetic_mean(self):
        rng = np.random.default_rng(10)
        cases = [ErrorCase(f"c{i}", float(m), float(p), axis_value=float(i))
                 for i, (m, p) in enumerate(zip(rng.uniform(1, 100, 200),
                                                rng.uniform(1, 100, 200)))]
        report = build_error_report(cases)
        manual = sum(abs((p - m) / m) for _, m, p, _ in report.records) / 200
        assert abs(report.mean_abs_rel_err - manual) <= 1e-12

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            build_error_report([])

    def test_csv_output(self):
        report = build_error_report([ErrorCase("x", 10.0, 12.0, axis_value=0.0)])
        lines = report.to_csv().strip().splitlines()
        assert lines[0] == "case_id,measured_us,predicted_us,signed_rel_err"
        assert lines[1].startswith("x,10.0,12.0,")
