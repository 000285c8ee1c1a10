import dataclasses
import json

import numpy as np
import pytest

from pm2lat import oracle
from pm2lat.core import DType, MatMulShape
from pm2lat.errors import (
    ConflictError,
    DeviceMismatch,
    ParseError,
    SchemaError,
    ValidationError,
)
from pm2lat.ingest import (
    Dataset,
    dataset_from_json_obj,
    dataset_to_json_obj,
    load_dataset,
    load_model_graph,
    merge_datasets,
    model_graph_from_json_obj,
    save_dataset,
)


@pytest.fixture()
def fixture_path(tmp_path, fp32_dataset_full):
    path = tmp_path / "fx.json"
    save_dataset(fp32_dataset_full, path)
    return path


class TestLoadDataset:
    def test_fixture_bundle(self, fixture_path):
        dataset = load_dataset(fixture_path)
        assert len(dataset.curves) == 13
        assert dataset.device.device_id == "synth-gpu-a"
        assert len(dataset.membound_records) == 3 * 32

    def test_roundtrip_identity(self, fixture_path, fp32_dataset_full):
        reloaded = load_dataset(fixture_path)
        assert dataset_to_json_obj(reloaded) == dataset_to_json_obj(fp32_dataset_full)
        assert reloaded.fingerprint() == fp32_dataset_full.fingerprint()

    def test_empty_file_is_parse_error(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        with pytest.raises(ParseError):
            load_dataset(path)

    def test_unsorted_samples_name_the_curve(self, tmp_path, fixture_path):
        obj = json.loads(fixture_path.read_text())
        samples = obj["curves"][2]["samples"]
        samples[0], samples[1] = samples[1], samples[0]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(obj))
        with pytest.raises(ValidationError, match="/curves/2"):
            load_dataset(bad)

    def test_missing_field_is_schema_error_with_path(self, tmp_path, fixture_path):
        obj = json.loads(fixture_path.read_text())
        del obj["curves"][0]["kernel"]["tile_m"]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(obj))
        with pytest.raises(SchemaError, match="tile_m"):
            load_dataset(bad)

    def test_unknown_fields_warn_but_load(self, tmp_path, fixture_path):
        obj = json.loads(fixture_path.read_text())
        obj["curves"][0]["collector_comment"] = "run 3, fan at 100%"
        obj["future_section"] = {"x": 1}
        extended = tmp_path / "ext.json"
        extended.write_text(json.dumps(obj))
        with pytest.warns(UserWarning, match="unknown fields"):
            dataset = load_dataset(extended)
        assert len(dataset.curves) == 13

    def test_unknown_schema_version_rejected(self, tmp_path, fixture_path):
        obj = json.loads(fixture_path.read_text())
        obj["schema_version"] = "2"
        bad = tmp_path / "v2.json"
        bad.write_text(json.dumps(obj))
        with pytest.raises(SchemaError, match="schema_version"):
            load_dataset(bad)

    def test_duplicate_curve_rejected(self, tmp_path, fixture_path):
        obj = json.loads(fixture_path.read_text())
        obj["curves"].append(dict(obj["curves"][0]))
        bad = tmp_path / "dup.json"
        bad.write_text(json.dumps(obj))
        with pytest.raises(ValidationError, match="duplicate curve"):
            load_dataset(bad)

    def test_curve_device_must_match(self, tmp_path, fixture_path):
        obj = json.loads(fixture_path.read_text())
        obj["curves"][0]["device_id"] = "other-gpu"
        bad = tmp_path / "mismatch.json"
        bad.write_text(json.dumps(obj))
        with pytest.raises(ValidationError, match="other-gpu"):
            load_dataset(bad)

    def test_bad_dtype_rejected(self, tmp_path, fixture_path):
        obj = json.loads(fixture_path.read_text())
        obj["curves"][0]["kernel"]["dtype"] = "fp64"
        bad = tmp_path / "dtype.json"
        bad.write_text(json.dumps(obj))
        with pytest.raises(ValidationError, match="fp64"):
            load_dataset(bad)


class TestMergeDatasets:
    def _split(self, dataset):
        keys = sorted(dataset.curves, key=lambda k: (k.family, k.algorithm_id))
        half = len(keys) // 2
        def subset(selected):
            selected = set(selected)
            return Dataset(
                device=dataset.device,
                curves={k: c for k, c in dataset.curves.items() if k in selected},
                config_map=tuple(r for r in dataset.config_map
                                 if r.chosen_key in selected),
                membound_records=dataset.membound_records,
            )
        return subset(keys[:half]), subset(keys[half:])

    def test_disjoint_union(self, fp32_dataset):
        a, b = self._split(fp32_dataset)
        merged = merge_datasets(a, b)
        assert len(merged.curves) == len(a.curves) + len(b.curves)
        assert len(merged.config_map) == len(a.config_map) + len(b.config_map)

    def test_idempotent(self, fp32_dataset):
        merged = merge_datasets(fp32_dataset, fp32_dataset)
        assert dataset_to_json_obj(merged) == dataset_to_json_obj(fp32_dataset)

    def test_conflicting_measurement_rejected(self, fp32_dataset):
        key = next(iter(fp32_dataset.curves))
        curve = fp32_dataset.curves[key]
        tampered_samples = list(curve.samples)
        tampered_samples[0] = dataclasses.replace(
            tampered_samples[0],
            throughput_gflops=tampered_samples[0].throughput_gflops * 1.01)
        tampered = dataclasses.replace(curve, samples=tuple(tampered_samples))
        other = Dataset(device=fp32_dataset.device, curves={key: tampered},
                        config_map=(), membound_records=())
        with pytest.raises(ConflictError):
            merge_datasets(fp32_dataset, other)

    def test_device_mismatch(self, fp32_dataset):
        other_dev = oracle.fp32_device(device_id="synth-gpu-b")
        other = oracle.emit_fixture(other_dev)
        with pytest.raises(DeviceMismatch):
            merge_datasets(fp32_dataset, other)

    def test_commutative_associative_on_disjoint(self, fp32_dataset):
        a, b = self._split(fp32_dataset)
        ab = merge_datasets(a, b)
        ba = merge_datasets(b, a)
        assert dataset_to_json_obj(ab) == dataset_to_json_obj(ba)
        b1, b2 = self._split(b)
        left = merge_datasets(merge_datasets(a, b1), b2)
        right = merge_datasets(a, merge_datasets(b1, b2))
        assert dataset_to_json_obj(left) == dataset_to_json_obj(right)


TRANSFORMER_BLOCK = {
    "model_name": "block",
    "batch_size": 8,
    "layers": [
        {"layer_id": "attn.q", "family": "linear", "dtype": "fp32",
         "shape": {"batch": 1, "m": 512, "n": 768, "k": 768}},
        {"layer_id": "attn.k", "family": "linear", "dtype": "fp32",
         "shape": {"batch": 1, "m": 512, "n": 768, "k": 768}},
        {"layer_id": "attn.v", "family": "linear", "dtype": "fp32",
         "shape": {"batch": 1, "m": 512, "n": 768, "k": 768}},
        {"layer_id": "attn.scores", "family": "batched_matmul", "dtype": "fp32",
         "shape": {"batch": 12, "m": 512, "n": 512, "k": 64}},
        {"layer_id": "attn.softmax", "family": "utility:softmax", "dtype": "fp32",
         "features": {"flops": 2.1e6, "int_ops": 4.0e5, "bytes_loaded": 8.4e6,
                      "bytes_stored": 4.2e6, "total_bytes_accessed": 1.26e7}},
        {"layer_id": "attn.out", "family": "linear", "dtype": "fp32",
         "shape": {"batch": 1, "m": 512, "n": 768, "k": 768}},
        {"layer_id": "mlp.up", "family": "linear", "dtype": "fp32",
         "shape": {"batch": 1, "m": 512, "n": 3072, "k": 768}},
        {"layer_id": "mlp.down", "family": "linear", "dtype": "fp32",
         "shape": {"batch": 1, "m": 512, "n": 768, "k": 3072}},
    ],
}


class TestModelGraph:
    def test_two_layer_order_preserved(self, tmp_path):
        obj = {"model_name": "tiny", "batch_size": 1, "layers": [
            {"layer_id": "fc", "family": "linear", "dtype": "fp32",
             "shape": {"batch": 1, "m": 64, "n": 64, "k": 64}},
            {"layer_id": "act", "family": "utility:softmax", "dtype": "fp32",
             "features": {"flops": 1e5, "int_ops": 1e4, "bytes_loaded": 4e5,
                          "bytes_stored": 4e5, "total_bytes_accessed": 8e5}},
        ]}
        path = tmp_path / "g.json"
        path.write_text(json.dumps(obj))
        graph = load_model_graph(path)
        assert [layer.layer_id for layer in graph.layers] == ["fc", "act"]
        assert all(layer.resolved_key is None for layer in graph.layers)

    def test_zero_layers_rejected(self):
        with pytest.raises(ValidationError):
            model_graph_from_json_obj(
                {"model_name": "m", "batch_size": 1, "layers": []})

    def test_duplicate_layer_id_rejected(self):
        layer = {"layer_id": "x", "family": "matmul", "dtype": "fp32",
                 "shape": {"batch": 1, "m": 8, "n": 8, "k": 8}}
        with pytest.raises(ValidationError, match="duplicate"):
            model_graph_from_json_obj(
                {"model_name": "m", "batch_size": 1, "layers": [layer, layer]})

    def test_transformer_block_has_eight_layers(self):
        graph = model_graph_from_json_obj(TRANSFORMER_BLOCK)
        assert len(graph.layers) == 8

    def test_unknown_family_loads(self):
        # dispatch failures are a prediction-time concern, not a load error
        graph = model_graph_from_json_obj(
            {"model_name": "m", "batch_size": 1, "layers": [
                {"layer_id": "c", "family": "conv2d", "dtype": "fp32",
                 "shape": {"batch": 1, "m": 8, "n": 8, "k": 8}}]})
        assert graph.layers[0].family == "conv2d"

    def test_layer_without_shape_or_features(self):
        with pytest.raises(SchemaError, match="shape"):
            model_graph_from_json_obj(
                {"model_name": "m", "batch_size": 1, "layers": [
                    {"layer_id": "x", "family": "matmul", "dtype": "fp32"}]})

    def test_graph_serialization_roundtrip(self):
        from pm2lat.ingest import model_graph_to_json_obj
        graph = model_graph_from_json_obj(TRANSFORMER_BLOCK)
        again = model_graph_from_json_obj(model_graph_to_json_obj(graph))
        assert again == graph
