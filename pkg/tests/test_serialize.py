import json

import numpy as np
import pytest

from advunfold.data import gen_cs_dataset
from advunfold.serialize import (
    FileFormatError,
    format_float,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
    write_csv,
)
from advunfold.solvers import LassoObjective, init_classical_admm, init_classical_pgd


def make_model(rng, kind="pgd"):
    a = rng.normal(size=(5, 3))
    obj = LassoObjective(a, 0.123456789012345)
    if kind == "pgd":
        return init_classical_pgd(obj, T=2)
    return init_classical_admm(obj, lam=0.7, T=2)


class TestModelRoundTrip:
    @pytest.mark.parametrize("kind", ["pgd", "admm"])
    def test_bit_exact_round_trip(self, tmp_path, kind):
        rng = np.random.default_rng(0)
        model = make_model(rng, kind)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == model.kind
        assert loaded.lam == model.lam
        for got, want in zip(loaded.layers, model.layers):
            assert got.mu == want.mu
            assert got.prox_tau == want.prox_tau
            np.testing.assert_array_equal(got.M, want.M)
            np.testing.assert_array_equal(got.B, want.B)

    def test_save_load_save_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        model = make_model(rng)
        p1 = tmp_path / "m1.json"
        p2 = tmp_path / "m2.json"
        save_model(model, p1)
        save_model(load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_schema_version_rejected(self, tmp_path):
        rng = np.random.default_rng(2)
        model = make_model(rng)
        path = tmp_path / "model.json"
        save_model(model, path)
        raw = json.loads(path.read_text())
        del raw["schema_version"]
        path.write_text(json.dumps(raw))
        with pytest.raises(FileFormatError, match="schema-version"):
            load_model(path)

    def test_mismatched_layer_shapes_named(self, tmp_path):
        rng = np.random.default_rng(3)
        model = make_model(rng)
        path = tmp_path / "model.json"
        save_model(model, path)
        raw = json.loads(path.read_text())
        raw["layers"][1]["B"] = [[1.0, 2.0], [3.0, 4.0]]
        path.write_text(json.dumps(raw))
        with pytest.raises(FileFormatError, match="layer 1"):
            load_model(path)

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"schema_version": 1,\n  "kind": }')
        with pytest.raises(FileFormatError, match="line 2"):
            load_model(path)


class TestDatasetRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        data = gen_cs_dataset(4, 6, 2, 3, seed=9)
        path = tmp_path / "data.json"
        save_dataset(data, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.a, data.a)
        np.testing.assert_array_equal(loaded.xs, data.xs)
        np.testing.assert_array_equal(loaded.ss, data.ss)
        assert loaded.seed == data.seed
        assert loaded.k == data.k

    def test_save_load_save_identical_bytes(self, tmp_path):
        data = gen_cs_dataset(4, 6, 2, 3, seed=10)
        p1 = tmp_path / "d1.json"
        p2 = tmp_path / "d2.json"
        save_dataset(data, p1)
        save_dataset(load_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_pair_shape_validated(self, tmp_path):
        data = gen_cs_dataset(4, 6, 2, 2, seed=11)
        path = tmp_path / "data.json"
        save_dataset(data, path)
        raw = json.loads(path.read_text())
        raw["pairs"][1]["x"] = [1.0, 2.0]
        path.write_text(json.dumps(raw))
        with pytest.raises(FileFormatError, match="pair 1"):
            load_dataset(path)


class TestCsv:
    def test_seventeen_significant_digits(self, tmp_path):
        path = tmp_path / "out.csv"
        value = 0.1 + 0.2  # not exactly representable; needs 17 digits
        write_csv(path, ["a", "b"], [[1, value]])
        text = path.read_text()
        assert text.splitlines()[0] == "a,b"
        recovered = float(text.splitlines()[1].split(",")[1])
        assert recovered == value

    def test_format_float_round_trips(self):
        rng = np.random.default_rng(12)
        for v in rng.normal(size=50):
            assert float(format_float(v)) == v

    def test_no_temp_files_left_behind(self, tmp_path):
        path = tmp_path / "out.csv"
        write_csv(path, ["x"], [[1.0]])
        leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
        assert leftovers == []
