import json

import numpy as np
import pytest

from phinehari.errors import ConfigError
from phinehari.grid import Field, Weight, build_grid
from phinehari.io import (
    read_field_csv,
    read_json,
    read_jsonl,
    to_jsonable,
    write_field_csv,
    write_json,
    write_jsonl,
    write_table_csv,
)


class TestJson:
    def test_sorted_and_null(self, tmp_path):
        path = write_json(tmp_path / "a.json", {"b": np.float64(np.nan), "a": np.int64(3), "c": np.arange(2)})
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"') < text.index('"c"')
        assert read_json(path) == {"a": 3, "b": None, "c": [0, 1]}

    def test_floats_roundtrip_exactly(self, tmp_path):
        x = 0.1 + 0.2
        assert read_json(write_json(tmp_path / "x.json", {"x": x}))["x"] == x

    def test_byte_identical(self, tmp_path):
        obj = {"z": [1.5, np.inf], "y": {"k": True}}
        a = write_json(tmp_path / "a.json", obj).read_bytes()
        b = write_json(tmp_path / "b.json", dict(reversed(list(obj.items())))).read_bytes()
        assert a == b

    def test_jsonable_types(self):
        out = to_jsonable({1: (np.bool_(True), np.float32(0.5))})
        assert out == {"1": [True, 0.5]}
        assert type(out["1"][0]) is bool

    def test_jsonl(self, tmp_path):
        recs = [{"iter": 0, "J": 1.0}, {"iter": 1, "J": float("nan")}]
        path = write_jsonl(tmp_path / "t.jsonl", recs)
        lines = path.read_text().splitlines()
        assert len(lines) == 2 and json.loads(lines[1])["J"] is None
        assert read_jsonl(path)[0] == recs[0]


class TestFieldCsv:
    @pytest.mark.parametrize("dim,n", [(1, 6), (2, 5), (3, 4)])
    def test_field_roundtrip(self, tmp_path, dim, n):
        g = build_grid(dim, n)
        u = Field(g, np.random.default_rng(dim).standard_normal(g.shape))
        back = read_field_csv(write_field_csv(tmp_path / "u.csv", u))
        assert isinstance(back, Field)
        np.testing.assert_array_equal(back.values, u.values)
        assert read_json(tmp_path / "u.json") == {"dim": dim, "nodes_per_axis": n, "kind": "field"}

    def test_weight_roundtrip(self, tmp_path):
        g = build_grid(2, 5)
        w = Weight(g, np.linspace(-1, 1, 16).reshape(4, 4))
        back = read_field_csv(write_field_csv(tmp_path / "w.csv", w))
        assert isinstance(back, Weight)
        np.testing.assert_array_equal(back.values, w.values)

    def test_rows_follow_first_axis(self, tmp_path):
        g = build_grid(2, 3)
        vals = np.zeros(g.shape)
        vals[1, 1] = 2.5
        path = write_field_csv(tmp_path / "u.csv", Field(g, vals))
        assert path.read_text().splitlines()[1] == "0,2.5,0"

    def test_size_mismatch(self, tmp_path):
        g = build_grid(2, 5)
        path = write_field_csv(tmp_path / "u.csv", Field(g, np.ones(g.shape)))
        write_json(tmp_path / "u.json", {"dim": 2, "nodes_per_axis": 6, "kind": "field"})
        with pytest.raises(ConfigError):
            read_field_csv(path)

    def test_rejects_arrays(self, tmp_path):
        with pytest.raises(ConfigError):
            write_field_csv(tmp_path / "u.csv", np.ones(3))


class TestTableCsv:
    def test_formatting(self, tmp_path):
        path = write_table_csv(tmp_path / "t.csv", {
            "lambda": [0.5, 0.25], "ok": [True, False], "n": [np.int64(3), 4], "err": [None, "x"],
            "v": [float("nan"), 1e-300],
        })
        assert path.read_text().splitlines() == ["lambda,ok,n,err,v", "0.5,true,3,,", "0.25,false,4,x,1e-300"]
