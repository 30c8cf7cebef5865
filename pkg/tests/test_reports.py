import json
import math

import numpy as np
import pytest

from reports import build_id, canonical_json, format_cell, plan_hash, write_csv, write_json, write_svg


@pytest.mark.parametrize("value,text", [
    (None, ""),
    (True, "true"),
    (np.bool_(False), "false"),
    (7, "7"),
    (np.int64(-3), "-3"),
    (0.1, "0.1"),
    (1.0 / 3.0, "0.333333333333"),
    (np.float32(0.5), "0.5"),
    (1e-20, "1e-20"),
    (math.nan, "nan"),
    (math.inf, "inf"),
    (-math.inf, "-inf"),
    ("pass", "pass"),
])
def test_format_cell(value, text):
    assert format_cell(value) == text


def test_csv_bytes(tmp_path):
    path = write_csv(tmp_path / "sub" / "t.csv", ("a", "b", "seed"),
                     [{"a": 1, "b": 0.5}, {"a": None, "b": True, "extra": 9}],
                     {"seed": 3, "plan_hash": "abc"})
    assert path.read_bytes() == b"a,b,seed,plan_hash\n1,0.5,3,abc\n,true,3,abc\n"


def test_csv_row_values_win_over_provenance(tmp_path):
    path = write_csv(tmp_path / "t.csv", ("seed",), [{"seed": 5}], {"seed": 3})
    assert path.read_text() == "seed\n5\n"


def test_plan_hash_is_order_independent():
    a = plan_hash({"x": 1, "y": [1.5, "z"], "arr": np.arange(3)})
    b = plan_hash({"arr": [0, 1, 2], "y": [1.5, "z"], "x": 1})
    assert a == b
    assert len(a) == 12
    assert plan_hash({"x": 2}) != plan_hash({"x": 1})


def test_canonical_json_rejects_objects():
    assert canonical_json({"b": 1, "a": np.float64(0.5)}) == '{"a":0.5,"b":1}'
    with pytest.raises(TypeError):
        canonical_json({"a": object()})


def test_json_writer(tmp_path):
    path = write_json(tmp_path / "r.json", {"b": np.array([1, 2]), "a": np.int32(4)})
    text = path.read_text()
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": 4, "b": [1, 2]}


def test_svg_is_deterministic(tmp_path):
    one = {"k=2": [(10.0, 1.0), (1.0, 2.0)], "k=1": [(1.0, 3.0), (100.0, 0.5)]}
    two = {"k=1": [(100.0, 0.5), (1.0, 3.0)], "k=2": [(1.0, 2.0), (10.0, 1.0)]}
    a = write_svg(tmp_path / "a.svg", one, title="rho <k>", logx=True, logy=True).read_bytes()
    b = write_svg(tmp_path / "b.svg", two, title="rho <k>", logx=True, logy=True).read_bytes()
    assert a == b
    assert b"rho &lt;k&gt;" in a
    assert a.count(b"<polyline") == 2


def test_svg_drops_unplottable_points(tmp_path):
    series = {"s": [(1.0, 0.0), (2.0, math.nan), (-1.0, 1.0)], "t": [(1.0, 1.0), (2.0, 2.0)]}
    text = write_svg(tmp_path / "c.svg", series, logx=True, logy=True).read_text()
    assert text.count("<polyline") == 1
    assert text.startswith("<svg") and text.endswith("</svg>\n")


def test_build_id():
    assert build_id()
    assert build_id() == build_id()
