import json
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from docconf.geometry import InvalidGeometryError, Polygon
from docconf.io import (
    ManifestEntry,
    ManifestError,
    ParseError,
    SchemaError,
    config_digest,
    dump_polygons,
    encode_probability_map,
    load_manifest,
    load_polygons,
    load_probability_map,
    parse_polygons,
    read_csv,
    render_csv,
    save_manifest,
    save_polygons,
    save_probability_map,
    write_csv,
)
from docconf.postprocess import ProbabilityMap

from helpers import ground_truth, prediction, rect_poly


class TestProbabilityMap:
    def test_round_trip(self, tmp_path):
        m = ProbabilityMap(np.array([[0.0, 0.5], [1.0, 0.25]]))
        save_probability_map(m, tmp_path / "a.pmap")
        back = load_probability_map(tmp_path / "a.pmap")
        np.testing.assert_array_equal(back.values, m.values)

    def test_layout(self):
        data = encode_probability_map(ProbabilityMap(np.full((2, 3), 0.5)))
        assert data[:4] == b"PMAP" and len(data) == 16 + 4 * 6
        assert struct.unpack_from("<HHII", data, 4) == (1, 0, 2, 3)

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_float32_values_exact(self, h, w, seed):
        v = np.random.default_rng(seed).random((h, w)).astype(np.float32).astype(np.float64)
        back = load_probability_map_bytes(encode_probability_map(ProbabilityMap(v)))
        np.testing.assert_array_equal(back.values, v)

    def test_unknown_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"XMAP" + bytes(20))
        with pytest.raises(ParseError, match="XMAP") as err:
            load_probability_map(tmp_path / "x")
        assert err.value.offset == 0

    def test_bad_version(self, tmp_path):
        (tmp_path / "v").write_bytes(struct.pack("<4sHHII", b"PMAP", 7, 0, 1, 1) + bytes(4))
        with pytest.raises(ParseError, match="version 7") as err:
            load_probability_map(tmp_path / "v")
        assert err.value.offset == 4

    def test_truncated(self, tmp_path):
        (tmp_path / "t").write_bytes(struct.pack("<4sHHII", b"PMAP", 1, 0, 2, 2) + bytes(8))
        with pytest.raises(ParseError, match="size mismatch"):
            load_probability_map(tmp_path / "t")

    def test_out_of_range_offset(self, tmp_path):
        vals = np.array([0.1, 0.2, 1.5], dtype="<f4").tobytes()
        (tmp_path / "r").write_bytes(struct.pack("<4sHHII", b"PMAP", 1, 0, 1, 3) + vals)
        with pytest.raises(ParseError) as err:
            load_probability_map(tmp_path / "r")
        assert err.value.offset == 16 + 8 and "r" in err.value.path

    def test_pgm_binary(self, tmp_path):
        (tmp_path / "g.pgm").write_bytes(b"P5\n# c\n2 1\n255\n" + bytes([128, 255]))
        m = load_probability_map(tmp_path / "g.pgm")
        np.testing.assert_array_equal(m.values, [[128 / 255, 1.0]])

    def test_pgm_text_maxval(self, tmp_path):
        (tmp_path / "g.pgm").write_bytes(b"P2 2 2 4\n0 1\n2 4\n")
        np.testing.assert_array_equal(load_probability_map(tmp_path / "g.pgm").values, [[0, 0.25], [0.5, 1]])

    def test_pgm_errors(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P5 2 1 255\n" + bytes([1]))
        with pytest.raises(ParseError, match="payload"):
            load_probability_map(tmp_path / "a.pgm")
        (tmp_path / "b.pgm").write_bytes(b"P5 2 1 100\n" + bytes([1, 101]))
        with pytest.raises(ParseError, match="exceeds") as err:
            load_probability_map(tmp_path / "b.pgm")
        assert err.value.offset == 12
        (tmp_path / "c.pgm").write_bytes(b"P2 2 x")
        with pytest.raises(ParseError, match="integer"):
            load_probability_map(tmp_path / "c.pgm")


def load_probability_map_bytes(data):
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "m.pmap"
        p.write_bytes(data)
        return load_probability_map(p)


class TestPolygons:
    def test_prediction_round_trip(self, tmp_path):
        tri = Polygon.from_coords([(0.5, 0.25), (9.125, 1.0), (3.0, 7.75)])
        p = prediction([rect_poly(1, 1, 8, 5), tri], [0.8125, 0.3])
        save_polygons(p, tmp_path / "p.json", meta={"tool": "x"})
        assert load_polygons(tmp_path / "p.json") == p

    def test_ground_truth_round_trip(self, tmp_path):
        g = ground_truth([rect_poly(1, 1, 8, 5)])
        save_polygons(g, tmp_path / "g.json")
        assert load_polygons(tmp_path / "g.json") == g
        with pytest.raises(SchemaError, match="mean_prob"):
            load_polygons(tmp_path / "g.json", kind="prediction")

    def test_optional_fields_derived(self):
        p = prediction([rect_poly(2, 2, 6, 4)], [0.5])
        doc = json.loads(dump_polygons(p))
        for key in ("pixel_area", "bbox"):
            del doc["objects"][0][key]
        assert parse_polygons(doc) == p

    def test_missing_objects(self):
        with pytest.raises(SchemaError) as err:
            parse_polygons({"image_id": "a", "height": 3, "width": 3})
        assert err.value.field == "$.objects"

    def test_wrong_type(self):
        with pytest.raises(SchemaError, match=r"\$\.height"):
            parse_polygons({"image_id": "a", "height": "3", "width": 3, "objects": []})

    def test_bad_prob(self):
        doc = {"image_id": "a", "height": 9, "width": 9,
               "objects": [{"polygon": [[0, 0], [4, 0], [4, 4]], "mean_prob": 1.5}]}
        with pytest.raises(SchemaError, match="mean_prob"):
            parse_polygons(doc)

    def test_two_vertices(self):
        doc = {"image_id": "a", "height": 9, "width": 9, "objects": [{"polygon": [[0, 0], [4, 0]]}]}
        with pytest.raises(InvalidGeometryError, match=r"objects\[0\]"):
            parse_polygons(doc)

    def test_invalid_json(self, tmp_path):
        (tmp_path / "bad.json").write_text("{\n  nope")
        with pytest.raises(ParseError, match="line 2"):
            load_polygons(tmp_path / "bad.json")


def _map_file(path):
    save_probability_map(ProbabilityMap(np.zeros((2, 2))), path)
    return path


class TestManifest:
    def test_round_trip(self, tmp_path):
        (tmp_path / "m").mkdir()
        maps = tuple(_map_file(tmp_path / "m" / f"{i}.pmap") for i in range(3))
        save_polygons(ground_truth([], 2, 2), tmp_path / "gt.json")
        e = ManifestEntry("a", 2, 2, maps, tmp_path / "gt.json")
        save_manifest([e], tmp_path / "manifest.json")
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["entries"][0]["maps"][0] == "m/0.pmap"
        loaded = load_manifest(tmp_path / "manifest.json")
        assert loaded.entries == (e,) and loaded.entries[0].n_members == 3

    def test_reports_every_problem(self, tmp_path):
        _map_file(tmp_path / "ok.pmap")
        doc = {"entries": [
            {"image_id": "a", "height": 2, "width": 2, "maps": ["ok.pmap"]},
            {"image_id": "a", "height": 0, "width": 2, "maps": ["ok.pmap"]},
            {"image_id": "b", "height": 2, "width": 2, "maps": ["gone.pmap"]},
            {"image_id": "c", "height": 2, "width": 2},
            {"image_id": "d", "height": 2, "width": 2, "maps": ["ok.pmap"], "predictions": []},
        ]}
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ManifestError) as err:
            load_manifest(tmp_path / "m.json")
        text = "\n".join(err.value.problems)
        assert len(err.value.problems) == 4
        for needle in ("duplicate id 'a'", "entries[1].height", "missing file gone.pmap", "entries[3]"):
            assert needle in text

    def test_empty(self, tmp_path):
        (tmp_path / "m.json").write_text('{"entries": []}')
        with pytest.raises(ManifestError, match="no images"):
            load_manifest(tmp_path / "m.json")


class TestCsv:
    META = {"tool": "docconf", "seed": 3, "skipped": None}

    def test_format(self):
        text = render_csv(["a", "b", "c"], [[0.1, True, "x"], [float("nan"), 2, "y,z"]], self.META)
        assert text == '# tool: docconf\n# seed: 3\na,b,c\n0.1,true,x\nnan,2,"y,z"\n'

    def test_round_trip(self, tmp_path):
        rows = [[1 / 3, "p"], [2.5e-17, "q"]]
        write_csv(tmp_path / "t.csv", ["v", "id"], rows, self.META)
        meta, back = read_csv(tmp_path / "t.csv")
        assert meta == {"tool": "docconf", "seed": "3"}
        assert [float(r["v"]) for r in back] == [1 / 3, 2.5e-17]

    def test_deterministic_bytes(self, tmp_path):
        for name in ("a", "b"):
            write_csv(tmp_path / name, ["v"], [[0.1 + 0.2]], self.META)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_digest(self):
        assert config_digest({"a": 1, "b": [2]}) == config_digest({"b": [2], "a": 1})
        assert config_digest({"a": 1}) != config_digest({"a": 2})
        assert len(config_digest({})) == 16
