import json

import numpy as np
import pytest

from confield import cli, reporting


KILLING = {
    "n": 3,
    "gram": [[-1, 0, 0], [0, 1, 0], [0, 0, 1]],
    "w": [0, 0, 0],
    "S": [[0, 0, 0], [0, 0, 1], [0, -1, 0]],
    "c": 0,
    "u": [0, 0, 0],
    "seeds": 1200,
    "seed": 4,
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestConfigSchema:
    def test_unknown_keys_rejected(self, tmp_path):
        cfg = dict(KILLING)
        cfg["bogus"] = 1
        assert cli.main(["verify", write_config(tmp_path, cfg)]) == 2

    def test_missing_keys_rejected(self, tmp_path):
        cfg = dict(KILLING)
        del cfg["gram"]
        assert cli.main(["verify", write_config(tmp_path, cfg)]) == 2

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        assert cli.main(["verify", str(path)]) == 2

    def test_asymmetric_gram_rejected(self, tmp_path):
        cfg = dict(KILLING)
        cfg["gram"] = [[0, 1, 0], [2, 0, 0], [0, 0, 1]]
        assert cli.main(["verify", write_config(tmp_path, cfg)]) == 2

    def test_inconsistent_shapes_rejected(self, tmp_path):
        cfg = dict(KILLING)
        cfg["w"] = [0, 0]
        assert cli.main(["verify", write_config(tmp_path, cfg)]) == 2

    def test_nonpositive_tolerance_rejected(self, tmp_path):
        cfg = dict(KILLING)
        cfg["tolerances"] = {"model_tol": -1.0}
        assert cli.main(["verify", write_config(tmp_path, cfg)]) == 2

    def test_nonpositive_radius_rejected(self, tmp_path):
        cfg = dict(KILLING)
        cfg["radius"] = 0.0
        assert cli.main(["verify", write_config(tmp_path, cfg)]) == 2


class TestVerify:
    def test_killing_config_passes(self, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main(["verify", write_config(tmp_path, KILLING),
                         "--out", str(out)])
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["pass"] is True
        names = [c["name"] for c in rep["checks"]]
        assert names[0] == "conformality"
        assert "model-comparison" in names
        assert all("anchor" in c and "tol" in c and "value" in c
                   for c in rep["checks"])

    def test_report_round_trips(self, tmp_path):
        out = tmp_path / "report.json"
        cli.main(["verify", write_config(tmp_path, KILLING), "--out", str(out)])
        text = out.read_text()
        parsed = json.loads(text)
        again = reporting.dumps(parsed) + "\n"
        assert json.loads(again) == parsed

    def test_determinism_byte_identical(self, tmp_path):
        out1 = tmp_path / "r1.json"
        out2 = tmp_path / "r2.json"
        cfg = write_config(tmp_path, KILLING)
        assert cli.main(["verify", cfg, "--out", str(out1)]) == 0
        assert cli.main(["verify", cfg, "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestClassify:
    def test_zero_point(self, tmp_path, capsys):
        code = cli.main(["classify", write_config(tmp_path, KILLING),
                         "--point", "0,0,0"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        notes = " ".join(rep["checks"][0]["witnesses"])
        assert "case i" in notes and "essential False" in notes

    def test_non_zero_point_exits_one(self, tmp_path, capsys):
        code = cli.main(["classify", write_config(tmp_path, KILLING),
                         "--point", "0,0.5,0"])
        assert code == 1
        rep = json.loads(capsys.readouterr().out)
        assert rep["checks"][0]["pass"] is False
        assert rep["checks"][0]["value"] > 0  # the offending residual

    def test_missing_point_is_usage_error(self, tmp_path):
        assert cli.main(["classify", write_config(tmp_path, KILLING)]) == 2


class TestZeroset:
    def test_killing_csv(self, tmp_path, capsys):
        out = tmp_path / "zeros.csv"
        cfg = dict(KILLING)
        cfg["seeds"] = 500
        code = cli.main(["zeroset", write_config(tmp_path, cfg),
                         "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "x1,x2,x3,residual"
        assert len(lines) > 10
        for row in lines[1:]:
            vals = [float(t) for t in row.split(",")]
            assert abs(vals[1]) <= 1e-8 and abs(vals[2]) <= 1e-8

    def test_dilation_single_row(self, tmp_path):
        cfg = {"n": 3, "gram": np.eye(3, dtype=int).tolist(), "w": [0, 0, 0],
               "S": np.zeros((3, 3), dtype=int).tolist(), "c": 1, "u": [0, 0, 0],
               "seeds": 300, "seed": 1}
        out = tmp_path / "zeros.csv"
        assert cli.main(["zeroset", write_config(tmp_path, cfg),
                         "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 2

    def test_zero_free_field_gives_empty_csv(self, tmp_path):
        cfg = {"n": 3, "gram": np.eye(3, dtype=int).tolist(), "w": [1, 0, 0],
               "S": np.zeros((3, 3), dtype=int).tolist(), "c": 0, "u": [0, 0, 0],
               "seeds": 200, "seed": 1}
        out = tmp_path / "zeros.csv"
        assert cli.main(["zeroset", write_config(tmp_path, cfg),
                         "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines == ["x1,x2,x3,residual"]

    def test_unwritable_path_exits_two(self, tmp_path):
        assert cli.main(["zeroset", write_config(tmp_path, KILLING),
                         "--out", "/nonexistent-dir/zeros.csv"]) == 2


class TestPropagate:
    def test_trajectory_csv_and_terminal_check(self, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        code = cli.main(["propagate", write_config(tmp_path, KILLING),
                         "--x0", "0,0.3,0", "--xdot", "1,1,0",
                         "--t1", "1", "--steps", "200", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("t,x1,x2,x3,v1")
        assert len(lines) == 202
        rep = json.loads(capsys.readouterr().out)
        assert rep["checks"][0]["name"] == "geodesic-transport"
        assert rep["checks"][0]["pass"] is True

    def test_missing_velocity_is_usage_error(self, tmp_path):
        assert cli.main(["propagate", write_config(tmp_path, KILLING)]) == 2


class TestDemo:
    def test_unknown_name_exits_two_and_lists_registry(self, capsys):
        assert cli.main(["demo", "no-such-example"]) == 2
        err = capsys.readouterr().err
        assert "dilation" in err and "surface-2d" in err

    def test_surface_2d(self, tmp_path, capsys):
        code = cli.main(["demo", "surface-2d"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["pass"] is True

    def test_killing_block_demo_case_i(self, tmp_path, capsys):
        code = cli.main(["demo", "killing-block", "--seeds", "1000"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        cls = next(c for c in rep["checks"] if c["name"] == "classification")
        assert any("case i" in w for w in cls["witnesses"])

    def test_cone_demo_detects_singular_vertex(self, tmp_path, capsys):
        code = cli.main(["demo", "case-b-cone-22", "--seeds", "12000"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        sing = next(c for c in rep["checks"] if c["name"] == "singular-set")
        assert sing["pass"] is True
        assert sing["value"] >= 1  # flagged vertex points


class TestFloatFormatting:
    def test_seventeen_digit_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            x = float(rng.standard_normal() * 10.0 ** rng.integers(-300, 300))
            assert float(reporting.format_float(x)) == x

    def test_csv_numbers_round_trip(self):
        rng = np.random.default_rng(1)
        row = [float(x) for x in rng.standard_normal(5)]
        text = reporting.csv_lines(["a", "b", "c", "d", "e"], [row])
        line = text.splitlines()[1]
        assert [float(t) for t in line.split(",")] == row
        assert text.endswith("\n")
        assert "." in line and "," in line
