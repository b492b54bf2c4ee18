import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from exsteklov import cli
from exsteklov import mesh as M


def _bare_numbers(obj, path="", in_value=False):
    """Paths of numbers that are not the value of a {value, units} pair."""
    out = []
    if isinstance(obj, dict):
        quantity = {"value", "units"} <= set(obj)
        for k, v in obj.items():
            out += _bare_numbers(v, f"{path}.{k}", quantity and k == "value")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            out += _bare_numbers(v, f"{path}[{i}]", in_value)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool) and not in_value:
        out.append(path)
    return out


def _run(tmp_path, *argv, name="out.json"):
    p = tmp_path / name
    code = cli.run_command([*argv, "-o", str(p)])
    return code, (json.loads(p.read_text()) if p.exists() else None), p


@pytest.fixture(scope="module")
def dented_off(tmp_path_factory):
    """Star-shaped sphere with a deep dent: negative mean curvature."""
    m = M.make_icosphere(1.0, 3)
    v = m.vertices
    r = 1 - 0.35 * np.exp(-np.sum((v - [0, 0, 1]) ** 2, axis=1) / 0.08)
    p = tmp_path_factory.mktemp("dent") / "dent.off"
    M.write_off(M.validate_mesh(v * r[:, None], m.faces), p)
    return p


def test_ball_json(tmp_path):
    code, out, _ = _run(tmp_path, "ball", "--dim", "3", "--radius", "1", "--count", "4")
    assert code == 0
    assert out["eigenvalues"]["value"] == [1, 2, 2, 2]
    assert out["eigenvalues"]["units"] == "1/length"
    assert out["schema_version"] == cli.SCHEMA_VERSION
    assert _bare_numbers(out) == []


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["ball", "--dim", "2"],
    ["ball", "--radius", "-1"],
    ["analyze"],
    ["analyze", "x.off", "--generate", "icosphere"],
    ["analyze", "--generate", "blob"],
    ["analyze", "--generate", "icosphere:size=3"],
    ["analyze", "--generate", "icosphere", "--rigidity", "0"],
    ["imcf", "--generate", "icosphere", "--time", "-1"],
    ["capacity", "/nonexistent/mesh.off"],
])
def test_usage_errors(argv, capsys):
    assert cli.run_command(argv) == 1
    assert capsys.readouterr().err


def test_gate_error_is_exit_one(capsys):
    assert cli.run_command(["imcf", "--generate", "dumbbell", "--time", "0"]) == 1
    assert "StarShapeRequired" in capsys.readouterr().err


def test_analyze_sphere_and_determinism(tmp_path):
    argv = ["analyze", "--generate", "icosphere:subdivisions=2"]
    code1, out, p1 = _run(tmp_path, *argv, name="a.json")
    code2, _, p2 = _run(tmp_path, *argv, name="b.json")
    assert code1 == code2 == 0
    assert p1.read_bytes() == p2.read_bytes()
    assert out["violations"] == []
    statuses = {c["id"]: c["status"] for c in out["checks"]}
    assert all(s == "near_equality" for k, s in statuses.items() if k != "radial_field_identity")
    assert _bare_numbers(out) == []


def test_analyze_violation_exit_two(tmp_path):
    code, out, _ = _run(tmp_path, "analyze", "--generate", "icosphere:subdivisions=2", "--slack-bem", "1e-9")
    assert code == 2
    assert out["violations"]


def test_analyze_torus_gates(tmp_path):
    code, out, _ = _run(tmp_path, "analyze", "--generate", "torus:n_major=24,n_minor=12")
    assert code == 0
    skipped = [c for c in out["checks"] if c["status"] == "skipped(gate)"]
    assert skipped and all(c["reason"] for c in skipped)
    assert out["flags"]["genus"]["value"] == 1


def test_mesh_file_input(tmp_path):
    off = tmp_path / "ico.off"
    assert cli.run_command(["gen", "icosphere", "subdivisions=2", "-o", str(off)]) == 0
    code, out, _ = _run(tmp_path, "steklov", str(off), "--count", "4")
    assert code == 0
    assert np.allclose(out["spectrum"]["eigenvalues"]["value"], [1, 2, 2, 2], rtol=2e-2)
    code, out, _ = _run(tmp_path, "capacity", str(off), name="cap.json")
    assert code == 0
    assert out["capacity"]["value"] == pytest.approx(4 * np.pi, rel=2e-2)
    code, out, _ = _run(tmp_path, "tensors", str(off), name="t.json")
    assert code == 0 and out["violations"] == []


def test_imcf_numerical_failure_exit_three(dented_off, capsys):
    assert cli.run_command(["imcf", str(dented_off), "--time", "0.1"]) == 3
    assert "CurvatureCollapse" in capsys.readouterr().err


def test_imcf_zero_time_csv(tmp_path):
    code, out, p = _run(tmp_path, "imcf", "--generate", "ellipsoid:a=1.5,b=1,c=1,subdivisions=3", "--time", "0")
    assert code == 0
    rows = list(csv.reader(p.with_suffix(".csv").open()))
    assert rows[0] == ["t", "area", "willmore", "m_H", "m_H_tilde", "min_H", "dt"]
    assert len(rows) == 2
    assert out["steps"]["value"] == 0


def test_imcf_short_flow(tmp_path):
    code, out, p = _run(tmp_path, "imcf", "--generate", "icosphere:subdivisions=2", "--time", "0.1")
    assert code == 0
    assert out["area_law_defect"]["value"] < 5e-3
    assert len(p.with_suffix(".csv").read_text().splitlines()) > 2
    assert _bare_numbers(out) == []


def test_inequality_command(tmp_path):
    code, out, _ = _run(tmp_path, "inequality", "--points", "100")
    assert code == 0
    assert len(out["points"]) == 100 and out["violations"] == []


def test_stdout_and_console_script():
    res = subprocess.run([sys.executable, "-m", "exsteklov", "ball", "--dim", "4", "--count", "5"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0, res.stderr
    out = json.loads(res.stdout)
    assert out["eigenvalues"]["value"] == [2, 3, 3, 3, 3]


def test_clean_serialization():
    s = cli.dumps({"b": float("nan"), "a": [np.float64(1 / 3), np.int64(2), float("inf")], "c": np.bool_(True)})
    d = json.loads(s)
    assert d == {"a": [0.333333333333, 2, "inf"], "b": None, "c": True}
    assert s.index('"a"') < s.index('"b"')
