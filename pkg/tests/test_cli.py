"""Command-line interface: commands, exit codes, formats, determinism."""

import json

import numpy as np
import pytest

from finslerconn.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------


def test_inspect_second_class(capsys):
    code, out, _ = run_cli(
        capsys, "inspect", "--metric", "second-class", "--x", "0,1,0", "--dx", "1,0.5,0.5"
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["degeneracy"]["rank"] == 0
    assert doc["degeneracy"]["D"] == 2
    assert len(doc["connection"]["C"]) == 2
    # the constraint residuals at this point: |C1| = |d2 + x1 d0| = 1.5
    assert abs(abs(doc["connection"]["C"][0]) - 1.5) < 1e-12


def test_inspect_euclidean_zero_spray(capsys):
    code, out, _ = run_cli(
        capsys, "inspect", "--metric", "euclidean-2", "--x", "0,0", "--dx", "3,4"
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["connection"]["G"] == [0, 0]
    assert doc["connection"]["N"] == [[0, 0], [0, 0]]


def test_inspect_missing_dx_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main(["inspect", "--metric", "euclidean-2", "--x", "0,0"])
    assert err.value.code == 2


def test_inspect_bad_point_exit_2(capsys):
    code, _, err = run_cli(
        capsys, "inspect", "--metric", "potential-system",
        "--x", "0,0,0,0", "--dx=-1,0,0,0",
    )
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "DomainError"


def test_inspect_curvature_flag(capsys):
    code, out, _ = run_cli(
        capsys, "inspect", "--metric", "euclidean-2",
        "--x", "0,0", "--dx", "1,1", "--curvature",
    )
    assert code == 0
    doc = json.loads(out)
    assert np.max(np.abs(np.array(doc["curvature"]["R"]))) == 0.0


def test_inspect_metric_file(tmp_path, capsys):
    path = tmp_path / "metric.json"
    path.write_text(json.dumps({
        "dimension": 2,
        "expression": "sqrt(d0^2 + d1^2)",
        "parameters": {},
        "guard": None,
    }))
    code, out, _ = run_cli(capsys, "inspect", "--metric", str(path), "--x", "0,0", "--dx", "3,4")
    assert code == 0
    assert json.loads(out)["jet"]["L"] == 5.0


# ---------------------------------------------------------------------------
# geodesic
# ---------------------------------------------------------------------------


def test_geodesic_csv_output(tmp_path, capsys):
    from finslerconn.catalog import catalog_entry
    from finslerconn.dsl import evaluate

    entry = catalog_entry("potential-system")
    x0 = [0.0, 0.5, -0.3, 0.2]
    ray = np.array([1.0, 1.2, 0.9, -0.8])
    dx0 = ray / evaluate(entry.spec, x0, ray)  # unit metric value
    out_path = tmp_path / "traj.csv"
    code, out, _ = run_cli(
        capsys, "geodesic", "--metric", "potential-system",
        "--x", ",".join(map(str, x0)),
        "--dx", ",".join(repr(float(v)) for v in dx0),
        "--gauge", "arclength",
        "--h", "1e-3", "--steps", "300", "--out", str(out_path),
    )
    assert code == 0
    lines = out_path.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header[0] == "tau"
    taus = [float(line.split(",")[0]) for line in lines[1:]]
    assert taus == sorted(taus)
    l_col = header.index("L")
    Ls = [float(line.split(",")[l_col]) for line in lines[1:]]
    assert max(Ls) - min(Ls) < 1e-6  # nearly constant in arc length
    summary = json.loads(out)
    assert summary["halt_reason"] is None


def test_geodesic_second_class_constraints_small(tmp_path, capsys):
    out_path = tmp_path / "sc.csv"
    code, _, _ = run_cli(
        capsys, "geodesic", "--metric", "second-class",
        "--x", "0,0.8,0.3", "--dx", "1,0.3,-0.8",
        "--h", "1e-2", "--steps", "80", "--out", str(out_path),
    )
    assert code == 0
    lines = out_path.read_text().strip().splitlines()
    header = lines[0].split(",")
    c1 = header.index("C1")
    c2 = header.index("C2")
    for line in lines[1:]:
        parts = line.split(",")
        assert abs(float(parts[c1])) < 1e-8
        assert abs(float(parts[c2])) < 1e-8


def test_geodesic_inadmissible_initial_exit_2(capsys):
    code, _, err = run_cli(
        capsys, "geodesic", "--metric", "potential-system",
        "--x", "0,0,0,0", "--dx=-1,0.1,0,0",
    )
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "InvalidStateError"


def test_geodesic_halt_exit_3_with_partial_output(tmp_path, capsys):
    out_path = tmp_path / "halt.csv"
    code, out, err = run_cli(
        capsys, "geodesic", "--metric", "riemann-2d-curved",
        "--x", "0.6,0", "--dx", "0.9999,-0.02",
        "--gauge", "time", "--h", "1e-2", "--steps", "500",
        "--out", str(out_path),
    )
    assert code == 3
    assert out_path.exists()
    lines = out_path.read_text().strip().splitlines()
    assert 1 < len(lines) < 502
    assert json.loads(err.strip().splitlines()[-1])["error"] == "TrajectoryHalt"


def test_geodesic_json_format(tmp_path, capsys):
    out_path = tmp_path / "traj.json"
    code, _, _ = run_cli(
        capsys, "geodesic", "--metric", "euclidean-2",
        "--x", "0,0", "--dx", "0.6,0.8", "--gauge", "arclength",
        "--h", "0.05", "--steps", "10", "--format", "json", "--out", str(out_path),
    )
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert len(doc["nodes"]) == 11
    assert doc["summary"]["L_drift"] == 0.0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def test_verify_filtered_passes(capsys):
    code, out, _ = run_cli(capsys, "verify", "--only", "frenkel")
    assert code == 0
    assert "PASS" in out
    assert "FAIL" not in out
    assert "frenkel" in out


def test_verify_rejects_broken_metric(tmp_path, capsys):
    # quadratic (degree-2) expression is not positively 1-homogeneous
    bad = tmp_path / "broken.json"
    bad.write_text(json.dumps({
        "dimension": 2,
        "expression": "d0^2 + d1^2",
        "parameters": {},
        "guard": None,
    }))
    code, out, _ = run_cli(capsys, "verify", "--only", "broken", "--extra-metric", str(bad))
    assert code == 1
    assert "FAIL" in out


def test_verify_determinism_bytes(capsys):
    code1, out1, _ = run_cli(capsys, "verify", "--only", "degeneracy")
    code2, out2, _ = run_cli(capsys, "verify", "--only", "degeneracy")
    assert code1 == code2 == 0
    assert out1 == out2


# ---------------------------------------------------------------------------
# catalog + config
# ---------------------------------------------------------------------------


def test_catalog_listing_and_dump(capsys):
    code, out, _ = run_cli(capsys, "catalog")
    assert code == 0
    names = {row["name"] for row in json.loads(out)}
    assert "frenkel" in names and "second-class" in names

    code, out, _ = run_cli(capsys, "catalog", "--name", "second-class")
    assert code == 0
    doc = json.loads(out)
    assert doc["dimension"] == 3
    assert "x1" in doc["expression"]


def test_config_file_provides_defaults(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"h": 0.05, "steps": 10, "gauge": "arclength"}))
    out_path = tmp_path / "out.csv"
    code, _, _ = run_cli(
        capsys, "--config", str(cfg), "geodesic", "--metric", "euclidean-2",
        "--x", "0,0", "--dx", "0.6,0.8", "--out", str(out_path),
    )
    assert code == 0
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 12  # header + 11 nodes from the config's steps=10
    # explicit flags still win over config values
    code, _, _ = run_cli(
        capsys, "--config", str(cfg), "geodesic", "--metric", "euclidean-2",
        "--x", "0,0", "--dx", "0.6,0.8", "--steps", "4", "--out", str(out_path),
    )
    assert code == 0
    assert len(out_path.read_text().strip().splitlines()) == 6


def test_env_verbosity_does_not_affect_output(monkeypatch, capsys):
    monkeypatch.setenv("FINSLER_LOG", "debug")
    code, out, _ = run_cli(capsys, "catalog")
    assert code == 0
    assert "frenkel" in out


def test_cli_byte_identical_inspect(capsys):
    args = ["inspect", "--metric", "riemann-2d-curved", "--x", "1.1,0.4", "--dx", "0.5,0.6"]
    _, out1, _ = run_cli(capsys, *args)
    _, out2, _ = run_cli(capsys, *args)
    assert out1 == out2
