import json

import numpy as np
import pytest

from stochsobol.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main, parse_grid


def _csv_rows(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def test_analyze_toy_shape_and_header(tmp_path):
    out = tmp_path / "run1"
    rc = main(["analyze", "--model", "toy", "--n", "60", "--m", "40", "--L", "1", "--seed", "7", "--out", str(out)])
    assert rc == EXIT_OK
    text = (out / "indices.csv").read_text()
    assert text.startswith("# stochsobol ") and "seed=7" in text.splitlines()[0]
    rows = _csv_rows(out / "indices.csv")
    assert rows[0] == "omega_seed,S_1,S_2" and len(rows) == 41
    vals = np.array([[float(v) for v in r.split(",")[1:]] for r in rows[1:]])
    assert vals.min() >= 0 and vals.max() <= 1
    for name in ("moments.json", "histograms.json", "quality.json", "metadata.json", "manifest.json", "means.csv"):
        assert (out / name).exists()
    q = json.loads((out / "quality.json").read_text())
    assert q["evaluations"] == q["expected_evaluations"] == 60 * 40
    assert json.loads((out / "manifest.json").read_text())["status"] == "ok"


def test_analyze_byte_identical_any_workers(tmp_path):
    args = ["analyze", "--model", "gfunction", "--n", "50", "--m", "30", "--seed", "3", "--oracle-size", "10000"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == EXIT_OK
    for name in ("indices.csv", "moments.json", "histograms.json", "means.csv", "quality.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "toy", "n": 30, "m": 5, "seed": 1, "out": str(tmp_path / "x")}))
    assert main(["analyze", "--config", str(cfg), "--m", "6"]) == EXIT_OK
    assert len(_csv_rows(tmp_path / "x" / "indices.csv")) == 7


def test_bad_config_exit_2(tmp_path, capsys):
    assert main(["analyze", "--model", "toy", "--n", "5", "--m", "3", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "n: 5 is less than the minimum" in capsys.readouterr().err
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "toy", "n": 30, "m": 5, "bogus": 1, "out": str(tmp_path)}))
    assert main(["analyze", "--config", str(cfg)]) == EXIT_CONFIG
    assert main(["analyze", "--model", "nope", "--n", "30", "--m", "2", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_convergence_without_oracle_exit_2(tmp_path, capsys):
    rc = main(["convergence", "--model", "oscillator", "--n-values", "20", "--out", str(tmp_path)])
    assert rc == EXIT_CONFIG
    assert "no analytic oracle" in capsys.readouterr().err


def test_convergence_toy(tmp_path):
    rc = main(["convergence", "--model", "toy", "--n-values", "200,300", "--m", "50", "--replicates", "3",
               "--out", str(tmp_path)])
    assert rc == EXIT_OK
    rows = _csv_rows(tmp_path / "convergence.csv")
    errs = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(e < 0.05 for e in errs)
    assert "rate" in json.loads((tmp_path / "metadata.json").read_text())


def test_runtime_failure_writes_manifest(tmp_path, monkeypatch):
    import stochsobol.cli as cli

    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(cli, "run_algorithm2", boom)
    rc = main(["analyze", "--model", "toy", "--n", "30", "--m", "2", "--out", str(tmp_path)])
    assert rc == EXIT_RUNTIME
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "failed" and "metadata.json" in man["files"]


def test_oracle_toy_grid(tmp_path):
    assert main(["oracle", "--model", "toy", "--L-grid", "0.1:10:100", "--out", str(tmp_path)]) == EXIT_OK
    rows = _csv_rows(tmp_path / "oracle.csv")
    s = np.array([float(r.split(",")[2]) for r in rows[1:]])
    assert len(s) == 100 and np.all(np.diff(s) > 0)


def test_oracle_gfunction(tmp_path):
    assert main(["oracle", "--model", "gfunction", "--nodes", "100000", "--samples", "100",
                 "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert len(doc["expected"]) == 15 and doc["sum"] <= 1
    assert len(_csv_rows(tmp_path / "oracle_samples.csv")) == 101


def test_parse_grid():
    assert parse_grid("1:3:3") == [1.0, 2.0, 3.0]
    with pytest.raises(Exception):
        parse_grid("1:3")


def test_validate_command(capsys):
    rc = main(["validate"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK, out
    assert out.count("PASS") >= 6
