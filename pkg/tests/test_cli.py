import json
import math
import os

import numpy as np
import pytest

from privgen import cli


def _write(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f)
    return str(path)


def _read_csv_with_header(path):
    with open(path) as f:
        lines = f.read().strip().split("\n")
    assert lines[0].startswith("# ")
    header = json.loads(lines[0][2:])
    cols = lines[1].split(",")
    rows = [dict(zip(cols, ln.split(","))) for ln in lines[2:]]
    return header, rows


def test_bounds_output(tmp_path):
    rc = cli.main(["bounds", "--eps-start", "0.0", "--eps-stop", "5.0",
                   "--eps-step", "0.5", "--delta", "0",
                   "--out", str(tmp_path)])
    assert rc == 0
    header, rows = _read_csv_with_header(tmp_path / "bounds.csv")
    assert header["version"].startswith("privgen-")
    assert header["config_hash"]
    first = rows[0]
    assert float(first["eps"]) == 0.0
    assert float(first["tight"]) == 0.0
    assert float(first["loose"]) == 0.0
    assert float(first["cmi"]) == 0.0
    last = rows[-1]
    assert float(last["eps"]) == 5.0
    assert float(last["loose"]) == pytest.approx(147.413, abs=1e-2)
    assert float(last["cmi"]) == 5.0
    assert float(last["tight"]) == pytest.approx(math.tanh(2.5), abs=1e-6)
    for row in rows:
        tight = float(row["tight"])
        assert tight <= float(row["loose"]) + 1e-12
        assert tight <= float(row["cmi"]) + 1e-12


def test_verify_exits_zero_and_reports_claims(tmp_path, capsys):
    rc = cli.main(["verify", "--seed", "0", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL " not in out
    with open(tmp_path / "verification.json") as f:
        report = json.load(f)
    ids = {c["claim"] for c in report["claims"]}
    assert len(ids) >= 8
    for c in report["claims"]:
        assert set(c) == {"claim", "lhs", "rhs", "tolerance", "pass"}
        assert c["pass"]
    assert report["provenance"]["seed"] == 0


def test_verify_failure_exit_code(tmp_path, monkeypatch, capsys):
    def fake_suite(seed=0):
        return [{"claim": "injected-failure", "lhs": 1.0, "rhs": 0.0,
                 "tolerance": 0.0, "pass": False}]
    monkeypatch.setattr(cli, "run_suite", fake_suite)
    rc = cli.main(["verify"])
    assert rc == 1
    assert "injected-failure" in capsys.readouterr().err


def _dataset_csv(tmp_path):
    gen_cfg = _write(tmp_path / "gen.json", {
        "type": "synthetic", "q": [0.7, 0.3], "n": 150, "dim": 3,
        "noise_std": 1.0, "seed": 5})
    out = str(tmp_path / "synth.csv")
    assert cli.main(["data", "gen", gen_cfg, "--out", out]) == 0
    return out


def test_data_gen_and_inspect(tmp_path, capsys):
    path = _dataset_csv(tmp_path)
    assert os.path.exists(path)
    with open(path + ".meta.json") as f:
        meta = json.load(f)
    assert meta["group_probs"] == [0.7, 0.3]
    assert meta["provenance"]["seed"] == 5
    capsys.readouterr()
    assert cli.main(["data", "inspect", path]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n"] == 150 and doc["dim"] == 3
    assert sum(doc["group_counts"]) == 150


def test_train_run_and_determinism(tmp_path):
    path = _dataset_csv(tmp_path)
    cfg = {
        "algorithm": "DP_IS_SGD", "lr": 0.1, "steps": 40, "pbar": 0.1,
        "clip": 1.0, "sigma": 1.0,
        "dataset": {"type": "csv", "path": path},
        "seeds": [7], "out_dir": str(tmp_path / "runs")}
    cfg_path = _write(tmp_path / "train.json", cfg)
    assert cli.main(["train", cfg_path]) == 0
    run_path = tmp_path / "runs" / "run_seed7.json"
    with open(run_path) as f:
        doc1 = json.load(f)
    assert doc1["privacy"]["eps"] > 0
    assert doc1["provenance"]["version"].startswith("privgen-")
    assert doc1["provenance"]["seed"] == 7
    assert doc1["trajectory"][-1]["step"] == 40
    assert os.path.exists(tmp_path / "runs" / "run_seed7_trajectory.csv")
    # same config and seed again: byte-identical record
    bytes1 = run_path.read_bytes()
    assert cli.main(["train", cfg_path]) == 0
    assert run_path.read_bytes() == bytes1


def test_sweep_long_format(tmp_path):
    path = _dataset_csv(tmp_path)
    cfg = {
        "algorithm": "DP_SGD", "lr": 0.1, "steps": 30, "pbar": 0.1,
        "clip": 1.0, "sigma": 1.0,
        "grid": {"param": "sigma", "values": [1.0, 3.0]},
        "dataset": {"type": "csv", "path": path},
        "seeds": [0, 1], "out_dir": str(tmp_path / "sw")}
    cfg_path = _write(tmp_path / "sweep.json", cfg)
    assert cli.main(["sweep", cfg_path]) == 0
    header, rows = _read_csv_with_header(tmp_path / "sw" / "sweep.csv")
    assert header["config_hash"]
    metrics_seen = {r["metric"] for r in rows}
    assert {"test_acc", "wggap", "eps"} <= metrics_seen
    eps_by_sigma = {float(r["value"]): float(r["mean"])
                    for r in rows if r["metric"] == "eps"}
    assert eps_by_sigma[3.0] < eps_by_sigma[1.0]


def test_unknown_key_rejected(tmp_path, capsys):
    cfg_path = _write(tmp_path / "bad.json", {"algorithm": "SGD", "oops": 1})
    assert cli.main(["train", cfg_path]) == 2
    assert "oops" in capsys.readouterr().err


def test_malformed_json_rejected(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert cli.main(["train", str(bad)]) == 2


def test_missing_dataset_is_data_error(tmp_path, capsys):
    cfg_path = _write(tmp_path / "t.json", {
        "algorithm": "SGD", "lr": 0.1, "steps": 10, "batch_size": 8,
        "dataset": {"type": "csv", "path": str(tmp_path / "nope.csv")},
        "seeds": [0], "out_dir": str(tmp_path / "o")})
    assert cli.main(["train", cfg_path]) == 3
    assert "data error" in capsys.readouterr().err


def test_schema_location_reported(tmp_path, capsys):
    cfg_path = _write(tmp_path / "t.json", {
        "algorithm": "SGD", "lr": 0.1, "steps": 10,
        "dataset": {"type": "elsewhere"},
        "seeds": [0], "out_dir": str(tmp_path / "o")})
    assert cli.main(["train", cfg_path]) == 2
    assert "dataset" in capsys.readouterr().err
