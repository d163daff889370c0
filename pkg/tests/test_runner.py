import hashlib
import json

import numpy as np
import pytest

from stochheat.cli import main
from stochheat.config import config_from_text
from stochheat.experiments import ExperimentResult, Table
from stochheat.runner import format_value, run_experiment, table_bytes, write_outputs


def test_format_round_trips():
    for v in [0.1, 1 / 3, -2.5e-300, 123456789.123456789, np.float64(np.pi)]:
        assert float(format_value(v)) == float(v)
    assert format_value(7) == "7" and format_value(np.int64(3)) == "3"
    assert format_value(True) == "1" and format_value("x") == "x"


def test_table_bytes_layout():
    data = table_bytes(Table(["a", "b"], [[1, 0.1], [2, "s"]]))
    assert data == b"a,b\n1,0.10000000000000001\n2,s\n"
    with pytest.raises(ValueError):
        table_bytes(Table(["a"], [[1, 2]]))


def test_rewrite_is_byte_identical(tmp_path):
    result = ExperimentResult(True, {"t": Table(["x"], [[1 / 7]])})
    m1 = write_outputs(result, {"seed": 1}, tmp_path / "a")
    first = (tmp_path / "a" / "t.csv").read_bytes()
    m2 = write_outputs(result, {"seed": 1}, tmp_path / "a")
    assert (tmp_path / "a" / "t.csv").read_bytes() == first
    assert m1["outputs"] == m2["outputs"]
    assert m1["outputs"][0]["sha256"] == hashlib.sha256(first).hexdigest()


def test_manifest_contents(tmp_path):
    cfg = config_from_text("experiment = deterministic_limit\n")
    manifest, result = run_experiment(cfg, tmp_path)
    assert result.passed
    on_disk = json.loads((tmp_path / "deterministic_limit" / "manifest.json").read_text())
    for key in ("version", "seed", "config_checksum", "duration_s", "outputs"):
        assert key in on_disk
    assert on_disk["seed"] == cfg.seed
    assert on_disk["config_checksum"] == cfg.checksum()
    assert on_disk["outputs"][0]["file"] == "errors.csv"


def test_tail_decay_columns(tmp_path):
    cfg = config_from_text("experiment = tail_decay\npaths = 300\n[grid]\nn_space = 16\n")
    run_experiment(cfg, tmp_path)
    header = (tmp_path / "tail_decay" / "tail_decay.csv").read_text().splitlines()[0]
    assert header == "n,threshold,p_hat,ci_low,ci_high,n_samples"


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "tail_decay" in out and "malliavin_energy" in out


def test_cli_pass(tmp_path, capsys):
    assert main(["run", "--experiment", "deterministic_limit", "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_assertion_failure(tmp_path):
    cfg = tmp_path / "strict.cfg"
    cfg.write_text("experiment = deterministic_limit\n[knobs]\ntolerance = 1e-9\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_cli_config_errors(tmp_path, capsys):
    assert main(["run", "--experiment", "no_such_thing"]) == 2
    assert "registered" in capsys.readouterr().err
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("experiment = mean_identity\n[probe]\nx = 0.0\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert main(["run"]) == 2


def test_cli_runtime_error_leaves_no_outputs(tmp_path, capsys):
    cfg = tmp_path / "blow.cfg"
    cfg.write_text("experiment = deterministic_limit\n[coefficients]\nkind = deterministic\n"
                   "b = 1e300*u**2\n")
    with np.errstate(over="ignore", invalid="ignore"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 3
    assert "runtime error" in capsys.readouterr().err
    assert not list(tmp_path.rglob("*.csv"))


def test_worker_count_does_not_change_outputs(tmp_path):
    cfg = tmp_path / "blocks.cfg"
    cfg.write_text("experiment = mean_identity\nblock_size = 40\n")
    digests = []
    for workers in (1, 4, 8):
        out = tmp_path / f"w{workers}"
        code = main(["run", "--config", str(cfg), "--paths", "300", "--grid", "16",
                     "--seed", "11", "--out", str(out), "--workers", str(workers)])
        assert code in (0, 1)
        manifest = json.loads((out / "mean_identity" / "manifest.json").read_text())
        digests.append([o["sha256"] for o in manifest["outputs"]])
    assert digests[0] == digests[1] == digests[2]
