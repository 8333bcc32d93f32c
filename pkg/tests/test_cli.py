import json
import subprocess
import sys

import pytest
from conftest import toy_config

from oreal.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps(toy_config(seed=1).to_dict()))
    assert main(["gen", "--config", str(cfg), "--out", str(d / "data")]) == 0
    return d


def test_gen_writes_manifest(data_dir):
    manifest = json.loads((data_dir / "data" / "manifest.json").read_text())
    assert len(manifest["scenes"]) == 10


def test_run_and_report(data_dir, capsys):
    outs = []
    for agg in ("max", "mean"):
        out = data_dir / f"run-{agg}"
        code, stdout, _ = run(capsys, "run", "--data", data_dir / "data", "--strategy", "oreal",
                              "--agg", agg, "--budget", 8, "--steps", 2, "--seeds", 1,
                              "--max-epochs", 30, "--out", out)
        assert code == 0
        assert json.loads(stdout)["strategy"] == f"oreal-{agg}"
        assert (out / "runs.csv").read_text().count("\n") == 3
        outs.append(out)
    code, stdout, _ = run(capsys, "report", "--in", *outs, "--out", data_dir / "report")
    assert code == 0
    assert set(json.loads(stdout)["aualc_mean"]) == {"oreal-max", "oreal-mean"}
    assert (data_dir / "report" / "curves.svg").read_text().count('class="curve"') == 2


def test_weak_scheme_is_rejected(data_dir, capsys):
    code, _, err = run(capsys, "run", "--data", data_dir / "data", "--scheme", "weak",
                       "--out", data_dir / "weak")
    assert code != 0
    msg = json.loads(err)
    assert msg["error"] == "ValueError" and "dominant" in msg["message"]


def test_usage_error_is_json(capsys):
    code, _, err = run(capsys, "run", "--agg", "median")
    assert code == 2 and json.loads(err)["error"] == "UsageError"


def test_missing_data_is_json(tmp_path, capsys):
    code, _, err = run(capsys, "run", "--data", tmp_path / "none", "--out", tmp_path / "o")
    assert code == 1 and json.loads(err)["error"] == "FileNotFoundError"


def test_bruteforce_delta(capsys):
    code, stdout, _ = run(capsys, "bruteforce-delta", "--classes", 3, "--max-count", 3, "--budget", 4)
    assert code == 0
    assert json.loads(stdout) == {"checked": 4**3 * 5, "mismatches": []}


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "oreal", "bruteforce-delta", "--classes", "2", "--max-count", "2", "--budget", "2"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["checked"] == 27
