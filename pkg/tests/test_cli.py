import json
import subprocess
import sys

import pytest

from narinterval.cli import main
from narinterval.pipeline import generate_synthetic

FAST = ["--hidden-min", "2", "--hidden-max", "3", "--max-epochs", "10"]


@pytest.fixture
def signal_csv(tmp_path):
    path = tmp_path / "signal.csv"
    generate_synthetic(n=600, seed=2, path=path)
    return path


def test_run_prints_summary(tmp_path, signal_csv, capsys):
    out = tmp_path / "out"
    code = main(["run", "--input", str(signal_csv), "--out-dir", str(out), "--radius", "1e-3", *FAST])
    assert code == 0
    text = capsys.readouterr().out
    assert "decimation factor" in text and "RMSE k2" in text and "neural:" in text
    assert json.loads((out / "report.json").read_text())["status"] == "ok"


def test_flags_override_config_file(tmp_path, signal_csv):
    cfg = tmp_path / "run.cfg"
    out = tmp_path / "out"
    cfg.write_text(f"input = {signal_csv}\nout_dir = {out}\nradius = 0.5\nhorizon = 3\nneural = false\n")
    assert main(["run", "--config", str(cfg), "--radius", "1e-4"]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["config"]["radius"] == 1e-4
    assert doc["config"]["horizon"] == 3
    assert doc["neural"] is None
    assert "interval_k3" in doc["rmse"]


def test_decimal_comma_input(tmp_path, signal_csv):
    comma = tmp_path / "comma.csv"
    comma.write_text(signal_csv.read_text().replace(".", ","))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--input", str(signal_csv), "--out-dir", str(out_a), "--no-neural"]) == 0
    assert main(["run", "--input", str(comma), "--decimal", ",", "--out-dir", str(out_b), "--no-neural"]) == 0
    a = json.loads((out_a / "report.json").read_text())
    b = json.loads((out_b / "report.json").read_text())
    assert a["model"] == b["model"] and a["rmse"] == b["rmse"]


def test_ten_sample_input_names_split_stage(tmp_path, capsys):
    path = tmp_path / "tiny.csv"
    path.write_text("\n".join(str(float(i)) for i in range(10)) + "\n")
    code = main(["run", "--input", str(path), "--out-dir", str(tmp_path / "out")])
    assert code == 1
    err = capsys.readouterr().err
    assert "load_split" in err and "too few samples" in err
    assert (tmp_path / "out" / "FAILED").exists()


def test_missing_input_and_bad_config(tmp_path, capsys):
    assert main(["run", "--out-dir", str(tmp_path)]) == 2
    assert main(["run", "--input", "x.csv", "--radius", "-1"]) == 2
    assert "radius" in capsys.readouterr().err


def test_synth_writes_identical_files_for_same_seed(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / f"{name}.csv"), "--truth", str(tmp_path / f"{name}.json"),
                     "-n", "300", "--seed", "9"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_synth_custom_terms(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["synth", "--out", str(out), "--terms", "1", "y(k-1)", "--theta", "1", "0.5",
                 "--sigma", "0", "-n", "5", "--burn-in", "200"]) == 0
    values = [float(v) for v in out.read_text().split()[1:]]
    assert values == pytest.approx([2.0] * 5)


def test_synth_errors(tmp_path, capsys):
    out = str(tmp_path / "s.csv")
    assert main(["synth", "--out", out, "--terms", "y(k-1)", "--theta", "1", "2"]) == 2
    assert main(["synth", "--out", out, "--terms", "y(k-1)", "--theta", "3"]) == 1
    assert "diverged" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    out = tmp_path / "s.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "narinterval.cli", "synth", "--out", str(out), "-n", "10"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
