import json
import subprocess
import sys

import pytest

from ocskit.cli import main, read_config, ConfigError


def data_lines(text):
    return [l for l in text.splitlines() if l and not l.startswith("#")]


def test_bounds_table(capsys):
    assert main(["bounds", "--max-k", "10"]) == 0
    out = capsys.readouterr().out
    rows = data_lines(out)
    assert rows[0].startswith("k,eta_sum,") and len(rows) == 12
    assert rows[1].split(",")[1:3] == ["1.0", "1.0"]
    assert out.startswith("# config: ") and "# params: " in out


def test_lp_prints_ratio(capsys):
    assert main(["lp"]) == 0
    out = capsys.readouterr().out
    assert "# Gamma = 0.50962346" in out
    assert data_lines(out)[0] == "k,l,a,b"


def test_lp_output_file_and_export(tmp_path, capsys):
    out = tmp_path / "sub" / "w.csv"
    lp = tmp_path / "w.lp"
    code = main(["lp", "--variant", "weighted", "--kmax", "4", "--ellmax", "4",
                 "--consistent-mode", "-o", str(out), "--export", str(lp)])
    assert code == 0
    assert capsys.readouterr().out.startswith("Gamma = ")
    assert out.exists() and lp.read_text().count("\n") > 50
    assert not [p for p in out.parent.iterdir() if p.name.endswith(".tmp")]


def test_verify_family(capsys):
    assert main(["verify", "--family", "all-same", "--triples", "2"]) == 0
    rows = data_lines(capsys.readouterr().out)
    assert rows[0] == "input,spec,exact_or_estimate,bound,pass"
    assert all(r.endswith(",1") for r in rows[1:])


def test_verify_bad_window_is_config_error(capsys):
    assert main(["verify", "--family", "all-same", "--pairs", "2", "--windows", "3:1"]) == 2
    assert "error" in capsys.readouterr().err


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("max-k = 3  # short table\n")
    assert main(["bounds", "--config", str(cfg)]) == 0
    assert len(data_lines(capsys.readouterr().out)) == 5
    assert main(["bounds", "--config", str(cfg), "--max-k", "2"]) == 0
    assert len(data_lines(capsys.readouterr().out)) == 4
    cfg.write_text("no_such_key = 1\n")
    assert main(["bounds", "--config", str(cfg)]) == 2
    cfg.write_text("just words\n")
    with pytest.raises(ConfigError):
        read_config(str(cfg))
    assert main(["bounds", "--config", str(tmp_path / "missing")]) == 2


def test_seed_falls_back_to_environment(monkeypatch, capsys):
    monkeypatch.setenv("OCSKIT_SEED", "17")
    assert main(["simulate", "--n", "6", "--trials", "2"]) == 0
    out = capsys.readouterr().out
    conf = json.loads(out.splitlines()[0][len("# config: "):])
    assert conf["seed"] == 17
    assert data_lines(out)[1].startswith("17,")
    monkeypatch.setenv("OCSKIT_SEED", "abc")
    assert main(["simulate", "--n", "6", "--trials", "2"]) == 2


def test_outputs_are_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--kind", "uniform-weights", "--n", "8", "--trials", "3",
            "--kmax", "6", "--ellmax", "6", "--seed", "5"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_reports_audit(capsys):
    assert main(["simulate", "--kind", "upper-triangular-adversarial", "--n", "8",
                 "--trials", "2"]) == 0
    out = capsys.readouterr().out
    assert "# mean_ratio = " in out
    assert data_lines(out)[0] == "seed,alg,opt,ratio,audit_pass"


def test_enumerate_and_trace(tmp_path, capsys):
    replay = tmp_path / "q.txt"
    replay.write_text("P 0 1\nP 0 2\n")
    trace = tmp_path / "t.jsonl"
    assert main(["enumerate", str(replay), "--trace", str(trace), "--seed", "2"]) == 0
    rows = data_lines(capsys.readouterr().out)
    assert rows[0] == "input,spec,exact,bound,pass" and len(rows) >= 2
    lines = trace.read_text().splitlines()
    assert len(lines) == 2 and all(json.loads(l) for l in lines)
    replay.write_text("P 0 1\nT 0 1 2\n")
    assert main(["enumerate", str(replay)]) == 2
    replay.write_text("Q 0 1\n")
    assert main(["enumerate", str(replay)]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ocskit", "bounds", "--max-k", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "eta_sum" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "ocskit", "nothing"], capture_output=True)
    assert proc.returncode == 2
