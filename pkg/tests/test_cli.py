import csv
import json
from pathlib import Path

import pytest

from deadline_outage import cli
from deadline_outage.cli import SIMULATE_COLUMNS, main
from deadline_outage.specfun import QuadratureError

DESK = Path(cli.__file__).with_name("desk.toml")


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_analyze_default_config(tmp_path, capsys):
    assert main(["analyze", "--out", str(tmp_path)]) == 0
    assert "all bracket invariants pass = true" in capsys.readouterr().out
    df = _rows(tmp_path / "analyze_device_failure.csv")
    assert all(float(r["p_df"]) == 0.0 for r in df if float(r["sigma2"]) == 1.0)
    assert all(r["ok"] == "true" for r in df)
    uf = _rows(tmp_path / "analyze_underflow.csv")
    assert all(r["lower"] == r["upper"] for r in uf if r["D"] == "1")
    assert all(float(r["lower"]) <= float(r["tight_upper"]) <= float(r["upper"]) for r in uf)
    sw = _rows(tmp_path / "analyze_overflow_sandwich.csv")[0]
    assert float(sw["lower"]) <= float(sw["upper"])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["outputs"]) == 4


def test_simulate_header_is_stable(tmp_path):
    assert main(["simulate", "--trials", "50", "--out", str(tmp_path)]) == 0
    header = (tmp_path / "simulate.csv").read_text().splitlines()[0]
    assert header == "scheme,B,L,beta,D,A,p_te,p_to,p_so,se_te,se_to,se_so,n_trials,seed"
    assert tuple(header.split(",")) == SIMULATE_COLUMNS


def test_simulate_single_trial_flags(tmp_path):
    assert main(["simulate", "--config", str(DESK), "--trials", "1", "--scheme", "vr",
                 "--sweep", "beta=0,0.8", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "simulate.csv")
    for r in rows:
        for k in ("p_te", "p_to", "p_so"):
            assert float(r[k]) in (0.0, 1.0)
    assert float(rows[0]["p_so"]) == 1.0


def test_simulate_same_seed_identical(tmp_path):
    args = ["simulate", "--config", str(DESK), "--trials", "3000", "--seed", "17",
            "--sweep", "scheme=vr,mvr,fr,cell,twohop"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "8"]) == 0
    a = (tmp_path / "a" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate.csv").read_bytes()
    rows = _rows(tmp_path / "a" / "simulate.csv")
    for r in rows:
        if r["scheme"] != "vr":
            assert float(r["p_to"]) == 0.0
        assert r["seed"] == "17" and r["n_trials"] == "3000"


def test_simulate_to_stdout(capsys):
    assert main(["simulate", "--trials", "10", "--scheme", "mvr"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("scheme,B,L") and out[1].startswith("mvr,")


def test_figure_bounds_ordering(tmp_path):
    assert main(["figure", "bounds", "--trials", "20000", "--out", str(tmp_path)]) == 0
    mc = _rows(tmp_path / "bounds_mc.csv")
    lo = _rows(tmp_path / "bounds_loose_lower.csv")
    up = _rows(tmp_path / "bounds_loose_upper.csv")
    ti = _rows(tmp_path / "bounds_tight_upper.csv")
    assert len(mc) == len(lo) == len(up) == len(ti) == 30
    for m, l, u, t in zip(mc, lo, up, ti):
        p, se = float(m["p"]), float(m["se"])
        assert float(l["p"]) <= p + 3 * se + 1e-4
        assert p - 3 * se - 1e-4 <= float(t["p"]) <= float(u["p"])


def test_figure_repeatable(tmp_path):
    for d in ("a", "b"):
        assert main(["figure", "training", "--config", str(DESK), "--trials", "500",
                     "--out", str(tmp_path / d)]) == 0
    for name in ("training_te.csv", "training_to.csv", "training_so.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    first = _rows(tmp_path / "a" / "training_to.csv")[0]
    assert float(first["p"]) == 0.0
    assert float(first["ci_upper"]) == pytest.approx(1 - 0.025 ** (1 / 500), rel=1e-9)
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["command"] == "figure training" and len(m["outputs"]) == 3


def test_unknown_figure_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["figure", "nonsense"])
    assert info.value.code != 0


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("D = 10\nbogus = 1\n")
    assert main(["simulate", "--config", str(bad)]) == 2
    assert "bogus" in capsys.readouterr().err
    bad.write_text("D = \n")
    assert main(["analyze", "--config", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["simulate", "--sweep", "L=a,b"]) == 2
    assert main(["simulate", "--threads", "0"]) == 2


def test_numerical_failure_exit_3(monkeypatch, capsys):
    def boom(cfg):
        raise QuadratureError("did not converge", 0.5, 1e-3)
    monkeypatch.setattr(cli, "analyze", boom)
    assert main(["analyze"]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_digest_survives_reordering(tmp_path):
    a = tmp_path / "a.toml"
    b = tmp_path / "b.toml"
    a.write_text("D = 4\nA = 2\ntrials = 200\n")
    b.write_text("trials = 200\nA = 2\nD = 4\n")
    for p, d in ((a, "oa"), (b, "ob")):
        assert main(["simulate", "--config", str(p), "--out", str(tmp_path / d)]) == 0
    ma = json.loads((tmp_path / "oa" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "ob" / "manifest.json").read_text())
    assert ma["config_digest"] == mb["config_digest"]
    assert (tmp_path / "oa" / "simulate.csv").read_bytes() == (tmp_path / "ob" / "simulate.csv").read_bytes()
