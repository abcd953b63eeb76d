import json
import subprocess
import sys

import numpy as np
import pytest

from ltrc_ustat import ingest, load_transformer, validate_sample
from ltrc_ustat.cli import main
from ltrc_ustat.errors import InvariantViolation, ParseError
from ltrc_ustat.sim import SimConfig, draw_ltrc_sample, replication_rng

HEADER = "serial,year_installed,year_exit,nu,k\n"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_transformer_rows():
    s = load_transformer()
    assert len(s) == 100
    assert s.observations[0].trunc_time == 19 and s.observations[0].obs_time == 35
    assert s.observations[0].event and s.observations[0].cause == 2
    assert (s.trunc[10], s.time[10], s.event[10]) == (17, 45, False)
    assert (s.trunc[30], s.time[30], s.event[30]) == (0, 21, False)


@pytest.mark.parametrize("row, exc", [
    ("1,1961,1996,1,2", InvariantViolation),   # nu disagrees with the install year
    ("1,1990,2001,1,0", InvariantViolation),   # censored before the study end
    ("1,1961,1950,0,2", InvariantViolation),
    ("1,1961,1980,0,2", InvariantViolation),   # failed before the window opened
    ("1,1961,x,0,2", ParseError),
    ("1,1961,1996,0", ParseError),
])
def test_transformer_validation(tmp_path, row, exc):
    p = tmp_path / "t.csv"
    p.write_text(HEADER + row + "\n")
    with pytest.raises(exc):
        ingest.ingest_transformer(p)


def test_round_trip(tmp_path, rng):
    for s in (load_transformer(), draw_ltrc_sample(SimConfig(n=50), rng)):
        p = tmp_path / "s.csv"
        ingest.write_ltrc_csv(s, p)
        assert ingest.read_ltrc_csv(p) == s


def test_generic_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("L,T,delta,cause\n0,1,1,3\n")
    with pytest.raises(ParseError):
        ingest.read_ltrc_csv(p)
    p.write_text("A,B\n")
    with pytest.raises(ParseError):
        ingest.read_ltrc_csv(p)


def test_cmd_test_transformer(capsys, tmp_path):
    code, out, _ = run(capsys, "test", "builtin:transformer", "--alpha", "0.05")
    assert code == 0
    rep = json.loads(out)
    assert rep["n"] == 100 and rep["n_failures"] == 47 and rep["n_censored"] == 53
    assert rep["delta_hat"] > 0
    assert rep["ties_discarded"] > 0
    assert rep["conventions"]["limit"] == "left"
    assert rep["conventions"]["scaling"] == "theorem3"
    out_file = tmp_path / "r.csv"
    code, _, _ = run(capsys, "test", "builtin:transformer", "--format", "csv",
                     "--scaling", "as-printed", "--out", str(out_file))
    head, vals = out_file.read_text().splitlines()
    assert "delta_hat" in head.split(",") and "as-printed" in vals.split(",")


def test_empty_file_exit_code(capsys, tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    code, _, err = run(capsys, "test", str(p))
    assert code == 2
    assert json.loads(err)["error"] == "ParseError"


def test_missing_file_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "test", str(tmp_path / "nope.csv"))
    assert code == 2


def test_degenerate_exit_code(capsys, tmp_path):
    s = validate_sample([(0, t, 1, 1) for t in range(1, 9)])
    p = tmp_path / "same.csv"
    ingest.write_ltrc_csv(s, p)
    code, _, err = run(capsys, "test", str(p))
    assert code == 3
    assert json.loads(err)["error"] == "DegenerateVariance"


def test_independent_data_rarely_rejected(capsys, tmp_path):
    cfg = SimConfig(a=1.0, p1=0.45, n=200)
    rejects = 0
    for seed in range(20):
        p = tmp_path / f"h0_{seed}.csv"
        ingest.write_ltrc_csv(draw_ltrc_sample(cfg, replication_rng(1, seed)), p)
        code, out, _ = run(capsys, "test", str(p))
        assert code == 0
        rejects += json.loads(out)["reject"]
    assert rejects <= 2


def test_estimate_transformer(capsys, tmp_path):
    code, out, _ = run(capsys, "estimate", "builtin:transformer", "--out", str(tmp_path))
    assert code == 0
    tables = {}
    for name in ("K_c", "Lambda_c", "S_X", "F1", "F2"):
        rows = (tmp_path / f"{name}.csv").read_text().splitlines()
        assert rows[0] == f"time,{name}"
        tables[name] = [tuple(map(float, r.split(","))) for r in rows[1:]]
    assert tables["F2"][-1][1] > tables["F1"][-1][1]
    assert tables["K_c"][0] == (-np.inf, 1.0)


def test_estimate_small_examples(capsys, tmp_path, three_point):
    p = tmp_path / "three.csv"
    ingest.write_ltrc_csv(three_point, p)
    code, out, _ = run(capsys, "estimate", str(p), "--estimators", "K_c", "--format", "json")
    assert json.loads(out)["K_c"] == {"initial": 1.0, "times": [2.0], "values": [0.5]}
    full = validate_sample([(0, 1, 1, 1), (0, 2, 1, 2)])
    ingest.write_ltrc_csv(full, p)
    run(capsys, "estimate", str(p), "--estimators", "K_c", "--out", str(tmp_path))
    assert (tmp_path / "K_c.csv").read_text().splitlines() == ["time,K_c", "-inf,1.0"]
    code, _, err = run(capsys, "estimate", str(p), "--estimators", "Q")
    assert code == 2


TABLE_TOML = """
lifetime = "exp"
pairs = [[1.0, 0.45], [2.0, 0.45]]
n = [50, 75, 100, 150, 200]
censor_frac = [0.2, 0.4]
alpha = [0.05, 0.01]
trunc_frac = 0.2
reps = 2
seed = 1
"""


def test_simulate_table_layout(capsys, tmp_path):
    cfg = tmp_path / "table.toml"
    cfg.write_text(TABLE_TOML)
    out = tmp_path / "t.csv"
    code, stdout, _ = run(capsys, "simulate", str(cfg), "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 40
    assert len(stdout.splitlines()) == 40
    first = out.read_bytes()
    run(capsys, "simulate", str(cfg), "--out", str(out))
    assert out.read_bytes() == first


def test_simulate_json_smoke(capsys, tmp_path):
    cfg = tmp_path / "smoke.json"
    cfg.write_text(json.dumps({"a": 1.5, "p1": 0.3, "n": 30, "reps": 1, "seed": 3}))
    code, out, _ = run(capsys, "simulate", str(cfg), "--format", "json")
    rows = json.loads(out)
    assert code == 0 and len(rows) == 1
    assert rows[0]["rejection_rate"] in (0.0, 1.0)


def test_simulate_bad_config(capsys, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"a": 3.0}))
    code, _, err = run(capsys, "simulate", str(cfg))
    assert code == 2
    assert json.loads(err)["error"] == "ConfigError"
    cfg.write_text("{not json")
    assert run(capsys, "simulate", str(cfg))[0] == 2


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "ltrc_ustat.cli", "test", "builtin:transformer"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["n"] == 100
