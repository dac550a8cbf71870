import json
import os
import subprocess
import sys

import pytest

from qcontrib import cli
from qcontrib.dists import DistributionSpec, eval_cdf
from qcontrib.errors import UsageError


def run_cli(args, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qcontrib", *args], cwd=tmp_path, capture_output=True, text=True, timeout=300
    )
    return proc.returncode, proc.stdout, proc.stderr


def test_parse_simulate():
    cmd = cli.parse_args(
        ["simulate", "--dist", "exp mu=1", "--n", "1000", "--reps", "100000", "--p", "0.8", "--seed", "42", "--out", "l.csv"]
    )
    assert cmd.verb == "simulate"
    assert cmd.options["dist"] == DistributionSpec.of("exp", mu=1)
    assert (cmd.options["n"], cmd.options["reps"], cmd.options["p"], cmd.options["seed"]) == (1000, 100000, 0.8, 42)


def test_parse_exact_cdf():
    cmd = cli.parse_args(
        ["exact-cdf", "--dist", "exp mu=1", "--n", "4", "--p", "0.5", "--lambda", "0.7", "--method", "quadrature"]
    )
    assert cmd.verb == "exact-cdf" and cmd.options["lam"] == [0.7]


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--dist", "exp mu=1", "--n", "-5", "--reps", "10", "--p", "0.8", "--seed", "1"],
        ["simulate", "--dist", "exp mu=1", "--n", "10", "--reps", "10", "--p", "0.8"],
        ["simulate", "--dist", "exp mu", "--n", "10", "--reps", "10", "--p", "0.8", "--seed", "1"],
        ["simulate", "--dist", "exp mu=1", "--n", "10", "--reps", "10", "--p", "1.8", "--seed", "1"],
        ["frobnicate"],
        [],
        ["calibrate", "--seed", "1"],
        ["calibrate", "--seed", "1", "--dist", "exp mu=1"],
        ["order-stat", "--dist", "exp mu=1", "--n", "5", "--ranks", "2,4", "--at", "1"],
        ["converge", "--dist", "exp mu=1", "--p", "0.8", "--seed", "1", "--checkpoints", "10,5"],
    ],
)
def test_parse_usage_errors(argv):
    with pytest.raises(UsageError):
        cli.parse_args(argv)


def test_exit_codes(tmp_path):
    cases = [
        (["simulate", "--dist", "exp mu=1", "--n", "-5", "--reps", "10", "--p", "0.8", "--seed", "1"], 2),
        (["exact-cdf", "--dist", "normal mu=0 sigma=1", "--n", "4", "--p", "0.5", "--lambda", "0.7"], 3),
        (["exact-cdf", "--dist", "exp mu=1", "--n", "9", "--p", "0.5", "--lambda", "0.7"], 4),
        (["converge", "--dist", "normal mu=0 sigma=1", "--p", "0.5", "--seed", "1", "--checkpoints", "1"], 0),
        (["asymptotic", "--dist", "normal mu=0 sigma=1", "--n", "10", "--p", "0.5"], 5),
    ]
    for args, code in cases:
        rc, out, err = run_cli([*args, "--out", "x.csv"], tmp_path)
        assert rc == code, (args, err)
        if code:
            assert len(err.strip().splitlines()) == 1 and err.startswith("qcontrib: error:")
            assert not os.path.exists(tmp_path / "x.csv")
        else:
            os.unlink(tmp_path / "x.csv")


def test_simulate_outputs(tmp_path):
    args = ["simulate", "--dist", "gpd k=0.25 s=0.25 theta=1", "--n", "200", "--reps", "300", "--p", "0.8",
            "--seed", "42", "--out", "l.csv", "--density-out", "d.csv"]
    rc, out, err = run_cli(args, tmp_path)
    assert rc == 0, err
    assert out.startswith("simulate:") and len(out.strip().splitlines()) == 1
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "rep,lambda" and len(lines) == 301
    dens = (tmp_path / "d.csv").read_text().splitlines()
    assert dens[0] == "t,analytic_hinkley,analytic_lognormal,kde"
    first = (tmp_path / "l.csv").read_bytes()
    rc, _, _ = run_cli([*args[:-4], "--out", "l2.csv", "--workers", "2"], tmp_path)
    assert rc == 0 and (tmp_path / "l2.csv").read_bytes() == first


def test_exact_cdf_verb(tmp_path):
    rc, out, err = run_cli(
        ["exact-cdf", "--dist", "exp mu=1", "--n", "2", "--p", "1", "--lambda", "0.55,0.75", "--out", "e.csv"], tmp_path
    )
    assert rc == 0, err
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "lambda,value,std_error"
    assert float(rows[2].split(",")[1]) == pytest.approx(0.5, abs=1e-8)
    rc, out, err = run_cli(
        ["exact-cdf", "--dist", "exp mu=1", "--n", "2", "--p", "1", "--lambda", "0.75", "--method", "mc",
         "--reps", "20000", "--seed", "3", "--json"],
        tmp_path,
    )
    assert rc == 0, err
    doc = json.loads(out)
    assert abs(doc[0]["value"] - 0.5) < 4 * doc[0]["std_error"]


def test_asymptotic_verb_peak(tmp_path):
    rc, out, err = run_cli(
        ["asymptotic", "--dist", "exp mu=1", "--n", "1000", "--p", "0.8", "--model", "lognormal", "--out", "a.csv"],
        tmp_path,
    )
    assert rc == 0, err
    rows = [line.split(",") for line in (tmp_path / "a.csv").read_text().splitlines()[1:]]
    t, v = zip(*((float(a), float(b)) for a, b in rows))
    assert abs(t[v.index(max(v))] - 0.522) < 0.01


def test_order_stat_maximum(tmp_path):
    rc, out, err = run_cli(
        ["order-stat", "--dist", "exp mu=1", "--n", "4", "--i", "4", "--at", "0.3,1,2.5", "--out", "o.csv"], tmp_path
    )
    assert rc == 0, err
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "y1,value,std_error"
    spec = DistributionSpec.of("exp", mu=1)
    for line in lines[1:]:
        x, val, _ = line.split(",")
        assert float(val) == pytest.approx(eval_cdf(spec, float(x)) ** 4, rel=1e-13)


def test_order_stat_joint_and_mc(tmp_path):
    base = ["order-stat", "--dist", "exp mu=1", "--n", "5", "--ranks", "2,4", "--at", "0.5,1.5"]
    rc, out, _ = run_cli(base, tmp_path)
    exact = float(out.splitlines()[1].split(",")[2])
    rc, out, err = run_cli([*base, "--method", "mc", "--reps", "100000", "--seed", "1"], tmp_path)
    assert rc == 0, err
    _, _, est, se = out.splitlines()[1].split(",")
    assert abs(float(est) - exact) < 4 * float(se)


def test_converge_verb(tmp_path):
    rc, out, err = run_cli(["converge", "--dist", "exp mu=1", "--p", "0.8", "--seed", "7", "--checkpoints", "1,1000"], tmp_path)
    assert rc == 0, err
    lines = out.splitlines()
    assert lines[0] == "n,lambda,limit"
    assert lines[1].startswith("1,1.0,")


def test_calibrate_custom_and_bytes(tmp_path):
    args = ["calibrate", "--dist", "exp mu=1", "--dist", "rayleigh b=0.25", "--n", "100", "--reps", "50",
            "--p", "0.8", "--seed", "5", "--no-runtime"]
    rc1, _, err = run_cli([*args, "--out", "c1.csv"], tmp_path)
    rc2, _, _ = run_cli([*args, "--out", "c2.csv", "--workers", "2"], tmp_path)
    assert rc1 == rc2 == 0, err
    text = (tmp_path / "c1.csv").read_text()
    assert text == (tmp_path / "c2.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "family,area,n,reps,p,seed,runtime_s,excluded"
    assert [line.split(",")[0] for line in lines[1:]] == ["Exponential", "Rayleigh"]
    rc, out, _ = run_cli([*args, "--json"], tmp_path)
    doc = json.loads(out)
    assert doc["settings"]["grid_size"] == 512 and len(doc["rows"]) == 2


def test_calibrate_preset_small(tmp_path):
    rc, out, err = run_cli(["calibrate", "--preset", "paper-table1", "--reps", "200", "--n", "200", "--seed", "1",
                            "--out", "t.csv"], tmp_path)
    assert rc == 0, err
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 7
    assert all(0 <= float(line.split(",")[1]) <= 2 for line in lines[1:])


def test_main_in_process(capsys):
    assert cli.main(["order-stat", "--dist", "normal mu=1 sigma=0.25", "--n", "2", "--i", "1", "--at", "1"]) == 0
    out, err = capsys.readouterr()
    assert out.splitlines()[1].split(",")[1] == repr(0.75)
    assert cli.main(["simulate"]) == 2
    assert capsys.readouterr().err.count("\n") == 1
