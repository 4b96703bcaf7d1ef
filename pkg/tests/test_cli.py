import re
import subprocess
import sys

import pytest

from floquet_bound.cli import main
from floquet_bound.estimate import fit_par, multiplier_estimate
from floquet_bound.orbit import read_orbit_record
from floquet_bound.stochsim import place_sections, simulate_crossings


def numbers(text, key):
    m = re.search(rf"{re.escape(key)}\s+([-+.0-9eE]+)", text)
    return float(m.group(1))


@pytest.fixture(scope="module")
def records(tmp_path_factory):
    d = tmp_path_factory.mktemp("records")
    vdp, lor = d / "vdp.orb", d / "lorenz.orb"
    assert main(["orbit", "--system", "vdp", "--params", "eps=0.1,a=0.99", "--out", str(vdp)]) == 0
    assert main(["orbit", "--system", "lorenz", "--params", "sigma=10,r=240,b=2.6667",
                 "--out", str(lor)]) == 0
    return {"vdp": vdp, "lorenz": lor}


def test_orbit_records(records):
    vdp = read_orbit_record(records["vdp"])
    assert vdp.multipliers[0] == pytest.approx(0.3854, abs=1e-3)
    lor = read_orbit_record(records["lorenz"])
    assert lor.multipliers[0] == pytest.approx(-0.6162, abs=1e-3)
    assert lor.multipliers[1] == pytest.approx(-0.0026, abs=2e-4)
    assert lor.params["b"] == 2.6667


def test_orbit_prints_six_digits(capsys):
    assert main(["orbit", "--system", "vdp"]) == 0
    out = capsys.readouterr().out
    assert "lambda_1 0.385408" in out
    assert "period 2.41481" in out


def test_unknown_system_is_usage_error(capsys):
    assert main(["orbit", "--system", "nosuch"]) == 2
    assert "unknown system" in capsys.readouterr().err


def test_bad_params_are_usage_errors():
    assert main(["orbit", "--system", "vdp", "--params", "eps"]) == 2
    assert main(["orbit", "--system", "vdp", "--params", "eps=x"]) == 2
    assert main(["orbit", "--system", "vdp", "--guess", "1,2,3"]) == 2


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["bound"])
    assert info.value.code == 2


def test_domain_error_exit_code(tmp_path):
    # no cycle: the fixed point is stable for a > 1
    assert main(["orbit", "--system", "vdp", "--params", "a=1.05", "--guess", "1.5,0"]) == 1


def test_bound(records, capsys):
    assert main(["bound", "--orbit-file", str(records["vdp"]), "--n", "100"]) == 0
    row = capsys.readouterr().out.splitlines()[1].split()
    assert float(row[3]) == pytest.approx(0.0532, rel=0.02)


def test_bound_inverse_n(records, capsys):
    vals = []
    for n in ("1", "100"):
        main(["bound", "--orbit-file", str(records["vdp"]), "--n", n])
        vals.append(float(capsys.readouterr().out.splitlines()[1].split()[2]))
    assert vals[0] / vals[1] == pytest.approx(100, rel=1e-5)


def test_bound_discrete(records, capsys):
    assert main(["bound", "--orbit-file", str(records["vdp"]), "--p", "1250"]) == 0
    out = capsys.readouterr().out
    assert abs(numbers(out, "rel. diff")) < 1e-2


def test_bound_missing_file():
    assert main(["bound", "--orbit-file", "/nonexistent/x.orb"]) == 2


@pytest.mark.parametrize("system,g", [("vdp", "5e-5"), ("lorenz", "3e-2")])
def test_simulate_estimate_round_trip(records, tmp_path, capsys, system, g):
    cross = tmp_path / "c.tsv"
    est_file = tmp_path / "e.tsv"
    args = ["simulate", "--orbit-file", str(records[system]), "--g", g, "--n-cycles", "20",
            "--seed", "9", "--out", str(cross)]
    assert main(args) == 0
    assert main(["estimate", "--crossings", str(cross), "--out", str(est_file)]) == 0
    from_file = [float(line.split("\t")[1]) for line in est_file.read_text().splitlines()
                 if line.startswith("lambda_hat")]
    # the same pipeline in process, from the same record
    rec = read_orbit_record(records[system])
    orbit = rec.orbit()
    series = simulate_crossings(orbit, place_sections(orbit, rec.modes[0], 50), float(g), 20, 9)
    est = multiplier_estimate(fit_par(series)).lambda_hat
    expected = list(est) if isinstance(est, tuple) else [est]
    assert from_file == expected


def test_simulate_is_deterministic(records, tmp_path):
    outs = []
    for name in ("a.tsv", "b.tsv"):
        path = tmp_path / name
        main(["simulate", "--orbit-file", str(records["vdp"]), "--g", "5e-5", "--n-cycles", "5",
              "--seed", "1", "--out", str(path)])
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_estimate_missing_file():
    assert main(["estimate", "--crossings", "/nonexistent/c.tsv"]) == 2


def test_run_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("system = vdp\nparams = eps=0.1,a=0.99\nR = 2\nn_cycles = 5\n")
    assert main(["run", "--config", str(cfg)]) == 0
    assert "sqrt(UP)" in capsys.readouterr().out


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "floquet_bound.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("orbit", "bound", "simulate", "estimate", "table1"):
        assert cmd in out.stdout


def test_table1_small_run(tmp_path, capsys):
    out = tmp_path / "t1"
    assert main(["table1", "--out-dir", str(out), "--R", "2", "--n-cycles", "5"]) == 0
    text = capsys.readouterr().out
    assert "vdp" in text and "lorenz" in text
    assert re.search(r"^(PASS|FAIL)  ", text, re.M)
    for name in ("vdp.tsv", "lorenz.tsv", "table1.tsv", "table1.txt"):
        assert (out / name).exists()
