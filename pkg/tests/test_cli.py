import csv
import io
from pathlib import Path

import numpy as np
import pytest

from optospring.cli import main
from optospring.oracle import canonical_config
from optospring.params import sample_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _rows(path):
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(lines))))


@pytest.fixture
def sample_path(tmp_path):
    p = tmp_path / "sample.toml"
    sample_config(1064e-9).dump(p)
    return p


@pytest.mark.parametrize("argv", [["config", "validate"], ["config-validate"]])
def test_config_validate(argv, sample_path, capsys):
    assert main(argv + ["--config", str(sample_path)]) == 0
    out = capsys.readouterr().out
    assert "finesse" in out.lower() and "blue" in out


def test_shipped_configs_validate(capsys):
    for p in sorted(CONFIGS.glob("*.toml")):
        assert main(["config-validate", "--config", str(p)]) == 0, p.name


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[oscillator]\nm = -1.0\nf_m = 100.0\nQ = 10.0\n")
    assert main(["config-validate", "--config", str(p)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_config_flag(capsys):
    assert main(["budget"]) == 2


def test_cavity_dump(sample_path, tmp_path):
    out = tmp_path / "cav.csv"
    assert main(["cavity", "dump", "--config", str(sample_path), "--out", str(out), "--points", "20"]) == 0
    rows = _rows(out)
    assert len(rows) == 21
    assert "config_hash" in out.read_text()


def test_solve_detuning_closed_form(capsys):
    assert main(["solve-detuning", "--kappa", "2", "--gamma-hz", "1e6", "--delta-r-hz", "1e6"]) == 0
    out = capsys.readouterr().out
    value = float(out.split("Delta_B_hz =")[1].split()[0])
    assert value == pytest.approx(-np.sqrt(7) * 1e6, rel=1e-9)


def test_solve_detuning_bad_kappa(capsys):
    assert main(["solve-detuning", "--kappa", "0.5", "--gamma-hz", "1e6", "--delta-r-hz", "1e6"]) != 0


def test_stability_exit_codes(tmp_path, capsys):
    p = tmp_path / "blue.toml"
    canonical_config(fields="blue").dump(p)
    assert main(["stability", "--config", str(p)]) == 1
    assert "UNSTABLE" in capsys.readouterr().out
    assert main(["stability", "--config", str(p), "--allow-unstable"]) == 0
    assert main(["stability", "--config", str(p), "--gain", "ideal"]) == 0


def test_closed_loop_csv(sample_path, tmp_path):
    out = tmp_path / "cl.csv"
    assert main(["closed-loop", "--config", str(sample_path), "--gain", "1e4", "--out", str(out), "--points", "5"]) == 0
    rows = _rows(out)
    assert rows[0][:4] == ["omega", "re_chi_inv", "im_chi_inv", "S_F_residual"]
    assert len(rows) == 6


def test_budget_summary(sample_path, capsys):
    assert main(["budget", "--config", str(sample_path), "--summary"]) == 0
    out = capsys.readouterr().out
    assert "Q_eff" in out and "--- machine-readable ---" in out


def test_budget_table_file(sample_path, tmp_path):
    out = tmp_path / "b.csv"
    assert main(["budget", "--config", str(sample_path), "--out", str(out), "--freq-range", "10", "1e6",
                 "--points", "7"]) == 0
    rows = _rows(out)
    assert rows[0][0] == "f_hz" and len(rows) == 8
    assert float(rows[1][0]) == pytest.approx(10.0)


def test_simulate(tmp_path, capsys):
    p = tmp_path / "desk.toml"
    canonical_config().dump(p)
    out = tmp_path / "psd.csv"
    argv = ["simulate", "--config", str(p), "--dt", "2.5e-7", "--duration", "1.0", "--decimate", "40",
            "--seed", "3", "--trajectories", "2", "--threads", "2", "--out", str(out)]
    assert main(argv) == 0
    first = out.read_text()
    assert "seeds: [3, 4]" in first
    assert main(argv) == 0
    assert out.read_text() == first


def test_simulate_step_too_large(tmp_path, capsys):
    p = tmp_path / "desk.toml"
    canonical_config().dump(p)
    assert main(["simulate", "--config", str(p), "--dt", "1e-4", "--duration", "2"]) == 2


def test_sweep_eta_monotone(sample_path, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", str(sample_path), "--param", "detector.eta", "--range", "0.5", "1.0",
                 "--points", "6", "--metric", "T_res", "--out", str(out)]) == 0
    rows = _rows(out)[1:]
    blue = [float(r[1]) for r in rows]
    assert all(a > b for a, b in zip(blue, blue[1:]))
    assert all(r[-1] == "ok" for r in rows)


def test_sweep_single_point_and_invalid_rows(sample_path, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", str(sample_path), "--param", "field.blue.P_circ", "--range", "0.2", "0.2",
                 "--metric", "omega_os", "--out", str(out)]) == 0
    assert len(_rows(out)) == 2
    assert main(["sweep", "--config", str(sample_path), "--param", "field.blue.P_circ", "--range", "-0.1", "0.1",
                 "--points", "3", "--metric", "omega_os", "--out", str(out)]) == 0
    rows = _rows(out)[1:]
    assert rows[0][-1] == "ConfigError" and rows[0][1] == "nan"
    assert rows[-1][-1] == "ok"


def test_sweep_unknown_path(sample_path):
    assert main(["sweep", "--config", str(sample_path), "--param", "oscillator.colour", "--range", "0", "1",
                 "--metric", "Q_eff"]) == 2
