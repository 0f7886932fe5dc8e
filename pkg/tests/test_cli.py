import json
import os

import numpy as np
import pytest

from euler_shell.cli import THREAD_VARS, config_text, parse_config, run

SMALL = {
    "background": ["--M0", "0.9", "--r1", "1.05", "--n", "11", "--field-L", "3", "--field-nr", "32"],
    "transonic-background": ["--r_b", "1.1", "--M_s", "0.6", "--n", "11"],
    "coeffs": ["--gamma", "1.4", "--t", "0.5"],
    "scondition": ["--rb_grid", "1.08:1.12:3", "--n_max", "8"],
    "subsonic": ["--M0", "0.9", "--L_max", "2", "--N_r", "12", "--perturb", "p0=1,0,1e-3"],
    "transonic": ["--r_b", "1.1", "--M_s", "0.6", "--L_max", "2", "--N_r", "8",
                  "--perturb", "p1=1,0,1e-3"],
}
ECHO = {"background": "background.json", "transonic-background": "transonic_background.json",
        "coeffs": "coeffs.json", "scondition": "scondition.json", "subsonic": "subsonic.json",
        "transonic": "transonic.json"}


def _run(tmp_path, sub, extra=(), name="out"):
    out = tmp_path / name
    code = run(["--out", str(out), sub, *extra])
    return code, out


def test_coeffs_pole_row(tmp_path, capsys):
    code, _ = _run(tmp_path, "coeffs", ["--gamma", "1.4", "--t", "1.0"])
    assert code == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    vals = dict(zip(header.split(","), row.split(",")))
    assert float(vals["stability_poly"]) == pytest.approx(-11.52, abs=1e-12)


def test_background_rejects_sonic_entry(tmp_path, capsys):
    code, _ = _run(tmp_path, "background", ["--M0", "1.0"])
    assert code == 2
    assert "sonic-at-entry" in capsys.readouterr().err


def test_invalid_parameters(tmp_path):
    assert _run(tmp_path, "coeffs", ["--gamma", "1.0", "--t", "0.5"])[0] == 2
    assert _run(tmp_path, "background", ["--M0", "0.9", "--r0", "2", "--r1", "1"])[0] == 2
    assert _run(tmp_path, "background", [])[0] == 2
    assert _run(tmp_path, "bogus", [])[0] == 2


def test_unknown_config_key_reports_line(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ngamma = 1.4\nwibble = 3\n")
    code, _ = _run(tmp_path, "coeffs", ["--config", str(cfg), "--t", "0.5"])
    assert code == 2
    err = capsys.readouterr().err
    assert f"{cfg}:3" in err and "wibble" in err


def test_malformed_config_lines(tmp_path):
    for text in ("gamma 1.4\n", "gamma = abc\n", "gamma = 1.4\ngamma = 1.5\n"):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(text)
        assert _run(tmp_path, "coeffs", ["--config", str(cfg), "--t", "0.5"])[0] == 2
    cfg.write_text("M0 = 0.9\nperturb.p0 = 1,0\n")
    assert _run(tmp_path, "subsonic", ["--config", str(cfg)])[0] == 2
    cfg.write_text("M0 = 0.9\nperturb.nope = 1,0,1e-3\n")
    assert _run(tmp_path, "subsonic", ["--config", str(cfg)])[0] == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("gamma = 1.4\nt = 0.25\n")
    code, out = _run(tmp_path, "coeffs", ["--config", str(cfg), "--t", "0.5"])
    assert code == 0
    assert json.loads((out / "coeffs.json").read_text())["params"]["t"] == 0.5


def test_transonic_unperturbed_is_fixed_point(tmp_path):
    code, out = _run(tmp_path, "transonic", ["--r_b", "1.1", "--M_s", "0.6", "--L_max", "2",
                                             "--N_r", "8"])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["iterations"] == 1
    psi = np.loadtxt(out / "front.csv", delimiter=",", skiprows=1)[:, 2]
    assert np.abs(psi - 1.1).max() <= 1e-12


def test_nonconvergence_exit_code(tmp_path):
    code, out = _run(tmp_path, "subsonic", SMALL["subsonic"] + ["--max_iter", "1"])
    assert code == 3
    assert not json.loads((out / "report.json").read_text())["converged"]


def test_residuals_of_background_field(tmp_path):
    code, out = _run(tmp_path, "background", SMALL["background"])
    assert code == 0
    f = out / "background_field.csv"
    assert run(["--out", str(out), "residuals", str(f)]) == 0
    norms = json.loads((out / "residuals.json").read_text())[str(f)]
    assert max(v["linf"] for v in norms.values()) <= 1e-9


def test_residuals_of_corrupted_field(tmp_path):
    _, out = _run(tmp_path, "background", SMALL["background"])
    f = out / "background_field.csv"
    lines = f.read_text().splitlines()
    cols = lines[40].split(",")
    cols[6] = str(2 * float(cols[6]))
    lines[40] = ",".join(cols)
    f.write_text("\n".join(lines) + "\n")
    assert run(["--out", str(out), "residuals", str(f)]) == 0
    norms = json.loads((out / "residuals.json").read_text())[str(f)]
    assert max(v["linf"] for v in norms.values()) > 1e-2


def test_residuals_input_errors(tmp_path):
    _, out = _run(tmp_path, "background", SMALL["background"])
    empty = out / "empty.csv"
    empty.write_text("")
    assert run(["--out", str(out), "residuals", str(empty)]) == 2
    assert run(["--out", str(out), "residuals", str(out / "missing.csv")]) == 2
    # table without the metadata sidecar
    assert run(["--out", str(out), "residuals", str(out / "background.csv")]) == 2
    # schema mismatch: sidecar present, wrong columns
    bad = out / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    (out / "bad.csv.json").write_text((out / "background_field.csv.json").read_text())
    assert run(["--out", str(out), "residuals", str(bad)]) == 2


@pytest.mark.parametrize("sub", ["background", "transonic-background", "subsonic", "transonic"])
def test_outputs_deterministic(tmp_path, sub):
    _, a = _run(tmp_path, sub, SMALL[sub], "a")
    _, b = _run(tmp_path, sub, SMALL[sub], "b")
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


@pytest.mark.parametrize("sub", sorted(SMALL))
def test_echo_round_trips_through_config(tmp_path, sub):
    code, out = _run(tmp_path, sub, SMALL[sub])
    assert code == 0
    echo = json.loads((out / ECHO[sub]).read_text())
    assert echo["subcommand"] == sub
    params, perturb = parse_config(config_text(echo), sub)
    assert params == echo["params"]
    assert perturb == echo["perturb"]
    # and the echo drives an identical run
    cfg = tmp_path / "echo.cfg"
    cfg.write_text(config_text(echo))
    assert run(["--out", str(tmp_path / "again"), sub, "--config", str(cfg)]) == 0
    again = json.loads((tmp_path / "again" / ECHO[sub]).read_text())
    assert again["params"] == echo["params"] and again["perturb"] == echo["perturb"]


def test_scondition_verdict(tmp_path):
    code, out = _run(tmp_path, "scondition", SMALL["scondition"])
    assert code == 0
    assert json.loads((out / "scondition.json").read_text())["verdict"] == "holds"
    rows = np.loadtxt(out / "scondition.csv", delimiter=",", skiprows=1)
    assert rows.shape == (3 * 9, 3)


def test_thread_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("EULER_SHELL_THREADS", "1")
    for var in THREAD_VARS:
        monkeypatch.delenv(var, raising=False)
    assert _run(tmp_path, "coeffs", ["--gamma", "1.4", "--t", "0.5"])[0] == 0
    assert all(os.environ[v] == "1" for v in THREAD_VARS)
