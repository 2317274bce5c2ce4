from __future__ import annotations

import json

import numpy as np
import pytest

from fastdiff.cli import main
from fastdiff.config import RunConfig, config_from_dict
from fastdiff.errors import ConfigurationError
from fastdiff.io import read_csv, write_csv


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


SMALL = {"kind": "rescaled", "grid": {"N": 64}, "t_end": 2.0, "sample_dt": 0.25}


def test_simulate_rescaled(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == 0
    for name in ("nodes.csv", "trajectory.csv", "diagnostics.csv", "manifest.json"):
        assert (out / name).exists()
    header, data = read_csv(out / "diagnostics.csv")
    assert header[:2] == ["t", "F"] and "rel_err" in header
    assert np.all(np.diff(data[:, 0]) > 0)
    man = json.loads((out / "manifest.json").read_text())
    assert man["schema_version"] == 1 and man["config"]["grid"]["N"] == 64


def test_simulate_is_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("trajectory.csv", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_original(tmp_path):
    doc = {"kind": "original", "grid": {"N": 64}, "t_end": 5.0, "sample_dt": 0.005, "dt_max": 0.005,
           "initial": {"type": "generic", "amplitude": 1.0}}
    out = tmp_path / "orig"
    assert main(["simulate", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["summary"]["extinct"] is True and man["summary"]["T_star_estimate"] > 0


def test_blowup_demo_manifest(tmp_path):
    doc = {"kind": "blowup-demo", "b_frac": 0.0, "grid": {"N": 256, "stretch": -4}, "t_end": 20.0, "sample_dt": 5.0,
           "dt_max": 0.5, "initial": {"type": "bubble", "lam": 4.0}}
    out = tmp_path / "blow"
    assert main(["simulate", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    lams = [f["lambda"] for f in man["summary"]["bubble_fit"]]
    assert man["summary"]["sup_v_growth"] > 1 and all(b > a for a, b in zip(lams, lams[1:]))
    assert (out / "bubble_fit.csv").exists()


def test_malformed_config_names_field(tmp_path, capsys):
    assert main(["simulate", "--config", _write(tmp_path, {"b": 100.0}), "--out", str(tmp_path / "x")]) == 2
    assert "b:" in capsys.readouterr().err
    assert main(["simulate", "--config", _write(tmp_path, {"grid": {"N": 8}}), "--out", str(tmp_path / "x")]) == 2
    assert "grid.N" in capsys.readouterr().err


@pytest.mark.parametrize(
    "doc,field",
    [({"kind": "bogus"}, "kind"), ({"grid": {"R": -1}}, "grid.R"), ({"colour": 1}, "colour"),
     ({"initial": {"type": "x"}}, "initial.type"), ({"b_frac": 1.5}, "b_frac"), ({"dt_init": 1.0}, "dt_init")],
)
def test_config_validation(doc, field):
    with pytest.raises(ConfigurationError) as err:
        config_from_dict(doc)
    assert err.value.field == field


def test_config_defaults_carry_thresholds():
    cfg = config_from_dict({"thresholds": {"mu1": 1e-9}})
    assert cfg.thresholds.mu1 == 1e-9 and cfg.thresholds.bubble_mass_rel == 1e-3
    assert RunConfig().exponent == 3.0


def test_reproduce_suite(capsys):
    assert main(["reproduce", "bubble-mass"]) == 0
    assert capsys.readouterr().out.startswith("PASS [9]")


def test_reproduce_unknown_suite(capsys):
    with pytest.raises(SystemExit) as err:
        main(["reproduce", "nope"])
    assert err.value.code == 2
    assert "extinction-oracle" in capsys.readouterr().err


def test_stationary_and_spectrum_commands(tmp_path):
    cfg = _write(tmp_path, {"grid": {"N": 128}})
    assert main(["stationary", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "p")]) == 0
    man = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert man["summary"]["verdict"] == "NONDEGENERATE" and abs(man["summary"]["mu"][0] - 1) < 1e-8


def test_stationary_without_solution(tmp_path, capsys):
    cfg = _write(tmp_path, {"grid": {"N": 64}, "b_frac": 0.0})
    assert main(["stationary", "--config", cfg, "--out", str(tmp_path / "s")]) == 3


def test_bubbles_sweep_threads_agree(tmp_path):
    cfg = _write(tmp_path, {"sweep_lams": [10.0, 100.0]})
    assert main(["bubbles", "--config", cfg, "--out", str(tmp_path / "one")]) == 0
    assert main(["bubbles", "--config", cfg, "--out", str(tmp_path / "two"), "--threads", "2"]) == 0
    a = (tmp_path / "one" / "interaction_sweep.csv").read_bytes()
    assert a == (tmp_path / "two" / "interaction_sweep.csv").read_bytes()
    assert a.count(b"\r\n") == 9


def test_fit_rate_command(tmp_path):
    t = np.linspace(0, 40, 81)
    series = write_csv(tmp_path / "s.csv", ["t", "rel_err"], np.column_stack([t, 2 * np.exp(-0.3 * t)]))
    assert main(["fit-rate", "--series", str(series), "--out", str(tmp_path / "f")]) == 0
    verdict = json.loads((tmp_path / "f" / "rate_verdict.json").read_text())
    assert verdict["model"] == "EXPONENTIAL" and abs(verdict["gamma"] - 0.3) < 1e-9


def test_verify_inequalities_kind(tmp_path):
    cfg = _write(tmp_path, {"kind": "verify-inequalities", "seed": 7})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    man = json.loads((tmp_path / "v" / "manifest.json").read_text())
    assert man["summary"]["passed"] is True and man["config"]["seed"] == 7
