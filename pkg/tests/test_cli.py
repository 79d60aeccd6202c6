import hashlib
import json
from pathlib import Path

import pytest

from spinmo.cli import main
from spinmo.config import load as load_config, resolve
from spinmo.errors import ConfigError


def write_cfg(tmp_path: Path, doc: dict, name: str = "cfg.json") -> Path:
    p = tmp_path / name
    p.write_text(json.dumps(doc), encoding="utf-8")
    return p


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


BASE = {
    "physics": {"c2p_hz": 25.0, "n_atoms": 12},
    "schedule": {
        "segments": [
            {"kind": "parabolic_ramp", "q0_hz": 30.0, "T0_s": 0.08, "t_begin_s": 0.0, "t_end_s": 0.05},
            {"kind": "hold", "q_hz": 0.8, "duration_s": 0.03},
        ]
    },
    "output": {"sample_dt_s": 0.01},
}


def test_config_defaults_and_validation():
    cfg = resolve({"physics": {"c2p_hz": 25.0, "n_atoms": 10}})
    assert cfg["physics"]["convention"] == "angular"
    assert cfg["optimizer"]["points_per_decade"] == 40
    with pytest.raises(ConfigError) as ei:
        resolve({"physics": {"c2p_hz": 25.0, "n_atoms": 10}, "noise": {"n_traj": 0}})
    assert "$.noise.n_traj" in str(ei.value)
    with pytest.raises(ConfigError):
        resolve({"physics": {"c2p_hz": -1.0, "n_atoms": 10}})
    with pytest.raises(ConfigError):
        resolve({"physics": {"c2p_hz": 25.0, "n_atoms": 10}, "bogus": 1})


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_evolve_roundtrip_and_schema(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    out = tmp_path / "run1"
    assert main(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
    csv = (out / "records.csv").read_text().splitlines()
    assert csv[0] == "t,q,K,F_singlet,F_twinfock,xi2,pc,norm,n_current"
    assert len(csv) > 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["convention"] == "angular"
    assert manifest["seed"] == 0
    assert "records.csv" in manifest["outputs"]
    assert (out / "run_info.json").exists()


def test_empty_schedule_single_row(tmp_path):
    doc = dict(BASE)
    doc["schedule"] = {"segments": []}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "empty"
    assert main(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "records.csv").read_text().splitlines()
    assert len(rows) == 2  # header + t=0 row


def test_determinism_rerun_identical_sha(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["evolve", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["evolve", "--config", str(cfg), "--out", str(out2)]) == 0
    assert sha(out1 / "records.csv") == sha(out2 / "records.csv")
    assert sha(out1 / "manifest.json") == sha(out2 / "manifest.json")


def test_exit_code_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"physics": {"c2p_hz": 25.0}})
    rc = main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "ConfigError" and err["exit_code"] == 2


def test_exit_code_numeric_error(tmp_path, capsys):
    doc = json.loads(json.dumps(BASE))
    doc["output"]["ramp_dt_s"] = 0.02  # violates the step-size precheck
    cfg = write_cfg(tmp_path, doc)
    rc = main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert rc == 3
    err = json.loads(capsys.readouterr().err.strip())
    assert err["exit_code"] == 3


def test_seed_and_convention_overrides(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    out = tmp_path / "ovr"
    assert main([
        "evolve", "--config", str(cfg), "--out", str(out),
        "--seed", "7", "--convention", "plain",
    ]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["convention"] == "plain"


def test_oscillator_demo(tmp_path):
    cfg = write_cfg(tmp_path, {"physics": {"c2p_hz": 25.0, "n_atoms": 4}})
    out = tmp_path / "osc"
    assert main(["oscillator-demo", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_fidelity"] >= 0.999
    head = (out / "oscillator.csv").read_text().splitlines()[0]
    assert head == "t,x_expect,fidelity_mirror"


def test_phase_diagram_small(tmp_path):
    doc = {
        "physics": {"c2p_hz": 25.0, "n_atoms": 50},
        "phase_diagram": {"n_list": [50], "points_per_decade": 10},
    }
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "pd"
    assert main(["phase-diagram", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert "50" in summary and summary["50"]["q_c_hz"] > 0
    rows = (out / "gaps.csv").read_text().splitlines()
    assert rows[0] == "n_atoms,q_hz,gap_hz" and len(rows) > 10


def test_noise_command_small(tmp_path):
    doc = {
        "physics": {"c2p_hz": 25.0, "n_atoms": 9},
        "schedule": {"segments": [{"kind": "hold", "q_hz": 0.5, "duration_s": 0.02}]},
        "noise": {"n_traj": 4},
        "output": {"sample_dt_s": 0.01},
    }
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "noise"
    assert main(["noise", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "aggregate_all.csv").exists()
    ens = json.loads((out / "ensemble.json").read_text())
    assert ens["n_traj"]["all"] == 4


def test_loss_command_small(tmp_path):
    doc = {
        "physics": {"c2p_hz": 25.0, "n_atoms": 8},
        "schedule": {"segments": [{"kind": "hold", "q_hz": 0.2, "duration_s": 0.2}]},
        "loss": {"gamma_per_s": 0.05, "n_traj": 20},
        "output": {"sample_dt_s": 0.1},
    }
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "loss"
    assert main(["loss", "--config", str(cfg), "--out", str(out)]) == 0
    ps = json.loads((out / "postselect.json").read_text())
    assert ps["all"]["n_total"] == 20
    assert 0 <= ps["unselected_final_f_singlet"] <= 1
    jumps = json.loads((out / "jumps.json").read_text())
    assert len(jumps) == 20
