import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ymh_lab import presets
from ymh_lab.cli import main
from ymh_lab.fields import random_bandlimited
from ymh_lab.grid import TorusGrid
from ymh_lab.io import save_field, scenario_hash

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def write(tmp_path, name, scenario):
    path = tmp_path / name
    path.write_text(json.dumps(scenario))
    return path


def report(path):
    return json.loads(Path(path).read_text())["report"]


def base(preset="trivial", N=16, **pair):
    return {"grid": {"n": 1, "points_per_axis": N}, "bundle": {"rank": 2},
            "pair": dict(preset=preset, **pair)}


def test_classify_presets(tmp_path):
    out = tmp_path / "r.json"
    assert main(["classify", "--config", str(SCENARIOS / "trivial.json"), "--out", str(out)]) == 0
    r = report(out)
    assert r["verdicts"]["hermitian"] and r["verdicts"]["strong"] and r["verdicts"]["degenerate"]
    assert r["lam"] == 0.0
    assert main(["classify", "--config", str(SCENARIOS / "nilpotent.json"), "--out", str(out)]) == 0
    r = report(out)
    assert not r["verdicts"]["ymh_pair"]
    assert r["ymh_pair_residual"] ** 2 == pytest.approx(32.0, abs=1e-9)
    assert r["det_min_abs"] == pytest.approx(4.0) and r["det_max_abs"] == pytest.approx(4.0)
    assert main(["classify", "--config", str(SCENARIOS / "diagonal_higgs.json"), "--out", str(out)]) == 0
    r = report(out)
    assert r["verdicts"]["strong"] and r["verdicts"]["degenerate"]
    doc = json.loads(out.read_text())
    scen = json.loads((SCENARIOS / "diagonal_higgs.json").read_text())
    assert doc["scenario_hash"] == scenario_hash(scen)


def test_flow_command(tmp_path):
    out = tmp_path / "traj.csv"
    assert main(["flow", "--config", str(SCENARIOS / "nilpotent.json"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# scenario_hash=")
    assert lines[1] == "t,ymh,holomorphy,integrability,k_herm,dt"
    last = [float(v) for v in lines[-1].split(",")]
    assert last[0] == pytest.approx(0.25) and last[1] == pytest.approx(8 / 9, rel=1e-6)
    assert (tmp_path / "traj_a.json").exists() and (tmp_path / "traj_phi.json").exists()
    meta = json.loads((tmp_path / "traj_phi.json").read_text())["meta"]
    assert "scenario_hash" in meta and "version" in meta


def test_flow_overrides_and_binary_output(tmp_path):
    scen = base("trivial")
    scen["output"] = {"format": "binary"}
    cfg = write(tmp_path, "s.json", scen)
    out = tmp_path / "t.csv"
    assert main(["flow", "--config", str(cfg), "--out", str(out), "--t-end", "0.001", "--dt", "auto"]) == 0
    assert (tmp_path / "t_a.ymh").read_bytes()[:4] == b"YMH1"
    assert main(["flow", "--config", str(cfg), "--out", str(out), "--t-end", "0.001", "--dt", "x"]) == 2
    assert main(["flow", "--config", str(cfg), "--out", str(out)]) == 2


def test_flow_step_failure_exit_code(tmp_path):
    scen = base("random", seed=1, k_max=2, amplitude=3.0)
    scen["flow"] = {"t_end": 1e6, "dt": 1e5}
    cfg = write(tmp_path, "s.json", scen)
    with np.errstate(all="ignore"):
        assert main(["flow", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 4


def test_stability_presets(tmp_path):
    out = tmp_path / "s.json"
    assert main(["stability", "--config", str(SCENARIOS / "stability_plane_wave.json"),
                 "--out", str(out)]) == 0
    r = report(out)
    assert r["verdict"] == "stable"
    assert r["Q_value"] == pytest.approx(77.94735870844235, rel=1e-12)
    assert main(["stability", "--config", str(SCENARIOS / "stability_scaling.json"),
                 "--out", str(out)]) == 0
    assert report(out)["verdict"] == "semi-stable"
    scen = base("trivial")
    scen["deformation"] = {"preset": "constant", "M": [[0, 0.3], [0, 0]], "P": [[0, 0], [0.3, 0]]}
    assert main(["stability", "--config", str(write(tmp_path, "c.json", scen)), "--out", str(out)]) == 0
    assert report(out)["verdict"] == "semi-stable"


def test_verify_command(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["verify", "--suite", "kahler", "--resolutions", "16", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "identity,resolution,residual,rate,class"
    assert len(lines) == 3 and lines[2].split(",")[3] == ""
    assert main(["verify", "--suite", "conformal_shift", "--resolutions", "16,32,64",
                 "--out", str(out)]) == 0
    rows = [l.split(",") for l in out.read_text().splitlines()[2:]]
    assert all(1.7 <= float(r[3]) <= 2.3 for r in rows[1:])
    assert rows[0][4] == "order-2"
    assert json.loads((tmp_path / "v_summary.json").read_text())["kind"] == "verify"


@pytest.mark.parametrize("argv", [["verify", "--suite", ""], ["verify", "--suite", "bogus"],
                                  ["verify", "--resolutions", "16,x"], ["verify", "--resolutions", "15"],
                                  ["classify"]])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as info:
        main(["nonsense"])
    assert info.value.code == 2


def test_deform_command(tmp_path):
    out = tmp_path / "d.json"
    assert main(["deform", "--config", str(SCENARIOS / "deform_constant.json"), "--out", str(out)]) == 0
    r = report(out)
    assert r["obstructed"] is True
    assert [row["order"] for row in r["residual_table"]] == [0, 1, 2, 3]
    assert (tmp_path / "d_alpha3.json").exists()
    assert main(["deform", "--config", str(SCENARIOS / "deform_constant.json"), "--out", str(out),
                 "--order", "-1"]) == 2


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["classify", "--config", str(bad)]) == 2
    assert main(["classify", "--config", str(tmp_path / "missing.json")]) == 2
    for scen in (base("unknown"), {"bundle": {"rank": 2}, "pair": {"preset": "trivial"}},
                 dict(base("trivial", N=7)), dict(base("nilpotent"), bundle={"rank": 3}),
                 dict(base("trivial"), tolerances={"classify": -1})):
        assert main(["classify", "--config", str(write(tmp_path, "s.json", scen))]) == 2
    scen = base("trivial")
    scen["deformation"] = {"preset": "constant", "M": [[1]], "P": [[1]]}
    assert main(["stability", "--config", str(write(tmp_path, "s.json", scen))]) == 2


def test_from_files_and_data_errors(tmp_path):
    g = TorusGrid(1, 16)
    pair = presets.random_pair(g, 2, 3, 2, 0.5)
    save_field(pair.a, tmp_path / "a.json")
    save_field(pair.phi, tmp_path / "phi.ymh", "binary")
    scen = base("from_files", a_path="a.json", phi_path="phi.ymh")
    out = tmp_path / "r.json"
    assert main(["classify", "--config", str(write(tmp_path, "s.json", scen)), "--out", str(out)]) == 0
    scen["grid"]["points_per_axis"] = 32
    assert main(["classify", "--config", str(write(tmp_path, "s.json", scen))]) == 3
    scen = base("from_files", a_path="phi.ymh", phi_path="a.json")
    assert main(["classify", "--config", str(write(tmp_path, "s.json", scen))]) == 3
    (tmp_path / "junk.json").write_text("[]")
    scen = base("from_files", a_path="junk.json", phi_path="a.json")
    assert main(["classify", "--config", str(write(tmp_path, "s.json", scen))]) == 3


def test_thread_variable(tmp_path, monkeypatch):
    cfg = str(SCENARIOS / "trivial.json")
    monkeypatch.setenv("YMH_THREADS", "2")
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o.json")]) == 0
    monkeypatch.setenv("YMH_THREADS", "zero")
    assert main(["classify", "--config", cfg]) == 2


def test_stdout_when_no_output(capsys):
    assert main(["classify", "--config", str(SCENARIOS / "trivial.json")]) == 0
    assert json.loads(capsys.readouterr().out)["kind"] == "classify"


def _run_twice(tmp_path, argv, names):
    outs = []
    for run in ("one", "two"):
        d = tmp_path / run
        d.mkdir()
        assert main(argv + ["--out", str(d / names[0])]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    return outs


@pytest.mark.parametrize("argv,name", [
    (["classify", "--config", str(SCENARIOS / "nilpotent.json")], "r.json"),
    (["flow", "--config", str(SCENARIOS / "nilpotent.json"), "--t-end", "0.01"], "f.csv"),
    (["stability", "--config", str(SCENARIOS / "stability_plane_wave.json")], "s.json"),
    (["deform", "--config", str(SCENARIOS / "deform_constant.json"), "--order", "2"], "d.json"),
    (["verify", "--suite", "kahler", "--resolutions", "16,32"], "v.csv"),
])
def test_outputs_are_bit_identical(tmp_path, argv, name):
    a, b = _run_twice(tmp_path, argv, [name])
    assert a == b and len(a) >= 1


def test_random_preset_is_deterministic(tmp_path):
    scen = base("random", seed=4, k_max=2, amplitude=0.5)
    scen["deformation"] = {"preset": "random", "seed": 2}
    cfg = write(tmp_path, "s.json", scen)
    a, b = _run_twice(tmp_path, ["stability", "--config", str(cfg)], ["s.json"])
    assert a == b


def test_console_script_module_entry():
    res = subprocess.run([sys.executable, "-m", "ymh_lab", "classify", "--config",
                          str(SCENARIOS / "trivial.json")], capture_output=True, text=True)
    assert res.returncode == 0 and '"kind": "classify"' in res.stdout
