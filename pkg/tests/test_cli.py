import json
import subprocess
import sys

import numpy as np
import pytest

from kleinriesz.cli import main
from kleinriesz.config import ConfigError, load_config, validate


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out


def test_verify_default(tmp_path, capsys):
    code, out = run(["verify"], tmp_path)
    assert code == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["status"] == "ok"
    assert all(v["passed"] for v in rep["identities"].values())
    assert "config" in rep


def test_solve_sphere(tmp_path):
    code, out = run(["solve", "--resolution", "8"], tmp_path)
    assert code == 0
    rep = json.loads((out / "solve.json").read_text())
    assert abs(rep["summary"]["mean_u"] - 0.930605) < 1e-3
    assert rep["kernel"]["tail_bound"] == 0 and rep["config"]["resolution"] == 8
    data = np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1)
    assert data.shape[1] == 3 + 4


def test_solve_is_deterministic(tmp_path):
    grp = '{"generators": [{"type": "dilation", "k": 2}]}'
    args = ["solve", "--resolution", "5", "--set", f"group={grp}", "--warp", "0.2"]
    c1, o1 = run(args, tmp_path, "a")
    c2, o2 = run(args, tmp_path, "b")
    assert c1 == c2 == 0
    assert (o1 / "solution.csv").read_bytes() == (o2 / "solution.csv").read_bytes()
    rep = json.loads((o1 / "solve.json").read_text())
    assert 0 < rep["kernel"]["tail_bound"] <= 1e-9


def test_malformed_group_file(tmp_path, capsys):
    g = tmp_path / "g.json"
    g.write_text(json.dumps({"generators": [{"type": "dilation", "k": -1}], "dimension": 3}))
    code, out = run(["solve", "--group-file", str(g)], tmp_path)
    assert code == 2
    err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert err["status"] == "error" and any("generators[0].k" in e for e in err["errors"])
    assert json.loads((out / "error.json").read_text())["errors"] == err["errors"]


def test_config_errors_listed_exhaustively(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("alpha: 5\nresolution: 1\nbogus: 3\nstep: -1\ntolerances: {solve_tol: 0}\n")
    with pytest.raises(ConfigError) as e:
        load_config(cfg)
    keys = {msg.split(":")[0] for msg in e.value.errors}
    assert {"alpha", "resolution", "bogus", "step", "tolerances.solve_tol"} <= keys


def test_type_errors_do_not_stop_validation():
    with pytest.raises(ConfigError) as e:
        validate({"n": "three", "alpha": 9.0, "samples": 2})
    keys = {msg.split(":")[0] for msg in e.value.errors}
    assert {"n", "alpha", "samples"} <= keys


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 2.5, "resolution": 4}))
    c = load_config(cfg, {"resolution": 6})
    assert c.alpha == 2.5 and c.resolution == 6
    assert c.problem().p == pytest.approx(11)


def test_poincare_and_kernel(tmp_path):
    grp = '{"generators": [{"type": "dilation", "k": 2}]}'
    code, out = run(["poincare", "--set", f"group={grp}", "--set", "s=0.5",
                     "--set", "cutoff=200"], tmp_path)
    assert code == 0
    rep = json.loads((out / "poincare.json").read_text())
    assert abs(rep["partial_sum"] - 6.565661087493446) < 1e-12
    assert rep["exponent_estimate"] < 0.1
    code, out = run(["kernel", "--resolution", "4", "--set", f"group={grp}"], tmp_path, "k")
    assert code == 0
    assert json.loads((out / "kernel.json").read_text())["kernel"]["tail_bound"] <= 1e-9
    code, _ = run(["poincare"], tmp_path, "p2")
    assert code == 2


def test_moving_plane_rescale_continue(tmp_path):
    grp = '{"generators": [{"type": "dilation", "k": 2}]}'
    common = ["--set", f"group={grp}", "--resolution", "6", "--warp", "0.2"]
    code, out = run(["moving-plane", *common, "--lambdas", "2", "1", "0.5"], tmp_path, "mp")
    assert code == 0
    rep = json.loads((out / "moving_plane.json").read_text())
    assert rep["floor_test_passed"]
    code, out = run(["rescale", *common, "--window", "0.3"], tmp_path, "rs")
    assert code == 0
    rep = json.loads((out / "rescale.json").read_text())
    assert rep["kernel_gap_monotone"]
    code, out = run(["continue", *common, "--alpha", "2.4", "--step", "0.2"], tmp_path, "ct")
    assert code == 0
    rows = np.loadtxt(out / "continuation.csv", delimiter=",", skiprows=1)
    assert rows.shape[0] == 3 and np.allclose(rows[:, 0], [2.0, 2.2, 2.4])


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "kleinriesz", "verify", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["status"] == "ok"
