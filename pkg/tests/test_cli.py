import json
import os
import subprocess
import sys

import numpy as np
import pytest

from underact.cli import main, run
from underact.config import load_config
from underact.snapshot import load_snapshot, read_json

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


FLAT = """
[system]
preset = flat_block
m = 2
s = 1
[grid]
n1 = 41
n2 = 41
[simulate]
t_final = 2
dt = 0.05
initial_states = 0.2, 0.1, 0, 0; -0.1, 0, 0.05, 0
"""


def test_flat_design_and_verify(tmp_path):
    cfg = _write(tmp_path, FLAT)
    out = str(tmp_path / "out")
    assert run("design", cfg, out) == 0
    diag = read_json(os.path.join(out, "diagnostics.json"))
    assert diag["schema_version"] == 1
    assert diag["diagnostics"]["matching_residual"] <= 1e-10
    man, chart, arrays = load_snapshot(os.path.join(out, "snapshot"))
    assert set(arrays) == {"mu", "sigma", "y", "ghat11", "Vhat"}
    assert chart.n1 == 41 and len(man["mask"]) == 41
    assert run("verify", cfg, out) == 0
    rep = read_json(os.path.join(out, "verify.json"))
    assert rep["matched_source"] == "snapshot"
    assert rep["max_matching_residual"] <= 1e-10
    assert len(rep["runs"]) == 2
    assert all(r["trajectory_gap"] <= 1e-6 for r in rep["runs"])


def test_simulate_writes_trajectories(tmp_path):
    cfg = _write(tmp_path, FLAT + "kinds = closed_loop, open_loop\n")
    out = str(tmp_path / "out")
    assert run("simulate", cfg, out) == 0
    rep = read_json(os.path.join(out, "simulate.json"))
    assert len(rep["runs"]) == 4
    data = np.loadtxt(os.path.join(out, "trajectory_closed_loop_0.csv"), delimiter=",", skiprows=1)
    assert data.shape[0] == 41
    np.testing.assert_allclose(data[0, 1:5], [0.2, 0.1, 0, 0])


def test_linearize_pendulum_poles(tmp_path):
    cfg = _write(tmp_path, """
[system]
preset = pendulum_cart
b = 0.5
[matching]
route = analytic
""")
    out = str(tmp_path / "out")
    assert run("linearize", cfg, out, poles="-1,-1,-2,-2") == 0
    rep = read_json(os.path.join(out, "linearize.json"))
    assert rep["stabilizable"]
    np.testing.assert_allclose(rep["placement"]["gains"], [27.5, 3, 27, 9], rtol=1e-10)
    np.testing.assert_allclose(rep["placement"]["closed_loop_char_poly"],
                               np.poly([-1, -1, -2, -2]), atol=1e-9)
    assert "discrepancy_report" in rep
    assert rep["germ"]["stable"]


def test_main_entry_point(tmp_path, capsys):
    cfg = _write(tmp_path, FLAT)
    assert main(["linearize", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert json.loads(line)["command"] == "linearize"
    # the free block is not controllable at the origin, so placement is refused
    assert main(["linearize", "--config", cfg, "--out", str(tmp_path / "o"),
                 "--poles=-1,-2,-3,-4"]) == 1


def test_module_invocation(tmp_path):
    cfg = _write(tmp_path, FLAT)
    r = subprocess.run([sys.executable, "-m", "underact", "linearize", "--config", cfg,
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr


@pytest.mark.parametrize("body", [
    "[system]\ng12 = 0.5*cos(x1\ng22 = 1\nV = cos(x1)\n",
    "[system]\ng12 = 0.5*cos(x1)\ng22 = 1\nV = foo(x1)\n",
    "[system]\npreset = nope\n",
    "[system]\npreset = pendulum_cart\n[grid]\nn1 = 2\n",
    "[system]\npreset = pendulum_cart\n[matching]\nroute = sideways\n",
    "[system]\npreset = pendulum_cart\n[simulate]\ninitial_states = 1, 2\n",
    "[system]\npreset = pendulum_cart\n[bogus]\nx = 1\n",
])
def test_config_errors_exit_2(tmp_path, body, capsys):
    assert run("design", _write(tmp_path, body), str(tmp_path / "o")) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert run("design", str(tmp_path / "nope.ini"), str(tmp_path / "o")) == 2


def test_bad_poles_exit_2(tmp_path):
    cfg = _write(tmp_path, FLAT)
    assert run("linearize", cfg, str(tmp_path / "o"), poles="-1,x,-2,-3") == 2
    assert run("linearize", cfg, str(tmp_path / "o"), poles="-1+1j,-1+1j,-2,-3") == 2


def test_domain_error_exit_1(tmp_path, capsys):
    # sigma0 = b makes sigma vanish on the reference line
    cfg = _write(tmp_path, """
[system]
preset = pendulum_cart
b = 0.5
[grid]
n1 = 41
n2 = 41
[matching]
route = grid
sigma0 = 0.5
""")
    assert run("design", cfg, str(tmp_path / "o")) == 1
    assert "error" in capsys.readouterr().err


def test_bad_seed_or_threads(tmp_path):
    cfg = _write(tmp_path, FLAT)
    assert run("design", cfg, str(tmp_path / "o"), seed=-1) == 2
    assert run("design", cfg, str(tmp_path / "o"), threads=0) == 2


def test_stale_snapshot_is_ignored(tmp_path):
    out = str(tmp_path / "out")
    assert run("design", _write(tmp_path, FLAT), out) == 0
    other = _write(tmp_path, FLAT.replace("s = 1", "s = 1.5"), "d.ini")
    assert run("verify", other, out) == 0
    assert read_json(os.path.join(out, "verify.json"))["matched_source"] == "in_process"


def test_shipped_configs_load():
    for name in os.listdir(CONFIGS):
        load_config(os.path.join(CONFIGS, name))


@pytest.mark.slow
def test_custom_pendulum_config(tmp_path):
    out = str(tmp_path / "out")
    cfg = os.path.join(CONFIGS, "custom_pendulum.ini")
    assert run("design", cfg, out) == 0
    assert run("verify", cfg, out) == 0
    rep = read_json(os.path.join(out, "verify.json"))
    assert rep["max_matching_residual"] <= 1e-3
