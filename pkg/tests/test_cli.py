import subprocess
import sys

import numpy as np
import pytest

from sisde.cli import main

GREENHALGH = """\
model = greenhalgh
mu = 0.5
x0 = 5
y0 = 20
T = 0.5
level = 6
levels = 3,4,5
paths = 40
seed = 11
dt = 0.01
record_every = 4
fp_max = 60
validate_samples = 2000
"""

ZERO = """\
model = custom
drift = sisde.models:zero
alpha = sisde.models:zero
beta = sisde.models:zero
x0 = 2
y0 = 3
mu = 0.5
levels = 3,4,5,6
paths = 30
"""


def run(tmp_path, sub, text, *extra, name="out"):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(text, encoding="utf-8")
    out = tmp_path / name
    code = main([sub, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_simulate_twice_is_byte_identical(tmp_path):
    text = GREENHALGH.replace("paths = 40", "paths = 1")
    code_a, a = run(tmp_path, "simulate", text, name="a")
    code_b, b = run(tmp_path, "simulate", text, name="b")
    assert code_a == code_b == 0
    assert (a / "trajectories.csv").read_bytes() == (b / "trajectories.csv").read_bytes()


def test_simulate_schema(tmp_path):
    code, out = run(tmp_path, "simulate", GREENHALGH)
    assert code == 0
    lines = (out / "trajectories.csv").read_text().splitlines()
    assert lines[0] == "path_id,t,X,Y"
    assert len(lines) == 1 + 40 * (64 // 4 + 1)
    head = (out / "moments.csv").read_text().splitlines()[0]
    assert head == "t,mean_X,var_X,mean_Y,var_Y,se_X,se_Y"
    manifest = (out / "manifest.txt").read_text()
    assert manifest.startswith("# sisde ") and "seed = 11" in manifest and "subcommand: simulate" in manifest


def test_full_precision_output(tmp_path):
    _, out = run(tmp_path, "simulate", GREENHALGH)
    for line in (out / "trajectories.csv").read_text().splitlines()[1:200]:
        path_id, *values = line.split(",")
        assert path_id.isdigit()
        assert all(format(float(v), ".17g") == v for v in values)


def test_workers_do_not_change_outputs(tmp_path):
    for sub in ("simulate", "jump", "converge"):
        _, a = run(tmp_path, sub, GREENHALGH, "--workers", "1", name=f"{sub}1")
        _, b = run(tmp_path, sub, GREENHALGH, "--workers", "4", name=f"{sub}4")
        files = sorted(p.name for p in a.iterdir() if p.suffix in (".csv", ".txt") and p.name != "manifest.txt")
        assert files
        for f in files:
            assert (a / f).read_bytes() == (b / f).read_bytes(), (sub, f)


def test_rerun_from_manifest(tmp_path):
    _, a = run(tmp_path, "jump", GREENHALGH, "--seed", "99", name="first")
    manifest = (a / "manifest.txt").read_text()
    assert "seed = 99" in manifest
    replay = tmp_path / "replay"
    code = main(["jump", "--config", str(a / "manifest.txt"), "--out", str(replay)])
    assert code == 0
    for f in ("trajectories.csv", "moments.csv"):
        assert (a / f).read_bytes() == (replay / f).read_bytes()


def test_converge_on_zero_model(tmp_path):
    code, out = run(tmp_path, "converge", ZERO)
    assert code == 0
    data = np.loadtxt(out / "convergence.csv", delimiter=",", skiprows=1)
    assert list(data[:, 0]) == [3, 4, 5]
    assert np.all(data[:, 2:] == 0.0)
    assert "G = " in (out / "bounds.txt").read_text()


def test_validate_flags_small_holder_constant(tmp_path, capsys):
    code, out = run(tmp_path, "validate", GREENHALGH + "declared_H = 0.1\n")
    assert code == 3
    assert "H" in capsys.readouterr().err
    assert "H_hat" in (out / "validation.txt").read_text()


def test_validate_passes_with_derived_constants(tmp_path):
    code, _ = run(tmp_path, "validate", GREENHALGH)
    assert code == 0


def test_config_error_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", "mu = -1\nbogus = 3\n")
    assert code == 2
    err = capsys.readouterr().err
    assert "mu" in err and "bogus" in err


def test_bad_seed_flag(tmp_path):
    code, _ = run(tmp_path, "simulate", GREENHALGH, "--seed", "-3")
    assert code == 2


def test_fokker_planck_writes_density(tmp_path):
    for solver in ("master", "diffusion"):
        code, out = run(tmp_path, "fokker-planck", GREENHALGH.replace("dt = 0.01", "dt = 0.005") + f"fp_solver = {solver}\n", name=solver)
        assert code == 0
        data = np.loadtxt(out / "density.csv", delimiter=",", skiprows=1)
        assert data.shape == (60 * 60, 3)
        assert data[:, 2].sum() == pytest.approx(1.0, abs=1e-9)


def test_jump_needs_lattice_start(tmp_path):
    code, _ = run(tmp_path, "jump", GREENHALGH.replace("x0 = 5", "x0 = 5.5"))
    assert code == 2


def test_numerical_failure_exit_code(tmp_path):
    code, _ = run(tmp_path, "fokker-planck", GREENHALGH.replace("dt = 0.01", "dt = 0.25"))
    assert code == 4


def test_compare_prints_single_line(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(GREENHALGH.replace("paths = 40", "paths = 2000"), encoding="utf-8")
    res = subprocess.run(
        [sys.executable, "-m", "sisde", "compare", "--config", str(cfg), "--out", str(tmp_path / "c")],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0, res.stderr
    lines = res.stdout.splitlines()
    assert len(lines) == 1
    word, value, verdict = lines[0].split()
    assert word == "l1" and verdict in ("PASS", "FAIL")
    assert 0 <= float(value) <= 2
