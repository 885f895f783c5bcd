"""Command-line entry point: config validation, modes, determinism."""
import json
import os
import subprocess
import sys

SRC = os.path.join(os.path.dirname(__file__), os.pardir, "src")


def run_cli(args):
    env = {**os.environ, "PYTHONPATH": SRC}
    p = subprocess.run([sys.executable, "-m", "fraclimit.cli"] + list(args),
                       capture_output=True, text=True, env=env)
    return p.returncode, p.stdout, p.stderr


def write_cfg(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


SIM_CFG = """
[run]
mode = simulate-kinetic
seed = 777
[model]
s = 0.75
alpha = 0.0
[kinetic]
n_particles = 20000
eps = 0.1
t_end = 0.2
snapshot_times = 0.1
n_bins = 80
"""


def test_unknown_key_rejected_with_line_number(tmp_path):
    cfg = write_cfg(tmp_path / "bad.cfg",
                    "[run]\nmode = simulate-kinetic\nfoo = 1\n")
    code, _, err = run_cli(["--config", cfg])
    assert code == 2
    assert "line 3" in err and "foo" in err


def test_unknown_mode_rejected(tmp_path):
    cfg = write_cfg(tmp_path / "bad.cfg", "[run]\nmode = warp\n")
    code, _, err = run_cli(["--config", cfg])
    assert code == 2 and "warp" in err


def test_keys_outside_sections_rejected(tmp_path):
    cfg = write_cfg(tmp_path / "bad.cfg", "mode = simulate-kinetic\n")
    code, _, err = run_cli(["--config", cfg])
    assert code == 2 and "line 1" in err


def test_diffuse_wall_requires_supercritical_exponent(tmp_path):
    cfg = write_cfg(tmp_path / "bad.cfg",
                    "[run]\nmode = simulate-kinetic\n"
                    "[model]\nalpha = 0.5\ns = 0.4\n")
    code, _, err = run_cli(["--config", cfg])
    assert code == 2
    assert "s > 1/2" in err and "alpha" in err


def test_eps_ladder_must_decrease(tmp_path):
    cfg = write_cfg(tmp_path / "bad.cfg",
                    "[run]\nmode = converge\n[study]\neps_list = 0.1 0.2\n")
    code, _, err = run_cli(["--config", cfg])
    assert code == 2 and "eps_list" in err


def test_missing_config_is_io_error(tmp_path):
    code, _, err = run_cli(["--config", str(tmp_path / "nope.cfg")])
    assert code == 4


def test_simulation_deterministic_across_workers_and_reruns(tmp_path):
    cfg = write_cfg(tmp_path / "sim.cfg", SIM_CFG)
    assert run_cli(["--config", cfg, "--out", str(tmp_path / "w1")])[0] == 0
    assert run_cli(["--config", cfg, "--out", str(tmp_path / "w3"),
                    "--set", "run.workers=3"])[0] == 0
    assert run_cli(["--config", cfg, "--out", str(tmp_path / "w1b")])[0] == 0
    for name in ("density_final.csv", "density_t0.1.csv"):
        b1 = (tmp_path / "w1" / name).read_bytes()
        assert b1 == (tmp_path / "w3" / name).read_bytes(), name
        assert b1 == (tmp_path / "w1b" / name).read_bytes(), name
    man = json.loads((tmp_path / "w1" / "manifest.json").read_text())
    assert man["seed"] == 777 and man["mode"] == "simulate-kinetic"
    # defaults are echoed so the manifest alone reproduces the run
    assert man["config"]["kinetic"]["far_edge"] == "open"
    assert man["config"]["run"]["workers"] == 1
    assert "versions" in man and "timings_sec" in man


def test_compare_mode_identical_fields(tmp_path):
    cfg = write_cfg(tmp_path / "sim.cfg", SIM_CFG)
    run_cli(["--config", cfg, "--out", str(tmp_path / "a")])
    cmp_cfg = write_cfg(tmp_path / "cmp.cfg", f"""
[run]
mode = compare
[compare]
field_a = {tmp_path / 'a' / 'density_final.csv'}
field_b = {tmp_path / 'a' / 'density_final.csv'}
""")
    code, out, _ = run_cli(["--config", cmp_cfg,
                            "--out", str(tmp_path / "cmp")])
    assert code == 0
    gaps = json.loads(out)
    assert gaps["l2_rel"] == 0.0 and gaps["mass_gap"] == 0.0
    disk = json.loads((tmp_path / "cmp" / "compare.json").read_text())
    assert disk["l2_rel"] == 0.0


def test_solve_limit_mode_artifacts(tmp_path):
    cfg = write_cfg(tmp_path / "lim.cfg", """
[run]
mode = solve-limit
[model]
alpha = 0.5
[limit]
n_elems = 64
dt = 0.01
t_end = 0.2
export_matrices = true
""")
    code, _, err = run_cli(["--config", cfg, "--out", str(tmp_path / "lim")])
    assert code == 0, err
    man = json.loads((tmp_path / "lim" / "manifest.json").read_text())
    assert man["outcome"]["mass_drift"] < 1e-10
    assert man["outcome"]["energy_nonincreasing"] is True
    names = set(man["artifacts"])
    assert {"solution_final.csv", "density_limit.csv"} <= names
    # alpha = 0.5 assembles both stiffness forms, so all three exports appear
    assert {"mass_matrix.txt", "stiffness_specular.txt",
            "stiffness_diffuse.txt"} <= names
    with open(tmp_path / "lim" / "stiffness_specular.txt") as fh:
        head = fh.readline().split()
        assert head[:2] == ["#", "A_SR"] and int(head[2]) == 65
    with open(tmp_path / "lim" / "solution_final.csv") as fh:
        assert fh.readline().strip() == "x,rho"


def test_eval_operators_mode_csv(tmp_path):
    cfg = write_cfg(tmp_path / "ops.cfg", """
[run]
mode = eval-operators
[study]
families = gauss ring
operators = mirror_jump wall_exit
grid_n = 50
""")
    code, _, err = run_cli(["--config", cfg, "--out", str(tmp_path / "ops")])
    assert code == 0, err
    with open(tmp_path / "ops" / "operators.csv") as fh:
        header = fh.readline().strip().split(",")
    assert header[0] == "x"
    assert "gauss_mirror_jump" in header and "ring_wall_exit" in header


def test_converge_mode_artifacts(tmp_path):
    cfg = write_cfg(tmp_path / "cv.cfg", """
[run]
mode = converge
[study]
eps_list = 0.2 0.1
families = gauss
operators = mirror_jump wall_exit
""")
    code, _, err = run_cli(["--config", cfg, "--out", str(tmp_path / "cv")])
    assert code == 0, err
    with open(tmp_path / "cv" / "convergence.csv") as fh:
        assert fh.readline().strip() == \
            "epsilon,operator,psi_id,l2_error,order_estimate"
    man = json.loads((tmp_path / "cv" / "manifest.json").read_text())
    assert man["outcome"]["checks_passed"] is True


def test_full_pipeline_error_ladder_decreases(tmp_path):
    cfg = write_cfg(tmp_path / "fp.cfg", """
[run]
mode = full-pipeline
seed = 777
workers = 2
[model]
s = 0.75
alpha = 0.0
[kinetic]
n_particles = 50000
t_end = 0.5
n_bins = 160
[study]
eps_list = 0.2 0.1 0.05
""")
    code, _, err = run_cli(["--config", cfg, "--out", str(tmp_path / "fp")])
    assert code == 0, err
    with open(tmp_path / "fp" / "convergence_table.csv") as fh:
        header = fh.readline().strip()
        rows = [line.split(",") for line in fh.read().splitlines()]
    assert header == "epsilon,l2_rel,linf_rel,mass_gap,chi2_red"
    errs = [float(r[1]) for r in rows]
    assert len(errs) == 3 and errs[2] < errs[1] < errs[0], errs
