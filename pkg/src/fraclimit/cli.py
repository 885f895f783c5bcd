"""Command-line orchestration: config-driven runs with manifests.

One entry point, `fraclimit --config run.cfg [--out DIR] [--set sec.key=v]`,
dispatching on `mode`:

  simulate-kinetic   particle Monte Carlo, density CSVs per snapshot
  eval-operators     limit-operator values on a grid, per test function
  converge           eps-ladder operator convergence table
  solve-limit        Galerkin evolve of the limit equation, solution CSVs
  compare            norm gaps between two density CSVs
  full-pipeline      MC across an eps ladder vs the limit solution

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O failure.
Every output directory gets a manifest.json with the fully resolved config,
seeds, library versions, and per-phase wall-clock timings.  The `workers`
key chunks particles across processes; per-particle counter streams make the
results byte-identical for every worker count.
"""
from __future__ import annotations

import argparse
import json
import multiprocessing
import sys
import time
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__
from .model import ModelParams, constants, make_default_equilibrium
from . import kinetic as kin
from . import limitsolver as ls
from . import operators as ops


class ConfigError(Exception):
    """Bad config file, bad key, or a range violation.  Exit code 2."""


class NumericError(Exception):
    """A solver failed or a run-level numeric check did not pass.  Exit 3."""


class ArtifactError(Exception):
    """Missing input or unwritable output.  Exit code 4."""


MODES = ("simulate-kinetic", "eval-operators", "converge", "solve-limit",
         "compare", "full-pipeline")

# section -> key -> (type tag, default); None default means no default.
SCHEMA = {
    "run": {
        "mode": ("str", None),
        "out": ("str", "out"),
        "workers": ("int", 1),
        "seed": ("int", 12345),
    },
    "model": {
        "d": ("int", 1),
        "s": ("float", 0.75),
        "nu0": ("float", 1.0),
        "alpha": ("float", 0.0),
    },
    "kinetic": {
        "n_particles": ("int", 100000),
        "eps": ("float", 0.05),
        "t_end": ("float", 0.5),
        "snapshot_times": ("floats", ()),
        "n_bins": ("int", 160),
        "l_box": ("float", 16.0),
        "far_edge": ("str", "open"),
        "profile": ("str", "gaussian"),
        "x_center": ("float", 2.0),
        "x_width": ("float", 0.5),
    },
    "study": {
        "eps_list": ("floats", (0.2, 0.1, 0.05)),
        "families": ("strs", ("gauss", "ring", "xsq_gauss")),
        "operators": ("strs", ("mirror_jump", "interior_jump", "wall_exit",
                               "resolvent_specular", "resolvent_diffuse")),
        "grid_max": ("float", 8.0),
        "grid_n": ("int", 400),
    },
    "limit": {
        "n_elems": ("int", 256),
        "l_trunc": ("float", 16.0),
        "dt": ("float", 0.005),
        "t_end": ("float", 0.5),
        "export_matrices": ("bool", False),
    },
    "compare": {
        "field_a": ("str", None),
        "field_b": ("str", None),
    },
}

_LIMIT_ENGINES = ("mirror_jump", "interior_jump", "wall_exit")


def _coerce(tag: str, text: str, where: str):
    try:
        if tag == "int":
            return int(text)
        if tag == "float":
            return float(text)
        if tag == "str":
            return text
        if tag == "bool":
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if tag == "floats":
            return tuple(float(p) for p in text.split())
        if tag == "strs":
            return tuple(text.split())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {tag}") from None
    raise ConfigError(f"{where}: unknown type tag {tag}")


def parse_config(path) -> dict:
    """Strict line-oriented `[section] key = value` parse; raw string values."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ArtifactError(f"cannot read config {path}: {exc}") from exc
    raw: dict = {}
    section = None
    for ln, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#") or text.startswith(";"):
            continue
        if text.startswith("["):
            if not text.endswith("]"):
                raise ConfigError(f"line {ln}: malformed section header {text!r}")
            section = text[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"line {ln}: unknown section [{section}]")
            raw.setdefault(section, {})
            continue
        if "=" not in text:
            raise ConfigError(f"line {ln}: expected `key = value`, got {text!r}")
        if section is None:
            raise ConfigError(f"line {ln}: key outside any [section]")
        key, val = (p.strip() for p in text.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"line {ln}: unknown key {key!r} in [{section}]")
        if key in raw[section]:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        raw[section][key] = (val, f"line {ln}")
    return raw


@dataclass(frozen=True)
class RunConfig:
    mode: str
    out_dir: str
    workers: int
    seed: int
    params: ModelParams
    cfg: dict          # fully resolved {section: {key: value}}
    overrides: tuple


def resolve_config(raw: dict, overrides=(), out_cli=None) -> RunConfig:
    """Apply --set overrides, fill defaults, validate ranges."""
    for spec in overrides:
        if "=" not in spec or "." not in spec.split("=", 1)[0]:
            raise ConfigError(f"--set needs section.key=value, got {spec!r}")
        dotted, val = spec.split("=", 1)
        sec, key = dotted.split(".", 1)
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"--set {spec!r}: unknown key [{sec}] {key}")
        raw.setdefault(sec, {})[key] = (val.strip(), f"--set {spec}")
    cfg = {}
    for sec, keys in SCHEMA.items():
        cfg[sec] = {}
        for key, (tag, default) in keys.items():
            if sec in raw and key in raw[sec]:
                text, where = raw[sec][key]
                cfg[sec][key] = _coerce(tag, text, where)
            else:
                cfg[sec][key] = default

    mode = cfg["run"]["mode"]
    if mode is None:
        raise ConfigError("missing required key: [run] mode")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    d, s = cfg["model"]["d"], cfg["model"]["s"]
    nu0, alpha = cfg["model"]["nu0"], cfg["model"]["alpha"]
    if d != 1:
        raise ConfigError("this command path supports d = 1 only")
    if not (0.0 < s < 1.0):
        raise ConfigError(f"s must lie in (0, 1), got {s}")
    if nu0 <= 0.0:
        raise ConfigError(f"nu0 must be positive, got {nu0}")
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha > 0.0 and s <= 0.5:
        raise ConfigError(
            f"alpha = {alpha} > 0 requires s > 1/2 (got s = {s}): the "
            "diffuse-wall limit operators are undefined at or below 1/2")
    eps_list = cfg["study"]["eps_list"]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError(f"eps_list must be strictly decreasing, got {eps_list}")
    if any(e <= 0 for e in eps_list) or cfg["kinetic"]["eps"] <= 0:
        raise ConfigError("epsilon values must be positive")
    if mode == "compare":
        for key in ("field_a", "field_b"):
            if cfg["compare"][key] is None:
                raise ConfigError(f"compare mode requires [compare] {key}")
    if mode == "eval-operators":
        bad = [o for o in cfg["study"]["operators"] if o not in _LIMIT_ENGINES]
        known = set(_LIMIT_ENGINES) | {"resolvent_specular", "resolvent_diffuse"}
        if bad and not set(bad) <= known:
            raise ConfigError(f"unknown operators {bad} in [study]")
    if cfg["kinetic"]["far_edge"] not in ("open", "specular"):
        raise ConfigError("far_edge must be `open` or `specular`")
    if cfg["kinetic"]["profile"] not in ("gaussian", "uniform", "point"):
        raise ConfigError("profile must be gaussian, uniform, or point")
    out = out_cli if out_cli is not None else cfg["run"]["out"]
    params = ModelParams(d=d, s=s, nu0=nu0)
    return RunConfig(mode, out, int(cfg["run"]["workers"]),
                     int(cfg["run"]["seed"]), params, cfg, tuple(overrides))


# ---------------------------------------------------------------------------
# artifact helpers


def _ensure_dir(path):
    import os
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ArtifactError(f"cannot create output dir {path}: {exc}") from exc


def _write_text(path, text: str):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc


def _write_manifest(out_dir, rc: RunConfig, timings: dict, outcome: dict,
                    artifacts: list):
    doc = {
        "mode": rc.mode,
        "config": rc.cfg,
        "overrides": list(rc.overrides),
        "seed": rc.seed,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "fraclimit": __version__,
        },
        "timings_sec": {k: round(v, 6) for k, v in timings.items()},
        "outcome": outcome,
        "artifacts": sorted(artifacts),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    _write_text(f"{out_dir}/manifest.json",
                json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")


def _profile_from(cfg: dict):
    kc = cfg["kinetic"]
    if kc["profile"] == "gaussian":
        return kin.GaussianProfile(kc["x_center"], kc["x_width"])
    if kc["profile"] == "uniform":
        lo = kc["x_center"] - kc["x_width"]
        if lo < 0:
            raise ConfigError("uniform profile: x_center - x_width must be >= 0")
        return kin.UniformProfile(lo, kc["x_center"] + kc["x_width"])
    return kin.PointMassProfile(kc["x_center"])


def _field_from_csv(path) -> kin.DensityField:
    try:
        centers, rho, stderr = kin.read_density_csv(path)
    except OSError as exc:
        raise ArtifactError(f"cannot read density CSV {path}: {exc}") from exc
    if centers.size < 2:
        raise ArtifactError(f"{path}: too few bins")
    h = centers[1] - centers[0]
    if not np.allclose(np.diff(centers), h, rtol=1e-9):
        raise ArtifactError(f"{path}: bins are not uniform")
    edges = np.concatenate((centers - 0.5 * h, [centers[-1] + 0.5 * h]))
    edges[0] = 0.0
    out = 1.0 - float(np.sum(rho * np.diff(edges)))
    return kin.DensityField(edges, rho, stderr, 0.0, out)


# ---------------------------------------------------------------------------
# kinetic chunked execution

_CHUNK_CTX: dict = {}


def _run_chunk(idx: int):
    """Advance one particle chunk through all segments; return positions."""
    c = _CHUNK_CTX
    start, size = c["starts"][idx], c["sizes"][idx]
    ens = kin.init_ensemble(c["profile"], size, c["params"], c["eq"],
                            c["eps"], c["seed"], alpha=c["alpha"],
                            L_box=c["l_box"], far_edge=c["far_edge"],
                            pid_offset=start)
    xs = []
    for t_stop in c["times"]:
        kin.run(ens, t_stop)
        xs.append(ens.x.copy())
    return xs, int(np.sum(ens.n_scatter)), int(np.sum(ens.n_wall))


def _mc_density(rc: RunConfig, eps: float, timings: dict):
    """Run the Monte Carlo (chunked over workers) and histogram per segment.

    Returns (list of (t, DensityField), scatter total, wall-hit total).
    Chunk boundaries and per-particle streams are deterministic, so every
    worker count produces identical fields."""
    kc = rc.cfg["kinetic"]
    n, workers = kc["n_particles"], max(1, rc.workers)
    times = sorted(set(float(t) for t in kc["snapshot_times"]
                       if 0.0 < t < kc["t_end"]))
    times.append(kc["t_end"])
    chunk = (n + workers - 1) // workers
    starts = list(range(0, n, chunk))
    sizes = [min(chunk, n - s0) for s0 in starts]
    t0 = time.perf_counter()
    eq = _equilibrium(rc.params)
    timings["equilibrium"] = timings.get("equilibrium", 0.0) + time.perf_counter() - t0
    _CHUNK_CTX.update({
        "starts": starts, "sizes": sizes, "profile": _profile_from(rc.cfg),
        "params": rc.params, "eq": eq, "eps": eps, "seed": rc.seed,
        "alpha": rc.cfg["model"]["alpha"], "l_box": kc["l_box"],
        "far_edge": kc["far_edge"], "times": times,
    })
    t0 = time.perf_counter()
    if len(starts) == 1:
        results = [_run_chunk(0)]
    else:
        with multiprocessing.get_context("fork").Pool(len(starts)) as pool:
            results = pool.map(_run_chunk, range(len(starts)))
    timings[f"kinetic_eps_{eps:g}"] = time.perf_counter() - t0
    edges = np.linspace(0.0, kc["l_box"], kc["n_bins"] + 1)
    h = kc["l_box"] / kc["n_bins"]
    fields = []
    for seg, t in enumerate(times):
        x_all = np.concatenate([r[0][seg] for r in results])
        counts, _ = np.histogram(x_all, bins=edges)
        fields.append((t, kin.DensityField(
            edges, counts / (n * h), np.sqrt(counts) / (n * h), t,
            1.0 - counts.sum() / n)))
    n_scatter = sum(r[1] for r in results)
    n_wall = sum(r[2] for r in results)
    return fields, n_scatter, n_wall


_EQ_CACHE: dict = {}


def _equilibrium(params: ModelParams):
    key = (params.d, params.s, params.nu0)
    if key not in _EQ_CACHE:
        _EQ_CACHE[key] = make_default_equilibrium(params)
    return _EQ_CACHE[key]


# ---------------------------------------------------------------------------
# modes


def _mode_simulate(rc: RunConfig, out_dir: str, timings: dict):
    fields, n_scatter, n_wall = _mc_density(rc, rc.cfg["kinetic"]["eps"],
                                            timings)
    artifacts = []
    for t, fld in fields[:-1]:
        name = f"density_t{t:g}.csv"
        kin.write_density_csv(fld, f"{out_dir}/{name}")
        artifacts.append(name)
    kin.write_density_csv(fields[-1][1], f"{out_dir}/density_final.csv")
    artifacts.append("density_final.csv")
    n = rc.cfg["kinetic"]["n_particles"]
    outcome = {
        "t_end": fields[-1][0],
        "out_of_window": fields[-1][1].out_of_window,
        "mean_scatter_count": n_scatter / n,
        "mean_wall_hits": n_wall / n,
        "checks_passed": True,
    }
    return outcome, artifacts


def _mode_eval_operators(rc: RunConfig, out_dir: str, timings: dict):
    sc = rc.cfg["study"]
    engines = [o for o in sc["operators"] if o in _LIMIT_ENGINES]
    if not engines:
        raise ConfigError("eval-operators needs at least one of "
                          f"{_LIMIT_ENGINES} in [study] operators")
    eq = _equilibrium(rc.params)
    fams = [p for p in ops.family_wall_symmetric() if p.label in sc["families"]]
    if not fams:
        raise ConfigError(f"no known families in {sc['families']}")
    xs = sc["grid_max"] * np.arange(1, sc["grid_n"] + 1) / sc["grid_n"]
    g1 = constants(rc.params, eq)["gamma1"]
    cols, header = [xs], ["x"]
    t0 = time.perf_counter()
    for psi in fams:
        for name in engines:
            if name == "mirror_jump":
                vals = ops.grid_specular_gen(psi, xs, eq)
            elif name == "interior_jump":
                vals = -g1 * ops.grid_regional_pv(psi, xs, eq)
            else:
                vals = ops.grid_kappa_gen(psi, xs, eq)
            cols.append(vals)
            header.append(f"{psi.label}_{name}")
    timings["operators"] = time.perf_counter() - t0
    lines = [",".join(header)]
    for row in np.column_stack(cols):
        lines.append(",".join(f"{v:.10e}" for v in row))
    _write_text(f"{out_dir}/operators.csv", "\n".join(lines) + "\n")
    return {"families": [p.label for p in fams], "engines": engines,
            "checks_passed": True}, ["operators.csv"]


def _mode_converge(rc: RunConfig, out_dir: str, timings: dict):
    sc = rc.cfg["study"]
    eq = _equilibrium(rc.params)
    fams = [p for p in ops.family_wall_symmetric() if p.label in sc["families"]]
    if not fams:
        raise ConfigError(f"no known families in {sc['families']}")
    t0 = time.perf_counter()
    try:
        report = ops.convergence_study(fams, list(sc["eps_list"]), eq,
                                       operators=tuple(sc["operators"]),
                                       csv_path=f"{out_dir}/convergence.csv")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    timings["study"] = time.perf_counter() - t0
    _write_text(f"{out_dir}/convergence_summary.txt", report["summary"] + "\n")
    monotone = all(r["monotone"] for r in report["rows"])
    if not monotone:
        raise NumericError("operator convergence is not monotone; see "
                           f"{out_dir}/convergence.csv")
    return {"monotone": True, "checks_passed": True}, [
        "convergence.csv", "convergence_summary.txt"]


def _limit_run(rc: RunConfig, timings: dict, t_end: float, n_bins: int,
               window: float):
    """Assemble, project the initial profile, evolve; return field + extras."""
    lc = rc.cfg["limit"]
    alpha = rc.cfg["model"]["alpha"]
    eq = _equilibrium(rc.params)
    t0 = time.perf_counter()
    mesh = ls.mesh_graded(lc["n_elems"], L=lc["l_trunc"])
    forms = ls.assemble(mesh, rc.params, eq)
    timings["assembly"] = time.perf_counter() - t0
    rho0 = ls.project_density(forms, _profile_from(rc.cfg))
    t0 = time.perf_counter()
    try:
        U = ls.evolve(forms, rho0, T=t_end, dt=lc["dt"], alpha=alpha)
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        raise NumericError(f"limit evolve failed: {exc}") from exc
    timings["evolve"] = time.perf_counter() - t0
    diag = ls.evolve_diagnostics(forms, U)
    fld = ls.nodal_to_field(mesh, U[-1], n_bins=n_bins, window=window, t=t_end)
    return mesh, forms, U, diag, fld


def _mode_solve_limit(rc: RunConfig, out_dir: str, timings: dict):
    lc = rc.cfg["limit"]
    kc = rc.cfg["kinetic"]
    n_bins = kc["n_bins"]
    window = min(kc["l_box"], lc["l_trunc"])
    mesh, forms, U, diag, fld = _limit_run(rc, timings, lc["t_end"], n_bins,
                                           window)
    artifacts = ["solution_final.csv", "density_limit.csv"]
    ls.write_solution_csv(f"{out_dir}/solution_final.csv", mesh, U[-1])
    kin.write_density_csv(fld, f"{out_dir}/density_limit.csv")
    if lc["export_matrices"]:
        ls.write_matrix_coo(f"{out_dir}/mass_matrix.txt", forms.M, "M")
        ls.write_matrix_coo(f"{out_dir}/stiffness_specular.txt", forms.A_SR,
                            "A_SR")
        artifacts += ["mass_matrix.txt", "stiffness_specular.txt"]
        if forms.A_D is not None:
            ls.write_matrix_coo(f"{out_dir}/stiffness_diffuse.txt", forms.A_D,
                                "A_D")
            artifacts.append("stiffness_diffuse.txt")
    mass = diag["mass"]
    drift = float(np.max(np.abs(mass - mass[0])) / mass[0])
    energy_ok = bool(np.all(np.diff(diag["energy"]) <= 1e-12))
    outcome = {"mass_drift": drift, "energy_nonincreasing": energy_ok,
               "mesh": mesh.describe(), "checks_passed": energy_ok}
    if not energy_ok:
        raise NumericError("M-norm energy increased during implicit Euler")
    return outcome, artifacts


def _mode_compare(rc: RunConfig, out_dir: str, timings: dict):
    fa = _field_from_csv(rc.cfg["compare"]["field_a"])
    fb = _field_from_csv(rc.cfg["compare"]["field_b"])
    try:
        gaps = ls.compare(fa, fb)
    except ValueError as exc:
        raise ConfigError(f"fields are not comparable: {exc}") from exc
    _write_text(f"{out_dir}/compare.json",
                json.dumps(gaps, indent=2, sort_keys=True, default=float) + "\n")
    print(json.dumps(gaps, sort_keys=True, default=float))
    return {**gaps, "checks_passed": True}, ["compare.json"]


def _mode_full_pipeline(rc: RunConfig, out_dir: str, timings: dict):
    kc, sc = rc.cfg["kinetic"], rc.cfg["study"]
    alpha = rc.cfg["model"]["alpha"]
    n_bins, window, t_end = kc["n_bins"], kc["l_box"], kc["t_end"]
    artifacts = []
    t0 = time.perf_counter()
    if alpha == 0.0:
        ref = ls.reference_specular(_profile_from(rc.cfg), t_end, rc.params,
                                    eq=_equilibrium(rc.params),
                                    window=window, n_bins=n_bins)
        ref_kind = "fourier-multiplier"
    else:
        ref = _limit_run(rc, timings, t_end, n_bins, window)[4]
        ref_kind = "galerkin-evolve"
    timings["reference"] = time.perf_counter() - t0
    kin.write_density_csv(ref, f"{out_dir}/density_reference.csv")
    artifacts.append("density_reference.csv")
    rows = []
    for eps in sc["eps_list"]:
        fields, _, _ = _mc_density(rc, eps, timings)
        fld = fields[-1][1]
        name = f"density_eps{eps:g}.csv"
        kin.write_density_csv(fld, f"{out_dir}/{name}")
        artifacts.append(name)
        gaps = ls.compare(fld, ref)
        rows.append((eps, gaps))
    lines = ["epsilon,l2_rel,linf_rel,mass_gap,chi2_red"]
    for eps, gaps in rows:
        chi = "" if gaps["chi2_red"] is None else f"{gaps['chi2_red']:.6f}"
        lines.append(f"{eps:g},{gaps['l2_rel']:.10e},{gaps['linf_rel']:.10e},"
                     f"{gaps['mass_gap']:.10e},{chi}")
    _write_text(f"{out_dir}/convergence_table.csv", "\n".join(lines) + "\n")
    artifacts.append("convergence_table.csv")
    errs = [gaps["l2_rel"] for _, gaps in rows]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    outcome = {"reference": ref_kind, "l2_rel_by_eps": dict(
        (f"{eps:g}", e) for (eps, _), e in zip(rows, errs)),
        "decreasing": decreasing, "checks_passed": decreasing}
    if not decreasing:
        raise NumericError(
            f"Monte Carlo error did not decrease along the eps ladder: {errs}")
    return outcome, artifacts


_DISPATCH = {
    "simulate-kinetic": _mode_simulate,
    "eval-operators": _mode_eval_operators,
    "converge": _mode_converge,
    "solve-limit": _mode_solve_limit,
    "compare": _mode_compare,
    "full-pipeline": _mode_full_pipeline,
}


def run_mode(rc: RunConfig) -> int:
    """Dispatch one resolved config; write artifacts + manifest; return 0."""
    out_dir = rc.out_dir
    _ensure_dir(out_dir)
    timings: dict = {}
    wall0 = time.perf_counter()
    outcome, artifacts = {}, []
    try:
        outcome, artifacts = _DISPATCH[rc.mode](rc, out_dir, timings)
        return 0
    except NumericError as exc:
        outcome = dict(outcome or {})
        outcome.update({"checks_passed": False, "failure": str(exc)})
        raise
    finally:
        timings["total_wall"] = time.perf_counter() - wall0
        _write_manifest(out_dir, rc, timings, outcome, artifacts)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="fraclimit",
        description="config-driven half-space fractional-limit studies")
    ap.add_argument("--config", required=True, help="path to the run config")
    ap.add_argument("--out", default=None, help="output directory override")
    ap.add_argument("--set", action="append", default=[], metavar="SEC.KEY=V",
                    help="override one config value (repeatable)")
    args = ap.parse_args(argv)
    try:
        rc = resolve_config(parse_config(args.config), tuple(args.set),
                            args.out)
        return run_mode(rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except ArtifactError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
