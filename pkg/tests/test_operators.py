"""Nonlocal operators: scalar/grid engines, identities, study plumbing."""
import math

import numpy as np
import pytest
from scipy import integrate

from fraclimit import model as M
from fraclimit import operators as O


@pytest.fixture(scope="module")
def fam():
    family = O.family_wall_symmetric()
    for f in family:
        f.validate()
    return family


def frac_lap_gauss(x, s):
    # (-Lap)^s e^{-x^2/2} by cosine transform
    val, _ = integrate.quad(
        lambda xi: xi ** (2 * s) * math.sqrt(2 * math.pi)
        * math.exp(-xi * xi / 2) * math.cos(x * xi),
        0, 40, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val / math.pi


def test_family_labels_and_wall_symmetry(fam):
    assert [f.label for f in fam] == ["gauss", "ring", "xsq_gauss"]
    for f in fam:
        # even about the wall: value(|x|) convention makes this automatic,
        # and the wall-normal derivative vanishes
        h = 1e-6
        d0 = (f.value(np.array([h]))[0] - f.value(np.array([0.0]))[0]) / h
        assert abs(d0) < 1e-5, (f.label, d0)


def test_mirror_jump_operator_matches_fourier_oracle(fam, eq75):
    gauss = fam[0]
    cst = M.constants(eq75.params, eq75)
    for x in (0.5, 2.0):
        v = O.op_specular(gauss, x, eq75)
        oracle = -cst["gamma_ds"] * frac_lap_gauss(x, 0.75)
        assert abs(v / oracle - 1) < 1e-8, (x, v, oracle)


def test_kappa_dual_forms_spot(fam, eq75):
    gauss = fam[0]
    for x in (0.3, 2.7):
        kv = O.op_kappa_volume(gauss, x, eq75)
        ks = O.op_kappa_surface(gauss, x, eq75)
        assert abs(kv / ks - 1) < 1e-9


def test_interior_plus_exit_equals_extended(fam, eq75):
    gauss = fam[0]
    for x, eps in ((0.7, 0.1), (0.15, 0.2)):
        a = (O.op_eps_interior(gauss, x, eps, eq75)
             + O.op_eps_kappa(gauss, x, eps, eq75))
        b = O.op_eps_extended(gauss, x, eps, eq75)
        assert abs(a - b) < 1e-8 * max(1.0, abs(a))


def test_divergence_identity_spot(fam, eq75):
    gauss = fam[0]
    for y in (0.8, 3.0):
        h = 1e-4
        dv = (O.op_grad2sm1(gauss, y + h, eq75)[0]
              - O.op_grad2sm1(gauss, y - h, eq75)[0]) / (2 * h)
        ld = O.op_diffuse(gauss, y, eq75)
        assert abs(dv / ld - 1) < 1e-5


def test_grid_engines_match_scalar_operators(fam, eq75):
    gauss = fam[0]
    xs = np.array([0.3, 1.0, 3.5])
    gs = O.grid_specular_gen(gauss, xs, eq75)
    gr = O.grid_regional_pv(gauss, xs, eq75)
    gk = O.grid_kappa_gen(gauss, xs, eq75)
    cds = M.c_ds(1, 0.75)
    for i, x in enumerate(xs):
        r1 = O.op_specular(gauss, float(x), eq75)
        assert abs(gs[i] - r1) / (abs(r1) + 1e-12) < 1e-6
        r2 = O.op_regional(gauss, float(x), eq75) / cds
        assert abs(gr[i] - r2) / (abs(r2) + 1e-12) < 1e-6
        r3 = O.op_kappa_surface(gauss, float(x), eq75)
        assert abs(gk[i] - r3) < 1e-12 * (1 + abs(r3))


def test_eps_grid_engines_match_scalar(fam, eq75):
    gauss = fam[0]
    xs = np.array([0.5, 2.0])
    eps = 0.1
    ge = O.grid_eps_specular(gauss, xs, eps, eq75)
    gi = O.grid_eps_interior(gauss, xs, eps, eq75)
    gk = O.grid_eps_kappa(gauss, xs, eps, eq75)
    for i, x in enumerate(xs):
        r1 = O.op_eps_specular(gauss, float(x), eps, eq75)
        assert abs(ge[i] - r1) / (abs(r1) + 1e-12) < 1e-6
        r2 = O.op_eps_interior(gauss, float(x), eps, eq75)
        assert abs(gi[i] - r2) / (abs(r2) + 1e-12) < 1e-6
        r3 = O.op_eps_kappa(gauss, float(x), eps, eq75)
        assert abs(gk[i] - r3) < 1e-10 * (1 + abs(r3))


def test_resolvent_transport_residual_spot(fam, eq75):
    gauss = fam[0]
    eps, x, v = 0.1, 1.3, 0.7
    h = 1e-5
    for bc, al in (("specular", None), ("maxwell", 0.5)):
        f0 = O.resolvent_phi_eps(gauss, x, v, eps, eq75, bc, al)
        fp = O.resolvent_phi_eps(gauss, x + h, v, eps, eq75, bc, al)
        fm = O.resolvent_phi_eps(gauss, x - h, v, eps, eq75, bc, al)
        lhs = f0 - eps * v * (fp - fm) / (2 * h)
        rhs = float(gauss.value(np.array([x]))[0])
        assert abs(lhs - rhs) < 1e-6, (bc, lhs, rhs)


def test_wall_mixture_identity_spot(fam, eq75):
    gauss = fam[0]
    eps = 0.1
    wv = O.wall_value_diffuse(gauss, eps, eq75)
    for al in (0.0, 1.0):
        for r in (0.4, 2.0):
            lhs = O.resolvent_phi_eps(gauss, 0.0, -r, eps, eq75, "maxwell", al)
            rhs = ((1 - al)
                   * O.resolvent_phi_eps(gauss, 0.0, r, eps, eq75, "maxwell", al)
                   + al * wv)
            assert abs(lhs - rhs) < 1e-10


def test_flux_decay_study_monotone(fam, eq75):
    zf = O.zero_flux_variant(fam[0], eq75)
    fd = O.flux_decay_study(zf, [0.2, 0.1], eq75)
    vals = fd["flux_sq_over_eps"]
    assert len(vals) == 2 and vals[1] < vals[0]
    assert fd["monotone"]


def test_convergence_study_rows_and_csv(fam, eq75, tmp_path):
    path = str(tmp_path / "conv.csv")
    rep = O.convergence_study([fam[0]], [0.2, 0.1], eq75, csv_path=path)
    ops = {r["operator"] for r in rep["rows"]}
    assert {"mirror_jump", "interior_jump", "wall_exit",
            "resolvent_specular", "resolvent_diffuse"} <= ops
    for r in rep["rows"]:
        assert r["l2_error"] > 0
    with open(path) as fh:
        header = fh.readline().strip()
    assert header == "epsilon,operator,psi_id,l2_error,order_estimate"
    assert "[ok]" in rep["summary"]
