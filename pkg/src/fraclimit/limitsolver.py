"""Galerkin solver for the macroscopic limit equation on the half-line.

P1 finite elements on a graded mesh (d = 1) for the evolution
u' = -(1-alpha) A_SR u - alpha A_D u in weak form, where A_SR is the
Dirichlet form of the mirror-extended jump kernel and A_D the
nonlocal-gradient form whose natural boundary condition is zero wall flux.

Both forms are assembled in closed form from power-law antiderivatives; no
quadrature enters the matrices.  Truncation to [0, L] is censored: jump
contributions from beyond L are dropped, so constants are an exact null
vector of the forms and implicit Euler conserves mass to solver precision.

A Fourier-multiplier reference solution (even extension, exact symbol
exp(-gamma_ds |xi|^(2s) t)) covers the specular case.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy
from scipy.linalg import lu_factor, lu_solve

from .model import Equilibrium, ModelParams, constants
from .kinetic import DensityField

__all__ = [
    "Mesh1D",
    "mesh_graded",
    "mesh_uniform",
    "AssembledForms",
    "assemble",
    "project_density",
    "solve_stationary",
    "evolve",
    "evolve_diagnostics",
    "nodal_to_field",
    "reference_specular",
    "compare",
    "write_matrix_coo",
    "write_solution_csv",
    "write_limit_manifest",
]


# ---------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class Mesh1D:
    """Nodes of a P1 hat-function basis on [0, L]; first node is the wall."""

    nodes: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        assert self.nodes.ndim == 1 and self.nodes.size >= 3
        assert self.nodes[0] == 0.0, "first node must sit at the wall"
        assert np.all(np.diff(self.nodes) > 0.0), "nodes must increase"

    @property
    def L(self) -> float:
        return float(self.nodes[-1])

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_elems(self) -> int:
        return self.nodes.size - 1

    def describe(self) -> dict:
        h = self.h
        return {
            "n_nodes": int(self.n_nodes),
            "L": self.L,
            "h_min": float(h.min()),
            "h_max": float(h.max()),
            **self.meta,
        }


def mesh_graded(n_elems: int = 256, L: float = 16.0, ratio: float = 1.15,
                h_cap: float | None = None) -> Mesh1D:
    """Geometrically graded mesh: elements grow by `ratio` away from the wall
    until they reach h_cap, then stay uniform.  The wall size h0 is solved by
    bisection so the elements sum to L exactly."""
    assert n_elems >= 4 and L > 0 and ratio > 1.0
    if h_cap is None:
        h_cap = 1.3 * L / n_elems
    assert n_elems * h_cap > L, "h_cap too small to fill the domain"
    grow = ratio ** np.arange(n_elems)

    def total(h0):
        return float(np.sum(np.minimum(h0 * grow, h_cap)))

    lo, hi = 0.0, h_cap
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < L:
            lo = mid
        else:
            hi = mid
    h = np.minimum(hi * grow, h_cap)
    h *= L / h.sum()
    nodes = np.concatenate(([0.0], np.cumsum(h)))
    nodes[-1] = L
    return Mesh1D(nodes, {"grading_ratio": ratio, "h_cap": h_cap})


def mesh_uniform(n_elems: int, L: float = 16.0) -> Mesh1D:
    return Mesh1D(np.linspace(0.0, L, n_elems + 1), {"grading_ratio": 1.0})


# ---------------------------------------------------------------------------
# closed-form assembly
#
# Every basis hat is extended evenly through the wall and constant beyond
# +-L.  For such piecewise-linear u, v with derivative jumps c_k at
# breakpoints t_k (sum c_k = sum c_k t_k = 0), the whole-line form
#     S(u, v) = 1/2 iint (u(x)-u(y))(v(x)-v(y)) |x-y|^(-1-2s) dx dy
# equals -(1/D) sum_{k,l} c_k[u] c_l[v] |t_k - t_l|^(3-2s) with
# D = 2s (2s-1)(2-2s)(3-2s).  The censored form on the box [-L, L] is then
# S minus a killing term: the product of (u - u(L))(v - v(L)) against
# w(x) = [(L-x)^(-2s) + (L+x)^(-2s)] / 2s, integrable in closed form.


def _hat_jump_table(mesh: Mesh1D) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints T and derivative jumps C (rows: nodes, padded to 6)."""
    x, h = mesh.nodes, mesh.h
    n = mesh.n_elems
    T = np.zeros((n + 1, 6))
    C = np.zeros((n + 1, 6))
    T[0, :3] = [-x[1], 0.0, x[1]]
    C[0, :3] = [1.0 / h[0], -2.0 / h[0], 1.0 / h[0]]
    for i in range(1, n):
        tr = [x[i - 1], x[i], x[i + 1]]
        cr = [1.0 / h[i - 1], -1.0 / h[i - 1] - 1.0 / h[i], 1.0 / h[i]]
        T[i] = [-tr[2], -tr[1], -tr[0], tr[0], tr[1], tr[2]]
        C[i] = [cr[2], cr[1], cr[0], cr[0], cr[1], cr[2]]
    T[n, :4] = [-x[n], -x[n - 1], x[n - 1], x[n]]
    C[n, :4] = [-1.0 / h[-1], 1.0 / h[-1], 1.0 / h[-1], -1.0 / h[-1]]
    return T, C


def _pair_sum(T: np.ndarray, C: np.ndarray, s: float, block: int = 64) -> np.ndarray:
    """P[i, j] = sum_{k,l} C[i,k] C[j,l] |T[i,k] - T[j,l]|^(3-2s)."""
    p = 3.0 - 2.0 * s
    n = T.shape[0]
    P = np.empty((n, n))
    for a in range(0, n, block):
        b = min(a + block, n)
        diff = np.abs(T[a:b, :, None, None] - T[None, None, :, :]) ** p
        P[a:b] = np.einsum("ik,jl,ikjl->ij", C[a:b], C, diff)
    return P


def _u_moments(a: float, b: float, k: int, s: float) -> float:
    """int_a^b u^(k-2s) du, 0 <= a < b; a = 0 allowed only when integrable."""
    p = k + 1.0 - 2.0 * s
    if a == 0.0 and p <= 0.0:
        raise ValueError("divergent moment")
    return (b ** p - a ** p) / p


def _killing_matrix(mesh: Mesh1D, s: float) -> np.ndarray:
    """K[i,j] = 2 int_0^L (hat_i - hat_i(L)) (hat_j - hat_j(L)) w dx with
    w(x) = [(L-x)^(-2s) + (L+x)^(-2s)] / 2s.  Every factor vanishes at L, so
    the (L-x)^(-2s) singularity is always suppressed."""
    x, h = mesh.nodes, mesh.h
    n, L = mesh.n_elems, mesh.L
    K = np.zeros((n + 1, n + 1))
    for e in range(1, n + 1):
        p, q, he = x[e - 1], x[e], h[e - 1]
        idx = sorted({e - 1, e, n})
        # nodal values of g_i = hat_i - hat_i(L) at the element ends
        av = np.array([(1.0 if i == e - 1 else 0.0) - (1.0 if i == n else 0.0)
                       for i in idx])
        bv = np.array([(1.0 if i == e else 0.0) - (1.0 if i == n else 0.0)
                       for i in idx])
        for sign in (-1.0, +1.0):
            # linear pieces in u = L - sign*x; slope and intercept per node
            if sign > 0:          # u = L - x, decreasing across the element
                g1 = (av - bv) / he
                g0 = bv - g1 * (L - q)
                ua, ub = L - q, L - p
            else:                 # u = L + x
                g1 = (bv - av) / he
                g0 = av - g1 * (L + p)
                ua, ub = L + p, L + q
            # coefficient matrices for the three u-moments
            c0 = np.outer(g0, g0)
            c1 = np.outer(g0, g1) + np.outer(g1, g0)
            c2 = np.outer(g1, g1)
            for k, cmat in enumerate((c0, c1, c2)):
                if np.any(cmat != 0.0):
                    m = _u_moments(ua, ub, k, s)
                    for a_loc, i in enumerate(idx):
                        for b_loc, j in enumerate(idx):
                            K[i, j] += cmat[a_loc, b_loc] * m / s
    return K


def _mass_matrix(mesh: Mesh1D) -> np.ndarray:
    h = mesh.h
    n = mesh.n_nodes
    M = np.zeros((n, n))
    for e in range(mesh.n_elems):
        he = h[e]
        M[e, e] += he / 3.0
        M[e + 1, e + 1] += he / 3.0
        M[e, e + 1] += he / 6.0
        M[e + 1, e] += he / 6.0
    return M


def _a_d_matrix(mesh: Mesh1D, s: float, gamma0: float) -> np.ndarray:
    """A_D[i,j] = gamma0/(2s-1) iint hat_i'(y) hat_j'(z) |z-y|^(1-2s) dy dz,
    exact per element pair via corner sums of G(u) = |u|^(3-2s)/((2-2s)(3-2s))."""
    x = mesh.nodes
    p = 3.0 - 2.0 * s
    G = np.abs(x[:, None] - x[None, :]) ** p / ((2.0 - 2.0 * s) * p)
    R = G[1:, :-1] - G[:-1, :-1] - G[1:, 1:] + G[:-1, 1:]
    n = mesh.n_elems
    D = np.zeros((n, n + 1))
    inv_h = 1.0 / mesh.h
    D[np.arange(n), np.arange(n)] = -inv_h
    D[np.arange(n), np.arange(n) + 1] = inv_h
    return gamma0 / (2.0 * s - 1.0) * (D.T @ R @ D)


@dataclass(frozen=True)
class AssembledForms:
    """Mass matrix and the two stiffness forms on a fixed mesh."""

    mesh: Mesh1D
    M: np.ndarray
    A_SR: np.ndarray
    A_D: np.ndarray | None
    meta: dict

    def stiffness(self, alpha: float) -> np.ndarray:
        assert 0.0 <= alpha <= 1.0
        if alpha > 0.0 and self.A_D is None:
            raise ValueError("diffuse form requires s > 1/2")
        if alpha == 0.0:
            return self.A_SR
        if alpha == 1.0:
            return self.A_D
        return (1.0 - alpha) * self.A_SR + alpha * self.A_D

    @property
    def node_weights(self) -> np.ndarray:
        """Integrals of the hats: duality weights for the mass functional."""
        return self.M @ np.ones(self.mesh.n_nodes)


def assemble(mesh: Mesh1D, params: ModelParams,
             eq: Equilibrium | None = None) -> AssembledForms:
    """Closed-form assembly of M, A_SR and (for s > 1/2) A_D."""
    s, d = params.s, params.d
    if d != 1:
        raise NotImplementedError("Galerkin assembly is d = 1 only")
    if s == 0.5:
        raise ValueError("s = 1/2 is the degenerate (logarithmic) case")
    cst = constants(params, eq)
    T, C = _hat_jump_table(mesh)
    Dden = (2 * s) * (2 * s - 1) * (2 - 2 * s) * (3 - 2 * s)
    S_full = -_pair_sum(T, C, s) / Dden
    S_box = S_full - _killing_matrix(mesh, s)
    A_SR = 0.5 * cst["gamma1"] * S_box
    A_SR = 0.5 * (A_SR + A_SR.T)
    if s > 0.5:
        A_D = _a_d_matrix(mesh, s, cst["gamma0"])
        A_D = 0.5 * (A_D + A_D.T)
    else:
        A_D = None
    meta = {"s": s, "d": d, "nu0": params.nu0, "L_trunc": mesh.L,
            "assembly": "closed-form", **cst}
    return AssembledForms(mesh, _mass_matrix(mesh), A_SR, A_D, meta)


# ---------------------------------------------------------------------------
# solves


_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


def project_density(forms: AssembledForms, pdf) -> np.ndarray:
    """L2 projection of a density (callable or object with .pdf) onto the hats."""
    f = pdf.pdf if hasattr(pdf, "pdf") else pdf
    mesh = forms.mesh
    x, h = mesh.nodes, mesh.h
    b = np.zeros(mesh.n_nodes)
    for e in range(mesh.n_elems):
        mid, half = 0.5 * (x[e] + x[e + 1]), 0.5 * h[e]
        xi = mid + half * _GL8_X
        w = half * _GL8_W * np.asarray(f(xi), dtype=float)
        lam = (xi - x[e]) / h[e]
        b[e] += np.sum(w * (1.0 - lam))
        b[e + 1] += np.sum(w * lam)
    return np.linalg.solve(forms.M, b)


def solve_stationary(forms: AssembledForms, g: np.ndarray,
                     alpha: float) -> np.ndarray:
    """Solve (M + (1-alpha) A_SR + alpha A_D) u = M g on the mesh."""
    g = np.asarray(g, dtype=float)
    assert g.shape == (forms.mesh.n_nodes,)
    mat = forms.M + forms.stiffness(alpha)
    try:
        u = np.linalg.solve(mat, forms.M @ g)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(
            f"stationary solve failed (cond ~ {np.linalg.cond(mat):.3e})"
        ) from exc
    assert np.all(np.isfinite(u))
    return u


def evolve(forms: AssembledForms, rho0: np.ndarray, T: float, dt: float,
           alpha: float) -> np.ndarray:
    """Implicit Euler (M + dt A) u^{n+1} = M u^n; one factorization reused.

    Returns the full trajectory, shape (n_steps + 1, n_nodes)."""
    assert dt > 0.0 and T > 0.0
    n_steps = int(round(T / dt))
    assert abs(n_steps * dt - T) <= 1e-9 * max(1.0, T), \
        "T must be an integer number of steps"
    rho0 = np.asarray(rho0, dtype=float)
    assert rho0.shape == (forms.mesh.n_nodes,)
    lu = lu_factor(forms.M + dt * forms.stiffness(alpha))
    U = np.empty((n_steps + 1, rho0.size))
    U[0] = rho0
    for n in range(n_steps):
        U[n + 1] = lu_solve(lu, forms.M @ U[n])
    return U


def evolve_diagnostics(forms: AssembledForms, U: np.ndarray) -> dict:
    """Mass and M-norm energy along a trajectory."""
    w = forms.node_weights
    mass = U @ w
    energy = np.einsum("ni,ij,nj->n", U, forms.M, U)
    return {"mass": mass, "energy": energy}


# ---------------------------------------------------------------------------
# fields, reference solution, comparison


def nodal_to_field(mesh: Mesh1D, u: np.ndarray, n_bins: int = 160,
                   window: float = 16.0, t: float = 0.0) -> DensityField:
    """Exact bin averages of the P1 function on a uniform window [0, window]."""
    u = np.asarray(u, dtype=float)
    assert window <= mesh.L + 1e-12
    edges = np.linspace(0.0, window, n_bins + 1)
    x, h = mesh.nodes, mesh.h
    cum_nodes = np.concatenate(([0.0], np.cumsum(0.5 * h * (u[:-1] + u[1:]))))

    def cum(pts):
        k = np.clip(np.searchsorted(x, pts, side="right") - 1, 0, mesh.n_elems - 1)
        xi = pts - x[k]
        return cum_nodes[k] + u[k] * xi + (u[k + 1] - u[k]) * xi ** 2 / (2 * h[k])

    vals = np.diff(cum(edges)) / np.diff(edges)
    vals = np.maximum(vals, 0.0)
    out = 1.0 - float(np.sum(vals * np.diff(edges)))
    return DensityField(edges, vals, np.zeros(n_bins), t, out)


def reference_specular(rho0_profile, t: float, params: ModelParams, *,
                       eq: Equilibrium | None = None, box_width: float = 204.8,
                       n_fft: int = 2 ** 17, window: float = 16.0,
                       n_bins: int = 160) -> DensityField:
    """Exact specular-limit solution by Fourier multiplier on the even extension.

    rho0 is extended evenly through the wall (mass split across the mirror),
    evolved by exp(-gamma_ds |xi|^(2s) t) on a wide periodic box, restricted
    back to the half-line, and bin-averaged onto the observation window."""
    assert t >= 0.0
    pdf = rho0_profile.pdf if hasattr(rho0_profile, "pdf") else rho0_profile
    cst = constants(params, eq)
    gds, s = cst["gamma_ds"], params.s
    spread = (gds * t) ** (1.0 / (2.0 * s)) if t > 0 else 0.0
    hint = getattr(rho0_profile, "center", 0.0) + 8.0 * getattr(
        rho0_profile, "width", 1.0)
    if box_width < 8.0 * (hint + spread):
        raise ValueError("box_width too small for support + diffusion length; "
                         "aliasing guard tripped")
    dx = box_width / n_fft
    ratio = window / n_bins / dx
    assert abs(ratio - round(ratio)) < 1e-9, \
        "bin width must be a multiple of the FFT spacing"
    m = int(round(ratio))
    xg = (np.arange(n_fft) - n_fft // 2) * dx
    f0 = 0.5 * np.asarray(pdf(np.abs(xg)), dtype=float)
    Fk = np.fft.rfft(f0)
    xi = 2.0 * np.pi * np.fft.rfftfreq(n_fft, dx)
    Fk *= np.exp(-gds * np.abs(xi) ** (2.0 * s) * t)
    f = np.fft.irfft(Fk, n_fft)
    rho = 2.0 * f[n_fft // 2:]                       # values at x = 0, dx, ...
    n_pts = n_bins * m
    assert n_pts + 1 <= rho.size, "window exceeds the FFT half-box"
    seg = rho[: n_pts + 1]
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (seg[:-1] + seg[1:]) * dx)))
    h_bin = window / n_bins
    vals = np.diff(cum[::m]) / h_bin
    vals = np.maximum(vals, 0.0)
    edges = np.linspace(0.0, window, n_bins + 1)
    out = 1.0 - float(np.sum(vals * h_bin))
    return DensityField(edges, vals, np.zeros(n_bins), t, out)


def _rebin_mean(values: np.ndarray, r: int) -> np.ndarray:
    return values.reshape(-1, r).mean(axis=1)


def compare(field_a: DensityField, field_b: DensityField, *,
            window: tuple[float, float] | None = None) -> dict:
    """Norm gaps between two density fields (B is the reference).

    Fields on the same window but different uniform resolutions are aligned
    by conservative rebinning (mean over integer groups).  Returns l2_rel,
    linf_rel, mass_gap, and chi2_red (None unless either field carries
    Monte Carlo standard errors)."""
    ea, eb = field_a.edges, field_b.edges
    va, vb = field_a.values, field_b.values
    sa, sb = field_a.stderr, field_b.stderr
    if not (abs(ea[0] - eb[0]) < 1e-12 and abs(ea[-1] - eb[-1]) < 1e-12):
        raise ValueError("incompatible windows")
    na, nb = va.size, vb.size
    if na != nb:
        if na % nb == 0:
            r = na // nb
            va, sa = _rebin_mean(va, r), _rebin_mean(sa, r) / np.sqrt(r)
            ea = ea[::r]
        elif nb % na == 0:
            r = nb // na
            vb, sb = _rebin_mean(vb, r), _rebin_mean(sb, r) / np.sqrt(r)
            eb = eb[::r]
        else:
            raise ValueError("incompatible bin counts (no integer rebinning)")
    if not np.allclose(ea, eb, atol=1e-9):
        raise ValueError("incompatible windows")
    h = np.diff(ea)
    if window is not None:
        lo, hi = window
        keep = (ea[:-1] >= lo - 1e-12) & (ea[1:] <= hi + 1e-12)
        va, vb, sa, sb, h = va[keep], vb[keep], sa[keep], sb[keep], h[keep]
    diff = va - vb
    l2_rel = float(np.sqrt(np.sum(diff ** 2 * h) / np.sum(vb ** 2 * h)))
    linf_rel = float(np.max(np.abs(diff)) / np.max(np.abs(vb)))
    mass_gap = float(abs(np.sum(diff * h)))
    se2 = sa ** 2 + sb ** 2
    if np.any(se2 > 0.0):
        ok = se2 > 0.0
        chi2 = float(np.mean(diff[ok] ** 2 / se2[ok]))
    else:
        chi2 = None
    return {"l2_rel": l2_rel, "linf_rel": linf_rel, "mass_gap": mass_gap,
            "chi2_red": chi2}


# ---------------------------------------------------------------------------
# artifacts


def write_matrix_coo(path, mat: np.ndarray, name: str = "matrix") -> None:
    """Coordinate text export: header line, then `i j value` triples."""
    mat = np.asarray(mat)
    ii, jj = np.nonzero(mat)
    with open(path, "w") as fh:
        fh.write(f"# {name} {mat.shape[0]} {mat.shape[1]} {ii.size}\n")
        for i, j in zip(ii, jj):
            fh.write(f"{i} {j} {mat[i, j]:.17g}\n")


def write_solution_csv(path, mesh: Mesh1D, u: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("x,rho\n")
        for xi, ui in zip(mesh.nodes, np.asarray(u, dtype=float)):
            fh.write(f"{xi:.17g},{ui:.17g}\n")


def write_limit_manifest(path, params: ModelParams, alpha: float,
                         mesh: Mesh1D, extra: dict | None = None) -> None:
    cst = constants(params)
    doc = {
        "solver": "p1-galerkin-closed-form",
        "s": params.s,
        "d": params.d,
        "nu0": params.nu0,
        "alpha": alpha,
        "constants": cst,
        "L_trunc": mesh.L,
        "mesh": mesh.describe(),
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__},
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
