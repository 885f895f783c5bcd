"""Event-driven Monte Carlo for the rescaled half-space kinetic dynamics.

Particles carry (x, v) with x on the half-line [0, inf) and v on the law-F
velocity scale.  In macroscopic time a particle scatters at rate
nu0 * eps^(-2s); between scatterings it advects with velocity eps^(1-2s) v;
at the wall the Maxwell(alpha) rule either mirrors the velocity (specular)
or re-emits it from the flux-weighted equilibrium law (diffuse).  At each
scattering v is redrawn from F.  Mass is conserved: the particle count never
changes and every boundary interaction returns the particle to the domain.

Every random draw is addressed by (particle id, lane, counter) through the
Philox engine (rng module), so results are bit-identical under any chunking
of the particle range.  The wall coin is drawn on every hit for every alpha,
which makes runs at different alpha pathwise coupled: alpha=0 reproduces the
pure-specular path and alpha=1 the pure-diffuse path, draw for draw.

The simulation itself never truncates the half-line; the observation window
[0, L_box] only affects histograms, which track the out-of-window mass
fraction.  For stationarity studies a specular far edge at L_box can be
switched on, which preserves uniform-in-x times F exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .model import Equilibrium, ModelParams, diffuse_speed_from_engine
from .rng import (
    LANE_FLIGHT,
    LANE_INIT_POS,
    LANE_INIT_VEL,
    LANE_SCATTER,
    LANE_WALL,
    PhiloxEngine,
)

V_CUT = 50.0  # diagnostics-only speed cutoff; the dynamics has none

_MAX_WALL_WAVES = 100000


# ---------------------------------------------------------------------------
# initial profiles (position laws on the half-line, sampled by inversion)


@dataclass(frozen=True)
class GaussianProfile:
    """Gaussian density restricted to [0, inf), renormalized."""

    center: float
    width: float

    def __post_init__(self):
        assert self.width > 0.0

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        a = -self.center / self.width
        dist = stats.truncnorm(a, np.inf, loc=self.center, scale=self.width)
        return dist.pdf(x)

    def ppf(self, u):
        a = -self.center / self.width
        dist = stats.truncnorm(a, np.inf, loc=self.center, scale=self.width)
        return dist.ppf(u)


@dataclass(frozen=True)
class UniformProfile:
    """Uniform density on [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        assert 0.0 <= self.lo < self.hi

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return inside / (self.hi - self.lo)

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class PointMassProfile:
    """All mass at a single point x0 >= 0."""

    x0: float

    def __post_init__(self):
        assert self.x0 >= 0.0

    def ppf(self, u):
        return np.full(np.shape(u), self.x0, dtype=float)


class HistogramProfile:
    """Piecewise-constant density from a histogram (uniform within bins)."""

    def __init__(self, edges, values):
        edges = np.asarray(edges, dtype=float)
        values = np.asarray(values, dtype=float)
        assert edges.ndim == 1 and edges.size == values.size + 1
        assert np.all(np.diff(edges) > 0.0) and np.all(values >= 0.0)
        mass = values * np.diff(edges)
        total = float(mass.sum())
        if total <= 0.0:
            raise ValueError("initial density has zero mass")
        self.edges = edges
        self.values = values
        self._cum = np.concatenate([[0.0], np.cumsum(mass)]) / total

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        k = np.clip(np.searchsorted(self._cum, u, side="right") - 1,
                    0, self.values.size - 1)
        left, width = self.edges[k], np.diff(self.edges)[k]
        seg = self._cum[k + 1] - self._cum[k]
        frac = np.where(seg > 0.0, (u - self._cum[k]) / np.maximum(seg, 1e-300), 0.0)
        return left + width * np.clip(frac, 0.0, 1.0)


# ---------------------------------------------------------------------------
# density fields


@dataclass
class DensityField:
    """Histogram density estimate on a uniform window [0, L_box]."""

    edges: np.ndarray          # n_bins + 1 uniform edges, edges[0] == 0
    values: np.ndarray         # density per bin (1 / length units)
    stderr: np.ndarray         # Monte Carlo standard error per bin
    t: float                   # macroscopic time stamp
    out_of_window: float       # mass fraction beyond the window

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        assert self.edges.ndim == 1 and self.edges.size == self.values.size + 1
        assert abs(self.edges[0]) == 0.0
        assert np.all(self.values >= 0.0) and np.all(self.stderr >= 0.0)
        h = np.diff(self.edges)
        total = float(np.sum(self.values * h)) + self.out_of_window
        assert abs(total - 1.0) < 1e-12, "mass must normalize to 1"

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def write_density_csv(fld: DensityField, path) -> None:
    with open(path, "w") as f:
        f.write("bin_center,rho,stderr\n")
        for c, r, e in zip(fld.bin_centers, fld.values, fld.stderr):
            f.write(f"{c:.10g},{r:.10e},{e:.10e}\n")


def read_density_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


# ---------------------------------------------------------------------------
# the ensemble


@dataclass
class ParticleEnsemble:
    """State of all particles plus the per-particle draw ledgers."""

    params: ModelParams
    eq: Equilibrium
    eps: float
    alpha: float
    x: np.ndarray                  # positions, shape (N,)
    v: np.ndarray                  # velocities (law-F scale), shape (N,)
    t: float                       # current macroscopic time
    next_scatter: np.ndarray       # absolute macro time of next scattering
    engine: PhiloxEngine
    L_box: float = 16.0
    far_edge: str = "open"         # "open" | "specular"
    pid_offset: int = 0            # global id of local particle 0
    flight_ctr: np.ndarray = None
    scatter_ctr: np.ndarray = None
    wall_ctr: np.ndarray = None
    n_scatter: np.ndarray = None   # events so far (diagnostics)
    n_wall: np.ndarray = None

    def __post_init__(self):
        n = self.x.size
        assert self.v.size == n and self.next_scatter.size == n
        assert np.all(self.x >= 0.0)
        assert 0.0 <= self.alpha <= 1.0
        assert self.far_edge in ("open", "specular")
        for name in ("flight_ctr", "scatter_ctr", "wall_ctr"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=np.uint64))
        for name in ("n_scatter", "n_wall"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=np.int64))

    @property
    def n_particles(self) -> int:
        return self.x.size

    @property
    def pids(self) -> np.ndarray:
        return np.arange(self.pid_offset, self.pid_offset + self.n_particles,
                         dtype=np.uint64)

    def global_ids(self, idx: np.ndarray) -> np.ndarray:
        return (np.asarray(idx) + self.pid_offset).astype(np.uint64)


_WALL_RULES = {"specular": 0.0, "diffuse": 1.0}


def init_ensemble(rho_in, n_particles: int, params: ModelParams,
                  eq: Equilibrium, eps: float, seed: int, *,
                  wall_rule: str = "maxwell", alpha: float = 0.0,
                  L_box: float = 16.0, far_edge: str = "open",
                  t0: float = 0.0, pid_offset: int = 0) -> ParticleEnsemble:
    """Draw the well-prepared initial state x ~ rho_in, v ~ F, independent.

    rho_in: any object with a ppf(u) inverse CDF on the half-line (see the
    profile classes above).  wall_rule "specular"/"diffuse" are aliases for
    maxwell with alpha 0/1; the coin is drawn either way, keeping all rules
    on one pathwise-coupled code path.  pid_offset shifts the global particle
    ids: a run chunked as [0,k) + [k,N) reproduces the unchunked run draw for
    draw, whatever the chunking.
    """
    if n_particles < 1:
        raise ValueError("need at least one particle")
    if params.d != 1:
        raise NotImplementedError("particle simulation is implemented for d = 1")
    if wall_rule != "maxwell":
        alpha = _WALL_RULES[wall_rule]
    if alpha > 0.0 and params.s <= 0.5:
        raise ValueError("diffuse re-emission requires s > 1/2 "
                         "(wall flux moment diverges otherwise)")
    assert eps > 0.0
    engine = PhiloxEngine(seed)
    pids = np.arange(pid_offset, pid_offset + n_particles, dtype=np.uint64)
    zero = np.zeros(n_particles, dtype=np.uint64)
    x = np.asarray(rho_in.ppf(engine.u01(pids, zero, LANE_INIT_POS)), dtype=float)
    assert np.all(x >= 0.0), "initial profile must live on the half-line"
    u_speed = engine.u01(pids, zero, LANE_INIT_VEL)
    u_sign = engine.u01(pids, zero + np.uint64(1), LANE_INIT_VEL)
    v = eq.speed_ppf(u_speed) * np.where(u_sign < 0.5, -1.0, 1.0)
    rate = params.nu0 * eps ** (-2.0 * params.s)
    u_fl = engine.u01(pids, zero, LANE_FLIGHT)
    ens = ParticleEnsemble(
        params=params, eq=eq, eps=eps, alpha=float(alpha), x=x, v=v, t=t0,
        next_scatter=t0 - np.log(u_fl) / rate, engine=engine,
        L_box=float(L_box), far_edge=far_edge, pid_offset=int(pid_offset),
    )
    ens.flight_ctr += np.uint64(1)
    return ens


# ---------------------------------------------------------------------------
# advancing the dynamics


def _wall_interact(ens: ParticleEnsemble, hit: np.ndarray) -> None:
    """Apply the Maxwell(alpha) rule to the particles indexed by `hit`,
    which are exactly at the wall with outgoing velocity."""
    assert np.all(ens.x[hit] == 0.0) and np.all(ens.v[hit] < 0.0)
    pids = ens.global_ids(hit)
    coin = ens.engine.u01(pids, ens.wall_ctr[hit], LANE_WALL)
    ens.wall_ctr[hit] += np.uint64(1)
    diffuse = coin < ens.alpha
    spec = hit[~diffuse]
    ens.v[spec] = -ens.v[spec]
    dif = hit[diffuse]
    if dif.size:
        r, idx = diffuse_speed_from_engine(
            ens.eq, ens.engine, ens.global_ids(dif), ens.wall_ctr[dif],
            LANE_WALL)
        ens.wall_ctr[dif] = idx
        ens.v[dif] = r  # inward is the positive direction in d = 1
    ens.n_wall[hit] += 1
    assert np.all(ens.v[hit] > 0.0)


def _advect(ens: ParticleEnsemble, idx: np.ndarray, dt: np.ndarray) -> None:
    """Free transport of particles `idx` for macro durations dt, resolving
    every wall interaction (and far-edge mirror when enabled) on the way."""
    speed_fac = ens.eps ** (1.0 - 2.0 * ens.params.s)
    remaining = np.asarray(dt, dtype=float).copy()
    assert np.all(remaining >= 0.0)
    act = idx[remaining > 0.0]
    rem = remaining[remaining > 0.0]
    far = ens.far_edge == "specular"
    for _ in range(_MAX_WALL_WAVES):
        if act.size == 0:
            return
        V = speed_fac * ens.v[act]
        x_new = ens.x[act] + V * rem
        hits0 = (V < 0.0) & (x_new < 0.0)
        hitsL = far & (V > 0.0) & (x_new > ens.L_box)
        free = ~(hits0 | hitsL)
        ens.x[act[free]] = np.maximum(x_new[free], 0.0)
        if far:
            ens.x[act[free]] = np.minimum(ens.x[act[free]], ens.L_box)
        crossing = ~free
        act, rem, V = act[crossing], rem[crossing], V[crossing]
        if act.size == 0:
            return
        at0 = ens.v[act] < 0.0
        t_hit = np.where(at0, ens.x[act] / np.maximum(-V, 1e-300),
                         (ens.L_box - ens.x[act]) / np.maximum(V, 1e-300))
        rem = np.maximum(rem - t_hit, 0.0)
        ens.x[act[at0]] = 0.0
        _wall_interact(ens, act[at0])
        mirror = act[~at0]
        ens.x[mirror] = ens.L_box
        ens.v[mirror] = -ens.v[mirror]
    raise AssertionError("wall interaction loop failed to terminate")


def _advance(ens: ParticleEnsemble, t_stop: float) -> None:
    """Run the event loop for all particles up to macro time t_stop."""
    assert t_stop >= ens.t
    rate = ens.params.nu0 * ens.eps ** (-2.0 * ens.params.s)
    t_now = np.full(ens.n_particles, ens.t)
    act = np.flatnonzero(ens.next_scatter <= t_stop)
    while act.size:
        # fly to the scattering event, then redraw velocity and flight
        _advect(ens, act, ens.next_scatter[act] - t_now[act])
        t_now[act] = ens.next_scatter[act]
        pids = ens.global_ids(act)
        u_speed = ens.engine.u01(pids, ens.scatter_ctr[act], LANE_SCATTER)
        u_sign = ens.engine.u01(pids, ens.scatter_ctr[act] + np.uint64(1),
                                LANE_SCATTER)
        ens.scatter_ctr[act] += np.uint64(2)
        ens.v[act] = ens.eq.speed_ppf(u_speed) * np.where(u_sign < 0.5, -1.0, 1.0)
        u_fl = ens.engine.u01(pids, ens.flight_ctr[act], LANE_FLIGHT)
        ens.flight_ctr[act] += np.uint64(1)
        ens.next_scatter[act] = t_now[act] - np.log(u_fl) / rate
        ens.n_scatter[act] += 1
        act = act[ens.next_scatter[act] <= t_stop]
    all_idx = np.arange(ens.n_particles)
    _advect(ens, all_idx, t_stop - t_now)
    ens.t = t_stop


def density(ens: ParticleEnsemble, n_bins: int = 128,
            L_box: float | None = None) -> DensityField:
    """Histogram density on [0, L_box] with per-bin standard errors."""
    L = ens.L_box if L_box is None else float(L_box)
    edges = np.linspace(0.0, L, n_bins + 1)
    counts, _ = np.histogram(ens.x, bins=edges)
    n = ens.n_particles
    h = L / n_bins
    values = counts / (n * h)
    stderr = np.sqrt(counts) / (n * h)
    out = 1.0 - counts.sum() / n
    return DensityField(edges=edges, values=values, stderr=stderr,
                        t=ens.t, out_of_window=out)


def run(ens: ParticleEnsemble, t_end: float, snapshot_times=(),
        n_bins: int = 128) -> list[DensityField]:
    """Advance to t_end, returning a DensityField at each snapshot time.

    Flights in progress continue across snapshots (snapshots only interrupt
    the advection, never the clocks), so splitting a run into segments
    reproduces the unsplit trajectory.
    """
    if t_end < ens.t:
        raise ValueError("t_end must not precede the ensemble time")
    stops = sorted(float(t) for t in snapshot_times)
    assert all(ens.t <= t <= t_end for t in stops), \
        "snapshots must lie in [ens.t, t_end]"
    fields = []
    for t_snap in stops:
        _advance(ens, t_snap)
        fields.append(density(ens, n_bins=n_bins))
    _advance(ens, t_end)
    return fields


# ---------------------------------------------------------------------------
# diagnostics


def velocity_disequilibrium(ens: ParticleEnsemble, n_bins: int = 64,
                            v_cut: float = V_CUT) -> float:
    """Chi-square-style distance of the empirical velocity marginal from F:
    sum over coarse bins of (p_hat - p)^2 / p, with |v| > v_cut lumped.
    Zero in law exactly when the marginal is F."""
    edges = np.linspace(-v_cut, v_cut, n_bins + 1)
    counts, _ = np.histogram(ens.v, bins=edges)
    n = ens.n_particles
    cdf = ens.eq.speed_cdf(np.abs(edges))
    # symmetric law: P([a,b]) = (cdf|b| - cdf|a|)/2 per side of the origin
    sgn = np.sign(edges)
    half = 0.5 * (1.0 + sgn * cdf)
    p = np.diff(half)
    p_tail = 1.0 - p.sum()
    phat = counts / n
    phat_tail = 1.0 - phat.sum()
    dist = float(np.sum((phat - p) ** 2 / np.maximum(p, 1e-300)))
    if p_tail > 0.0:
        dist += (phat_tail - p_tail) ** 2 / p_tail
    return float(np.sqrt(dist))


def speed_ks_statistic(ens: ParticleEnsemble) -> float:
    """Kolmogorov-Smirnov distance of the empirical speed law from the
    model speed CDF."""
    sp = np.sort(np.abs(ens.v))
    cdf = ens.eq.speed_cdf(sp)
    n = sp.size
    up = np.arange(1, n + 1) / n - cdf
    lo = cdf - np.arange(0, n) / n
    return float(max(up.max(), lo.max()))


def mean_scatter_count(ens: ParticleEnsemble) -> float:
    return float(ens.n_scatter.mean())


def write_run_manifest(path, *, params: ModelParams, eps: float, alpha: float,
                       seed: int, n_particles: int, t_end: float,
                       timings: dict, extra: dict | None = None) -> None:
    """JSON run manifest: model setup, seed, sizes, wall-clock timings."""
    doc = {
        "model": {"d": params.d, "s": params.s, "nu0": params.nu0},
        "eps": eps,
        "alpha": alpha,
        "seed": seed,
        "n_particles": n_particles,
        "t_end": t_end,
        "timings_sec": {k: round(float(v), 6) for k, v in timings.items()},
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def simulate(rho_in, n_particles: int, params: ModelParams, eq: Equilibrium,
             eps: float, t_end: float, seed: int, *,
             alpha: float = 0.0, wall_rule: str = "maxwell",
             snapshot_times=(), n_bins: int = 128, L_box: float = 16.0,
             far_edge: str = "open"):
    """One full run: init, evolve, final density.  Returns
    (ensemble, snapshot fields, final field, timings dict)."""
    t0 = time.perf_counter()
    ens = init_ensemble(rho_in, n_particles, params, eq, eps, seed,
                        wall_rule=wall_rule, alpha=alpha, L_box=L_box,
                        far_edge=far_edge)
    t1 = time.perf_counter()
    fields = run(ens, t_end, snapshot_times, n_bins=n_bins)
    t2 = time.perf_counter()
    final = density(ens, n_bins=n_bins)
    t3 = time.perf_counter()
    timings = {"init": t1 - t0, "evolve": t2 - t1, "snapshot": t3 - t2}
    return ens, fields, final, timings
