"""Exact geometry of the half-space {x_d > 0}: exit data, specular reflection,
the mirror-extended free flow eta, and straight-line advection with wall rules.

All formulas are closed-form; no tolerance parameters enter.  The wall is the
hyperplane {x_d = 0} with constant outward normal n = (0, ..., 0, -1).
Grazing motion (v_d = 0 exactly on the wall) is measure zero and is treated as
interior motion parallel to the wall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Equilibrium, sample_diffuse_velocity
from .rng import RandomStream


@dataclass(frozen=True)
class HalfSpace:
    d: int = 1

    @property
    def outward_normal(self) -> np.ndarray:
        n = np.zeros(self.d)
        n[-1] = -1.0
        return n

    def contains(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[..., -1] > 0.0


@dataclass(frozen=True)
class ExitRecord:
    """Forward exit time and point of the ray x + tau v.

    tau_f = inf when the ray never leaves (v_d >= 0); x_f lies on the wall
    (last coordinate exactly 0) whenever tau_f is finite.
    """

    tau_f: float
    x_f: np.ndarray | None

    def __post_init__(self):
        if np.isfinite(self.tau_f):
            assert self.x_f is not None and self.x_f[-1] == 0.0


def exit(x, v, eps: float = 1.0) -> ExitRecord:
    """Exit data of the ray x + tau*(eps*v); eps != 1 gives the scaled variant
    tau_f^eps(x, v) = tau_f(x, eps v)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    assert x[-1] >= 0.0, "starting point must lie in the closed half-space"
    assert np.any(v != 0.0), "velocity must be nonzero"
    vd = eps * v[-1]
    if x[-1] == 0.0 and vd == 0.0:
        raise ValueError("grazing ray from the wall has no well-defined exit data")
    if vd >= 0.0:  # moving inward or parallel: never exits forward
        return ExitRecord(np.inf, None)
    tau = x[-1] / (-vd)
    xf = x + tau * eps * v
    xf[-1] = 0.0  # exact by construction; avoid -0.0 / roundoff residue
    return ExitRecord(tau, xf)


def specular_reflect(v) -> np.ndarray:
    """Mirror the wall-normal component: (v', v_d) -> (v', -v_d).  Involution
    and isometry."""
    v = np.asarray(v, dtype=float).copy()
    v[..., -1] = -v[..., -1]
    return v


def eta(x, w) -> np.ndarray:
    """Mirror-extended endpoint of the displacement w from x: the specularly
    reflected free flow at time 1.  Both branches merge into
    eta_d = |x_d + w_d|; eta is continuous and lands in the closed half-space."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    out = x + w
    out = np.array(out, dtype=float, copy=True)
    out[..., -1] = np.abs(out[..., -1])
    return out


def advect_with_reflection(x, v, duration: float, rule: str = "specular",
                           rng: RandomStream | None = None,
                           alpha: float | None = None,
                           eq: Equilibrium | None = None):
    """Straight-line motion for `duration` with wall interaction per `rule`.

    rule is one of 'specular', 'diffuse', 'maxwell'; the latter two draw from
    the wall re-emission law and need (eq, rng), maxwell additionally alpha
    (one Bernoulli draw per hit).  Returns (x_end, v_end, boundary_hits).
    In the half-space any post-reflection velocity points inward, so a single
    flight hits the wall at most once.
    """
    x = np.asarray(x, dtype=float).copy()
    v = np.asarray(v, dtype=float).copy()
    assert x[-1] >= 0.0 and duration >= 0.0
    hs = HalfSpace(d=x.size)
    remaining = float(duration)
    hits = 0
    while remaining > 0.0:
        target = x[-1] + v[-1] * remaining
        if v[-1] >= 0.0 or target >= 0.0:
            x = x + v * remaining
            break
        t_hit = x[-1] / (-v[-1])
        x = x + v * t_hit
        x[-1] = 0.0  # land on the wall exactly
        remaining -= t_hit
        hits += 1
        assert hits <= 10000, "reflection loop runaway"
        if rule == "specular":
            v = specular_reflect(v)
        elif rule == "diffuse":
            assert rng is not None and eq is not None
            v = sample_diffuse_velocity(eq, hs.outward_normal, rng)
        elif rule == "maxwell":
            assert rng is not None and eq is not None and alpha is not None
            if rng.uniform() < alpha:
                v = sample_diffuse_velocity(eq, hs.outward_normal, rng)
            else:
                v = specular_reflect(v)
        else:
            raise ValueError(f"unknown wall rule {rule!r}")
    return x, v, hits
