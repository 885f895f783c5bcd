"""Half-space geometry: exit times, reflections, folded advection."""
import numpy as np
import pytest

from fraclimit import geometry as G
from fraclimit import model as M
from fraclimit.rng import RandomStream


def test_halfspace_normal_and_membership():
    hs = G.HalfSpace(d=1)
    assert np.array_equal(hs.outward_normal, [-1.0])
    hs3 = G.HalfSpace(d=3)
    assert np.array_equal(hs3.outward_normal, [0.0, 0.0, -1.0])
    assert hs.contains(np.array([0.5]))
    assert not hs.contains(np.array([-0.1]))


def test_exit_record_basic_cases():
    rec = G.exit(np.array([2.0]), np.array([-0.5]))
    assert rec.tau_f == 4.0 and rec.x_f[0] == 0.0
    rec = G.exit(np.array([2.0]), np.array([0.5]))
    assert rec.tau_f == np.inf and rec.x_f is None
    # wall point with outgoing velocity exits immediately
    rec = G.exit(np.array([0.0]), np.array([-1.0]))
    assert rec.tau_f == 0.0 and rec.x_f[0] == 0.0


def test_exit_speed_scaling():
    # travel time against a velocity scaled by eps
    rec = G.exit(np.array([2.0]), np.array([-0.5]), eps=0.1)
    assert rec.tau_f == 40.0


def test_exit_grazing_rejected():
    with pytest.raises(ValueError):
        G.exit(np.array([0.0, 0.0]), np.array([1.0, 0.0]))


def test_exit_multi_dimensional():
    rec = G.exit(np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.0, -1.5]))
    assert abs(rec.tau_f - 2.0) < 1e-15
    assert np.allclose(rec.x_f, [2.0, 2.0, 0.0])


def test_specular_reflect_involution_isometry():
    v = np.array([0.3, -1.2])
    assert np.array_equal(G.specular_reflect(G.specular_reflect(v)), v)
    assert np.linalg.norm(G.specular_reflect(v)) == np.linalg.norm(v)
    assert G.specular_reflect(np.array([-2.0]))[0] == 2.0


def test_eta_folds_last_coordinate():
    x = np.array([[1.0], [2.0]])
    w = np.array([[0.5], [-3.0]])
    assert np.allclose(G.eta(x, w), [[1.5], [1.0]])
    # continuous across the fold
    x0 = np.array([1.0])
    for h in (1e-8, -1e-8):
        assert abs(G.eta(x0, np.array([-1.0 + h]))[0]) < 2e-8


def test_advect_specular_mirror_path():
    x, v, hits = G.advect_with_reflection(np.array([1.0]), np.array([-2.0]),
                                          1.0, "specular")
    assert hits == 1 and np.allclose(x, [1.0]) and np.allclose(v, [2.0])
    x, v, hits = G.advect_with_reflection(np.array([1.0]), np.array([2.0]),
                                          1.0, "specular")
    assert hits == 0 and np.allclose(x, [3.0])


def test_advect_maxwell_alpha_zero_is_specular(p75):
    eq = M.make_default_equilibrium(p75)
    st = RandomStream(5, pid=1)
    x, v, hits = G.advect_with_reflection(np.array([1.0]), np.array([-2.0]),
                                          1.0, "maxwell", rng=st, alpha=0.0,
                                          eq=eq)
    assert hits == 1 and np.allclose(x, [1.0]) and np.allclose(v, [2.0])


def test_advect_diffuse_reemits_inward(eq75):
    st = RandomStream(6, pid=2)
    x, v, hits = G.advect_with_reflection(np.array([1.0]), np.array([-2.0]),
                                          1.0, "diffuse", rng=st, eq=eq75)
    # hit at t=0.5, then travel the remaining 0.5 with the re-drawn speed
    assert hits == 1 and v[0] > 0 and abs(x[0] - v[0] * 0.5) < 1e-14
