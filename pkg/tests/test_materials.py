import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rigidmpm.errors import InvalidConfigError, MaterialError
from rigidmpm.materials import (DruckerPrager, HenckyElastic, consistent_tangent, depth_stiffness,
                                drucker_prager_return, geostatic_be, hencky_update, jaky_k0)
from rigidmpm.scenarios.config import SAND_TABLE

I = np.eye(3)


def rot(axis, th):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return I + math.sin(th) * K + (1 - math.cos(th)) * K @ K


def small_strain_tensor(E, nu):
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    a = np.zeros((3, 3, 3, 3))
    for i, j, k, l in np.ndindex(3, 3, 3, 3):
        a[i, j, k, l] = lam * I[i, j] * I[k, l] + mu * (I[i, k] * I[j, l] + I[i, l] * I[j, k])
    return a.reshape(9, 9)


def test_hencky_identity_zero_stress():
    r = hencky_update(I, 1e3, 0.3)
    np.testing.assert_allclose(r.sigma, 0.0, atol=1e-14)


@pytest.mark.parametrize("lam", [0.8, 1.2, 0.5])
def test_hencky_uniaxial(lam):
    r = hencky_update(np.diag([lam, 1.0, 1.0]), 1e3, 0.0)
    assert r.sigma[0, 0] == pytest.approx(1e3 * math.log(lam) / lam, rel=1e-13)
    np.testing.assert_allclose(r.sigma[1:, 1:], 0.0, atol=1e-12)


def test_hencky_rotation_zero_stress():
    r = hencky_update(rot([1, 2, 3], 0.8), 1e3, 0.3)
    np.testing.assert_allclose(r.sigma, 0.0, atol=1e-11)


def test_invalid_parameters():
    with pytest.raises(InvalidConfigError):
        HenckyElastic(-1.0, 0.3, 1.0)
    with pytest.raises(InvalidConfigError):
        DruckerPrager(1e6, 0.3, 1.0, 30.0, 35.0, 0.0)


def test_non_spd_raises():
    with pytest.raises(MaterialError):
        HenckyElastic(1e3, 0.3, 1.0).update(-np.eye(3), 1.0)


def sand(c=300.0):
    return DruckerPrager(1e6, 0.3, 1.0, 32.8, 2.8, c)


def test_dp_elastic_inside_cone():
    m = sand()
    F = np.diag([0.999, 0.999, 0.998])  # compression, inside the cone
    r = drucker_prager_return(F, m)
    e = hencky_update(F, 1e6, 0.3)
    assert not r.plastic
    np.testing.assert_allclose(r.sigma, e.sigma, rtol=1e-14)


def test_dp_apex_return():
    m = sand(c=300.0)
    r = drucker_prager_return(np.eye(3) * 1.01, m)  # hydrostatic tension
    assert r.plastic
    p_apex = m.xi * m.c / m.eta
    np.testing.assert_allclose(r.tau, p_apex * I, rtol=1e-12, atol=1e-9)


def test_dp_shear_radial_return():
    m = DruckerPrager(1e6, 0.3, 1.0, 30.0, 0.0, 1e3)
    base = np.diag(np.exp([-2e-3, -2e-3, -2e-3]))  # some confinement
    F = base @ np.array([[1.0, 0.02, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    e = hencky_update(F, 1e6, 0.3)
    r = drucker_prager_return(F, m)
    assert r.plastic
    p_e = np.trace(e.tau) / 3
    p_r = np.trace(r.tau) / 3
    assert p_r == pytest.approx(p_e, rel=1e-12)
    s_e = e.tau - p_e * I
    s_r = r.tau - p_r * I
    # deviator scaled down along its own direction onto the cone
    k = np.sum(s_r * s_e) / np.sum(s_e * s_e)
    np.testing.assert_allclose(s_r, k * s_e, atol=1e-9 * np.abs(s_e).max())
    assert 0 < k < 1
    assert abs(m.yield_function(r.tau)) <= 1e-8 * m.E


def random_F(rng, scale=0.05):
    return I + scale * rng.standard_normal((3, 3))


@given(st.integers(0, 10 ** 6))
def test_dp_admissible_and_objective(seed):
    rng = np.random.default_rng(seed)
    m = sand()
    F = random_F(rng, 0.02)
    r = drucker_prager_return(F, m)
    assert m.yield_function(r.tau) <= 1e-8 * m.E
    Q = rot(rng.standard_normal(3), rng.uniform(0, math.pi))
    rq = drucker_prager_return(Q @ F, m)
    np.testing.assert_allclose(rq.sigma, Q @ r.sigma @ Q.T, atol=1e-9 * max(1.0, np.abs(r.sigma).max()))


def test_elastic_tangent_at_identity():
    r = hencky_update(I, 2e3, 0.25)
    np.testing.assert_allclose(consistent_tangent(r), small_strain_tensor(2e3, 0.25), rtol=1e-12, atol=1e-9)


def _fd_tangent(model, b, J, h=1e-7):
    """Central differences of tau(b(I + dh)) in dh, scaled to match J (a + geo)."""
    out = np.zeros((9, 9))
    for kl in range(9):
        d = np.zeros(9)
        d[kl] = h
        D = d.reshape(3, 3)
        bp = (I + D) @ b @ (I + D).T
        bm = (I - D) @ b @ (I - D).T
        out[:, kl] = (model.update(bp, J).tau - model.update(bm, J).tau).ravel() / (2 * h)
    return out


def _check_tangent(model, F):
    b = F @ F.T
    J = np.linalg.det(F)
    r = model.update(b, J)
    a = consistent_tangent(r)
    geo = np.einsum("il,jk->ijkl", r.sigma, I).reshape(9, 9)
    analytic = J * (a + geo)
    fd = _fd_tangent(model, b, J)
    # apex returns have a zero tangent, so scale by the elastic modulus
    return np.abs(analytic - fd).max() / max(np.abs(fd).max(), model.E), bool(r.plastic)


def test_tangent_fd_100_states():
    rng = np.random.default_rng(7)
    n_plastic = 0
    worst = 0.0
    for k in range(100):
        model = sand(c=300.0) if k % 2 else HenckyElastic(1e6, 0.3, 1.0)
        F = random_F(rng, 0.01 if k % 2 else 0.1)
        err, plastic = _check_tangent(model, F)
        n_plastic += plastic
        worst = max(worst, err)
    assert worst < 1e-5
    assert n_plastic > 10


def test_plastic_tangent_differs():
    m = sand()
    F = np.array([[1.0, 0.03, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    r = drucker_prager_return(F, m)
    e = hencky_update(F, m.E, m.nu)
    assert r.plastic
    assert np.abs(consistent_tangent(r) - consistent_tangent(e)).max() > 1e-3 * m.E


def test_k0_table():
    assert jaky_k0(32.8) == pytest.approx(0.45, abs=0.01)
    assert jaky_k0(33.5) == pytest.approx(0.44, abs=0.01)
    assert SAND_TABLE["38%"]["K0"] == pytest.approx(0.45)


def test_depth_stiffness_value():
    # 22800 kPa * (5 m * 16.5 kN/m3 * 0.45 / 100 kPa)^0.58
    E = depth_stiffness(5.0, 16.5e3, 22.8e6, 0.58, 0.45, 100e3, 300.0)
    assert E == pytest.approx(1.2834e7, rel=1e-3)


def test_depth_stiffness_floor():
    E0 = depth_stiffness(0.0, 16.5e3, 22.8e6, 0.58, 0.45, 100e3, 300.0)
    assert E0 == pytest.approx(22.8e6 * (300.0 * 0.45 / 100e3) ** 0.58, rel=1e-12)
    with pytest.raises(InvalidConfigError):
        depth_stiffness(0.0, 16.5e3, 22.8e6, 0.58, 0.45, 100e3, 0.0)


def test_geostatic_state():
    be, tau = geostatic_be(np.array([0.0, 2.0]), 16.5e3, 0.45, 1e7, 0.3)
    np.testing.assert_allclose(np.diagonal(tau[1]), [-0.45 * 33e3, -0.45 * 33e3, -33e3])
    m = HenckyElastic(1e7, 0.3, 1.0)
    r = m.update(be[1], 1.0)
    np.testing.assert_allclose(r.tau, tau[1], rtol=1e-10, atol=1e-6)
