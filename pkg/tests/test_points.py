import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from rigidmpm import points as pts
from rigidmpm.errors import ElementInversionError, OutOfDomainError
from rigidmpm.grid import BackgroundGrid, uniform_axis


def cube_grid(n=4, h=0.25):
    ax = uniform_axis(0.0, n * h, h)
    return BackgroundGrid((ax, ax, ax))


def one_point(x, lp, m=1.0):
    lp = np.broadcast_to(lp, 3)
    return pts.MaterialPoints([x], [lp], m, 8.0 * np.prod(lp))


def test_gimp_centred_on_node():
    # (1 / (2 lp)) int_{-lp}^{lp} (1 - |x|) dx with lp = 0.25, h = 1
    idx, S, _ = pts.gimp_1d(np.arange(5.0), np.array([2.0]), np.array([0.25]))
    assert S[0][idx[0] == 2][0] == pytest.approx(0.875, abs=1e-14)
    assert S.sum() == pytest.approx(1.0, abs=1e-14)


def test_gimp_dirac_limit():
    c = np.arange(5.0)
    x = np.array([1.3])
    idx, S, _ = pts.gimp_1d(c, x, np.array([1e-15]))
    w = dict(zip(idx[0][idx[0] >= 0], S[0][idx[0] >= 0]))
    assert w[1] == pytest.approx(0.7, abs=1e-12)
    assert w[2] == pytest.approx(0.3, abs=1e-12)


def test_centre_outside_grid():
    with pytest.raises(OutOfDomainError):
        pts.gimp_1d(np.arange(3.0), np.array([-0.2]), np.array([0.1]))


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.01, 0.2))
def test_basis_partition_of_unity_and_fd(x, y, z, lp):
    g = cube_grid()
    X = np.array([[x, y, z]])
    L = np.array([[lp, 0.7 * lp, 1.3 * lp]])
    # the weights have a kink where a domain edge meets the grid boundary
    assume(np.all(np.abs(X - L) > 1e-5) and np.all(np.abs(X + L - 1.0) > 1e-5))
    st_ = pts.gimp_basis(X, L, g, prune=False)
    assert abs(st_.S.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(st_.dS.sum(axis=1), 0.0, atol=1e-10)
    eps = 1e-7

    def dense(stn, vals):
        return pts.scatter(stn, vals, g.n_nodes)

    for d in range(3):
        e = np.zeros(3)
        e[d] = eps
        fd = (dense(pts.gimp_basis(X + e, L, g), pts.gimp_basis(X + e, L, g).S)
              - dense(pts.gimp_basis(X - e, L, g), pts.gimp_basis(X - e, L, g).S)) / (2 * eps)
        an = dense(st_, st_.dS[..., d])
        assert np.abs(fd - an).max() <= 1e-6 * np.abs(an).max()


def test_single_point_forces():
    g = cube_grid()
    p = one_point([0.4, 0.45, 0.5], 0.05, m=2.0)
    st_ = pts.points_basis(p, g)
    M, fint, fbody = pts.map_points_to_grid(p, st_, g.n_nodes, body_accel=(0.0, 0.0, -9.81))
    np.testing.assert_allclose(fint, 0.0, atol=1e-15)
    np.testing.assert_allclose(fbody.sum(axis=0), [0.0, 0.0, -2.0 * 9.81], rtol=1e-14)
    assert M.sum() == pytest.approx(2.0, rel=1e-14)


def test_two_identical_points_double_mass():
    g = cube_grid()
    p1 = one_point([0.4, 0.45, 0.5], 0.05)
    p2 = one_point([0.4, 0.45, 0.5], 0.05)
    p2.append(one_point([0.4, 0.45, 0.5], 0.05))
    M1 = pts.consistent_mass(pts.points_basis(p1, g), p1.mass, g.n_nodes)
    M2 = pts.consistent_mass(pts.points_basis(p2, g), p2.mass, g.n_nodes)
    np.testing.assert_allclose(M2.toarray(), 2.0 * M1.toarray(), rtol=1e-15)


def _filled(g, ppe=2):
    return pts.fill_box(g, [0.25, 0.25, 0.25], [0.75, 0.75, 0.75], ppe, 1000.0)


def test_uniform_velocity_projection():
    import scipy.sparse.linalg as spla
    g = cube_grid()
    p = _filled(g)
    p.v[:] = [0.3, -0.1, 2.0]
    st_ = pts.points_basis(p, g)
    M = pts.consistent_mass(st_, p.mass, g.n_nodes)
    mv, _ = pts.project_momentum(p, st_, g.n_nodes)
    act = pts.active_nodes(st_)
    v = spla.spsolve(M[act][:, act].tocsc(), mv[act])
    np.testing.assert_allclose(v, np.tile([0.3, -0.1, 2.0], (len(act), 1)), atol=1e-10)


def test_linear_field_reproduction():
    import scipy.sparse.linalg as spla
    g = cube_grid()
    p = _filled(g)
    st_ = pts.points_basis(p, g)
    A = np.array([[0.1, 0.2, -0.3], [0.0, 0.5, 0.1], [0.2, -0.1, 0.05]])
    nodal = g.node_coords() @ A.T + [0.01, 0.02, 0.03]
    up = pts.gather(st_, nodal)
    np.testing.assert_allclose(up, p.x @ A.T + [0.01, 0.02, 0.03], atol=1e-13)
    M = pts.consistent_mass(st_, p.mass, g.n_nodes)
    rhs = pts.scatter(st_, st_.S[:, :, None] * (p.mass[:, None] * up)[:, None, :], g.n_nodes)
    act = pts.active_nodes(st_)
    back = spla.spsolve(M[act][:, act].tocsc(), rhs[act])
    np.testing.assert_allclose(back, nodal[act], atol=1e-10)
    np.testing.assert_allclose(pts.gather_gradient(st_, nodal), np.broadcast_to(A, (len(p), 3, 3)), atol=1e-12)


def _update(p, g, field):
    st_ = pts.points_basis(p, g)
    u = field(g.node_coords())
    z = np.zeros_like(u)
    return pts.update_point_from_grid(p, st_, u, z, z, z)


def test_zero_increment_leaves_state():
    g = cube_grid()
    p = _filled(g)
    x0 = p.x.copy()
    _update(p, g, lambda X: np.zeros_like(X))
    np.testing.assert_array_equal(p.x, x0)
    np.testing.assert_array_equal(p.F, np.broadcast_to(np.eye(3), p.F.shape))
    np.testing.assert_allclose(p.vol, p.vol0, rtol=0)


def test_uniform_stretch():
    g = cube_grid()
    p = _filled(g)
    _update(p, g, lambda X: np.stack([0.1 * X[:, 0], 0 * X[:, 0], 0 * X[:, 0]], 1))
    np.testing.assert_allclose(p.F[:, 0, 0], 1.1, rtol=1e-12)
    np.testing.assert_allclose(p.vol, 1.1 * p.vol0, rtol=1e-12)


def test_small_rotation_preserves_volume():
    g = cube_grid()
    p = _filled(g)
    th = 1e-3
    R = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    c = np.array([0.5, 0.5, 0.5])
    _update(p, g, lambda X: (X - c) @ R.T + c - X)
    assert np.max(np.abs(p.J - 1.0)) <= 2 * th ** 2


def test_inversion_detected():
    g = cube_grid()
    p = _filled(g)
    with pytest.raises(ElementInversionError):
        _update(p, g, lambda X: np.stack([-2.0 * X[:, 0], 0 * X[:, 0], 0 * X[:, 0]], 1))


@pytest.mark.parametrize("F, factor", [(np.eye(3), [1, 1, 1]), (np.diag([2.0, 1.0, 1.0]), [2, 1, 1])])
def test_reset_domain_diagonal(F, factor):
    p = one_point([0.5, 0.5, 0.5], [0.1, 0.05, 0.02])
    p.F[0] = F
    p.vol = np.linalg.det(p.F) * p.vol0
    pts.reset_domain(p)
    np.testing.assert_allclose(p.lp[0], p.lp0[0] * factor, rtol=1e-14)
    assert 8 * np.prod(p.lp[0]) == pytest.approx(p.vol[0], rel=1e-12)


def test_reset_domain_rotation():
    p = one_point([0.5, 0.5, 0.5], [0.1, 0.05, 0.02])
    th = 0.7
    p.F[0] = [[np.cos(th), 0, np.sin(th)], [0, 1, 0], [-np.sin(th), 0, np.cos(th)]]
    pts.reset_domain(p)
    np.testing.assert_allclose(p.lp[0], p.lp0[0], rtol=1e-12)


@given(st.lists(st.floats(-0.3, 0.3), min_size=9, max_size=9))
def test_reset_domain_volume_consistency(vals):
    p = one_point([0.5, 0.5, 0.5], [0.1, 0.05, 0.02])
    p.F[0] = np.eye(3) + np.reshape(vals, (3, 3))
    J = np.linalg.det(p.F[0])
    if J < 0.2:
        return
    p.vol = J * p.vol0
    pts.reset_domain(p)
    assert abs(8 * np.prod(p.lp[0]) - p.vol[0]) <= 1e-12 * p.vol[0]


def test_fill_box_layout():
    g = cube_grid()
    p = _filled(g, ppe=2)
    assert len(p) == 8 * 8
    np.testing.assert_allclose(p.lp, 0.0625)
    assert p.vol0.sum() == pytest.approx(0.125, rel=1e-14)
    assert p.mass.sum() == pytest.approx(125.0, rel=1e-14)
