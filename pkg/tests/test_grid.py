import numpy as np
import pytest
from hypothesis import given, strategies as st

from rigidmpm.errors import InvalidConfigError, OutOfDomainError
from rigidmpm.grid import BackgroundGrid, build_graded_axis, shape_values_hex, uniform_axis


def unit_grid(n=1, h=1.0):
    ax = uniform_axis(0.0, n * h, h)
    return BackgroundGrid((ax, ax, ax))


def test_graded_uniform_region_only():
    ax = build_graded_axis(0.1, 0.3, 0.3, 1.3)
    np.testing.assert_allclose(ax.coords, [0.0, 0.1, 0.2, 0.3], atol=1e-12)


def test_graded_power_law_and_snap():
    ax = build_graded_axis(0.5, 0.5, 1.5, 1.3)
    # 0.5, 0.5**1.3, (0.5**1.3)**1.3 then the node nearest 1.5 snapped onto it
    np.testing.assert_allclose(ax.coords, [0.0, 0.5, 0.9061261981781177, 1.2160531231628644, 1.5], rtol=1e-12)
    assert ax.spacing[1] == pytest.approx(0.40613, abs=1e-5)


@pytest.mark.parametrize("args", [(0.1, 0.0, 0.0, 1.3), (float("nan"), 0.3, 0.3, 1.3), (0.1, 0.3, 0.3, float("inf")),
                                  (-0.1, 0.3, 0.3, 1.3)])
def test_graded_invalid(args):
    with pytest.raises(InvalidConfigError):
        build_graded_axis(*args)


def test_uniform_axis_rejects_non_multiple():
    with pytest.raises(InvalidConfigError):
        uniform_axis(0.0, 1.0, 0.3)


def test_locate_centroid():
    g = unit_grid()
    eid, local = g.locate_element(np.array([0.5, 0.5, 0.5]))
    assert eid == 0
    np.testing.assert_allclose(local, 0.0, atol=1e-15)


def test_locate_shared_face_tie_break():
    g = unit_grid(2, 0.5)
    eid, local = g.locate_element(np.array([0.5, 0.25, 0.25]))
    assert eid == 0
    assert local[0] == pytest.approx(1.0)


def test_locate_outside():
    with pytest.raises(OutOfDomainError):
        unit_grid().locate_element(np.array([-0.1, 0.0, 0.0]))


def test_hex_nodal_interpolation():
    N, _ = shape_values_hex(np.array([-1.0, -1.0, -1.0]))
    expect = np.zeros(8)
    expect[0] = 1.0
    np.testing.assert_allclose(N, expect, atol=1e-15)


def test_hex_gradient_magnitude_at_centre():
    # unit cube: h = 1, derivative of 1/8 (1 +- x)(1 +- y)(1 +- z) in global coords at the centre
    _, dN = shape_values_hex(np.zeros(3), h=(1.0, 1.0, 1.0))
    np.testing.assert_allclose(np.abs(dN), 0.25, rtol=1e-14)


@given(st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_hex_partition_of_unity(local):
    N, dN = shape_values_hex(np.array(local), h=(0.3, 0.7, 1.1))
    assert abs(N.sum() - 1.0) < 1e-14
    np.testing.assert_allclose(dN.sum(axis=0), 0.0, atol=1e-13)


@given(st.lists(st.floats(-0.9, 0.9), min_size=3, max_size=3))
def test_hex_gradient_matches_fd(local):
    h = np.array([0.3, 0.7, 1.1])
    x = np.array(local)
    _, dN = shape_values_hex(x, h=h)
    eps = 1e-6
    for d in range(3):
        e = np.zeros(3)
        e[d] = eps
        fd = (shape_values_hex(x + e, h=h)[0] - shape_values_hex(x - e, h=h)[0]) / (2 * eps) * 2.0 / h[d]
        np.testing.assert_allclose(dN[:, d], fd, atol=1e-8)


def test_node_element_numbering_round_trip():
    g = BackgroundGrid((uniform_axis(0, 3, 1), uniform_axis(0, 2, 1), uniform_axis(0, 1, 1)))
    ids = np.arange(g.n_nodes)
    assert np.array_equal(g.node_id(g.node_ijk(ids)), ids)
    eids = np.arange(g.n_elements)
    assert np.array_equal(g.element_id(g.element_ijk(eids)), eids)
    em, ep, ax = g.interior_faces()
    assert len(em) == 2 * 2 * 1 + 3 * 1 * 1 + 0
