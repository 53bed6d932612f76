import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from geometry import (
    UserPosition,
    build_planar_array,
    element_index_maps,
    element_to_user,
    pairwise_distances,
)

LAM = 0.1


def test_first_element_at_origin():
    g = build_planar_array(2, 2, 0.5 * LAM, 0.5 * LAM)
    assert_array_equal(g.position(1), [0.0, 0.0, 0.0])


def test_index_maps_2x2():
    a = b = 0.5 * LAM
    g = build_planar_array(2, 2, a, b)
    assert element_index_maps(g, 3) == (1, 2)
    assert_allclose(g.position(3), [0.0, b, 0.0])
    assert element_index_maps(g, 4) == (2, 2)
    assert_allclose(g.position(4), [a, b, 0.0])


@pytest.mark.parametrize("m_x, m_y", [(1, 1), (2, 2), (3, 2), (4, 4), (5, 1)])
def test_index_maps_are_a_bijection(m_x, m_y):
    g = build_planar_array(m_x, m_y, 0.03, 0.04)
    seen = {element_index_maps(g, k) for k in range(1, g.m + 1)}
    assert seen == {(i, j) for i in range(1, m_x + 1) for j in range(1, m_y + 1)}
    for k in range(1, g.m + 1):
        i, j = element_index_maps(g, k)
        assert_allclose(g.position(k), [(i - 1) * 0.03, (j - 1) * 0.04, 0.0])


def test_bad_arrays():
    with pytest.raises(ValueError):
        build_planar_array(0, 2, 0.1, 0.1)
    with pytest.raises(ValueError):
        build_planar_array(2, 2, 0.0, 0.1)
    g = build_planar_array(2, 1, 0.1, 0.1)
    with pytest.raises(IndexError):
        g.position(3)


def test_bad_users():
    with pytest.raises(ValueError):
        UserPosition(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        UserPosition(4.0, 0.0, 1.0)


def test_single_element_distance():
    g = build_planar_array(1, 1, LAM, LAM)
    user = UserPosition(0.0, 0.0, 10 * LAM)
    theta, phi, d = element_to_user(g, 1, user, LAM)
    assert (theta, phi) == (0.0, 0.0)
    assert d == 10 * LAM


def test_broadside_is_symmetric():
    g = build_planar_array(2, 1, 0.5 * LAM, 0.5 * LAM)
    user = UserPosition(0.0, 0.0, 1000 * LAM)
    _, _, d1 = element_to_user(g, 1, user, LAM)
    _, _, d2 = element_to_user(g, 2, user, LAM)
    assert d1 == pytest.approx(1000 * LAM, rel=1e-15)
    assert d2 == pytest.approx(math.hypot(1000 * LAM, 0.5 * LAM), rel=1e-15)


def test_endfire_path_difference():
    g = build_planar_array(2, 1, 0.5 * LAM, 0.5 * LAM)
    user = UserPosition(math.pi / 2, 0.0, 1000 * LAM)
    _, _, d1 = element_to_user(g, 1, user, LAM)
    _, _, d2 = element_to_user(g, 2, user, LAM)
    assert abs((d1 - d2) - 0.5 * LAM) < 1e-4 * LAM


def test_plane_wave_limit():
    g = build_planar_array(3, 2, 0.5 * LAM, 0.7 * LAM)
    user = UserPosition(0.6, 2.1, 1e6 * LAM)
    u_hat = user.cartesian() / user.distance_m
    _, _, d_ref = element_to_user(g, 1, user, LAM)
    for k in range(2, g.m + 1):
        _, _, d = element_to_user(g, k, user, LAM)
        p = g.position(k)
        # second-order curvature term |p|^2 / 2d is all that remains
        assert abs((d_ref - d) - p @ u_hat) < p @ p / user.distance_m + 1e-9 * LAM


def test_distance_translation_invariance():
    g = build_planar_array(3, 3, 0.5 * LAM, 0.5 * LAM)
    r = pairwise_distances(g)
    assert_allclose(r, r.T, rtol=0, atol=0)
    assert_array_equal(np.diag(r), 0.0)
    assert r[0, 1] == pytest.approx(0.5 * LAM)
    assert r[0, 4] == pytest.approx(math.sqrt(2) * 0.5 * LAM)


def test_near_field_warns(caplog):
    g = build_planar_array(1, 1, LAM, LAM)
    with caplog.at_level(logging.WARNING):
        element_to_user(g, 1, UserPosition(0.0, 0.0, 2 * LAM), LAM)
    assert "far-field" in caplog.text
    assert not UserPosition(0.0, 0.0, 2 * LAM).is_far_field(LAM)


def test_exact_angles():
    g = build_planar_array(2, 1, 1.0, 1.0)
    user = UserPosition.from_degrees(90.0, 0.0, 3.0)
    theta, phi, d = element_to_user(g, 2, user, LAM, exact_angles=True)
    assert theta == pytest.approx(math.pi / 2)
    assert phi == pytest.approx(0.0)
    assert d == pytest.approx(2.0)
    user = UserPosition.from_degrees(90.0, 90.0, 1.0)
    theta, phi, d = element_to_user(g, 2, user, LAM, exact_angles=True)
    assert phi == pytest.approx(3 * math.pi / 4)
    assert d == pytest.approx(math.sqrt(2))
    shared = element_to_user(g, 2, user, LAM, exact_angles=False)
    assert shared[:2] == (user.theta, user.phi)
