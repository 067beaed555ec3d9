import math

import numpy as np
import pytest

import _oracles as oracle
from flownav import geom


def unit_quats(rng, count):
    q = rng.normal(size=(count, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def test_quat_mul_identity_and_ii():
    q = geom.quat_normalize(np.array([0.3, -0.1, 0.8, 0.2]))
    np.testing.assert_allclose(geom.quat_mul(geom.QUAT_IDENTITY, q), q)
    np.testing.assert_allclose(
        geom.quat_mul([0, 1, 0, 0], [0, 1, 0, 0]), [-1, 0, 0, 0], atol=1e-15
    )


def test_quat_mul_matches_matrix_form_oracle():
    rng = np.random.default_rng(11)
    for a, b in zip(unit_quats(rng, 50), unit_quats(rng, 50)):
        np.testing.assert_allclose(
            geom.quat_mul(a, b), oracle.quat_mul_matrix_form(a, b), atol=1e-14
        )


def test_quat_mul_preserves_norm_product():
    rng = np.random.default_rng(3)
    a = rng.normal(size=4) * 2.0
    b = rng.normal(size=4) * 0.5
    prod = geom.quat_mul(a, b)
    assert np.linalg.norm(prod) == pytest.approx(
        np.linalg.norm(a) * np.linalg.norm(b), abs=1e-12
    )


def test_quat_mul_associative():
    rng = np.random.default_rng(4)
    for _ in range(30):
        a, b, c = unit_quats(rng, 3)
        left = geom.quat_mul(geom.quat_mul(a, b), c)
        right = geom.quat_mul(a, geom.quat_mul(b, c))
        np.testing.assert_allclose(left, right, atol=1e-12)


def test_quat_from_delta_angle_trivials():
    np.testing.assert_allclose(geom.quat_from_delta_angle([0, 0, 0]), [1, 0, 0, 0])
    np.testing.assert_allclose(
        geom.quat_from_delta_angle([math.pi, 0, 0]), [0, 1, 0, 0], atol=1e-12
    )


def test_quat_from_delta_angle_matches_rodrigues_oracle():
    rotvec = np.array([0.1, 0.2, -0.05])
    q = geom.quat_from_delta_angle(rotvec)
    np.testing.assert_allclose(
        geom.quat_to_rot(q), oracle.rodrigues_matrix(rotvec), atol=1e-12
    )


def test_quat_from_delta_angle_small_angle_branch():
    tiny = np.array([3e-9, -2e-9, 1e-9])
    q = geom.quat_from_delta_angle(tiny)
    assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(q[1:], tiny / 2.0, rtol=1e-9)
    inv = geom.quat_mul(q, geom.quat_from_delta_angle(-tiny))
    np.testing.assert_allclose(inv, [1, 0, 0, 0], atol=1e-15)


def test_delta_angle_inverse_property():
    rng = np.random.default_rng(9)
    for _ in range(20):
        a = rng.normal(scale=0.8, size=3)
        prod = geom.quat_mul(
            geom.quat_from_delta_angle(a), geom.quat_from_delta_angle(-a)
        )
        np.testing.assert_allclose(prod, [1, 0, 0, 0], atol=1e-12)


def test_delta_angle_from_quat_round_trip():
    rng = np.random.default_rng(21)
    dirs = rng.normal(size=(40, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vecs = dirs * rng.uniform(0.0, 3.1, size=(40, 1))  # stay below pi
    back = geom.delta_angle_from_quat(geom.quat_from_delta_angle(vecs))
    np.testing.assert_allclose(back, vecs, atol=1e-12)
    # tiny angles hit the series branch
    tiny = rng.normal(scale=1e-10, size=(10, 3))
    back = geom.delta_angle_from_quat(geom.quat_from_delta_angle(tiny))
    np.testing.assert_allclose(back, tiny, atol=1e-20)


def test_delta_angle_from_quat_shortest_path():
    v = np.array([0.3, -0.1, 0.2])
    q = geom.quat_from_delta_angle(v)
    np.testing.assert_allclose(geom.delta_angle_from_quat(-q), v, atol=1e-12)
    assert np.allclose(geom.delta_angle_from_quat([1.0, 0, 0, 0]), 0.0)


def test_quat_from_euler_batched():
    rolls = np.array([0.1, -0.4, 0.0])
    pitches = np.array([0.0, 0.2, -0.3])
    yaws = np.array([1.0, -2.0, 0.5])
    batched = geom.quat_from_euler(rolls, pitches, yaws)
    assert batched.shape == (3, 4)
    for i in range(3):
        single = geom.quat_from_euler(rolls[i], pitches[i], yaws[i])
        np.testing.assert_allclose(batched[i], single, atol=1e-15)


def test_quat_to_rot_identity_and_orthonormality():
    np.testing.assert_allclose(geom.quat_to_rot([1, 0, 0, 0]), np.eye(3))
    rng = np.random.default_rng(5)
    for q in unit_quats(rng, 40):
        r = geom.quat_to_rot(q)
        np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)


def test_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        geom.quat_normalize([0.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        geom.quat_to_rot([0.0, 0.0, 0.0, 0.0])


def test_euler_trivials():
    np.testing.assert_allclose(geom.euler_from_quat([1, 0, 0, 0]), [0, 0, 0])
    s = math.sqrt(0.5)
    np.testing.assert_allclose(
        geom.euler_from_quat([s, 0, 0, s]), [0, 0, math.pi / 2], atol=1e-12
    )


def test_euler_round_trip_away_from_gimbal_lock():
    rng = np.random.default_rng(17)
    for _ in range(60):
        roll = rng.uniform(-math.pi, math.pi)
        pitch = rng.uniform(-(math.pi / 2 - 1e-3), math.pi / 2 - 1e-3)
        yaw = rng.uniform(-math.pi, math.pi)
        q = geom.quat_from_euler(roll, pitch, yaw)
        back = geom.euler_from_quat(q)
        np.testing.assert_allclose(back, [roll, pitch, yaw], atol=1e-9)


def test_rotate_vec_round_trip():
    rng = np.random.default_rng(23)
    q = unit_quats(rng, 1)[0]
    v = rng.normal(size=3)
    np.testing.assert_allclose(
        geom.rotate_vec_inv(q, geom.rotate_vec(q, v)), v, atol=1e-12
    )


def test_batched_quaternion_ops_match_scalar_loop():
    rng = np.random.default_rng(29)
    qs = unit_quats(rng, 8)
    rots = geom.quat_to_rot(qs)
    assert rots.shape == (8, 3, 3)
    for i in range(8):
        np.testing.assert_allclose(rots[i], geom.quat_to_rot(qs[i]))
    prods = geom.quat_mul(qs, qs[::-1])
    for i in range(8):
        np.testing.assert_allclose(prods[i], geom.quat_mul(qs[i], qs[7 - i]))


def test_lla_to_ned_trivials():
    origin = geom.GeoOrigin(0.4, -1.2, 50.0)
    np.testing.assert_allclose(
        geom.lla_to_ned(0.4, -1.2, 50.0, origin), [0, 0, 0], atol=1e-12
    )
    np.testing.assert_allclose(
        geom.lla_to_ned(0.4, -1.2, 60.0, origin), [0, 0, -10.0], atol=1e-12
    )


def test_lla_to_ned_meridian_arc_matches_wgs84_oracle():
    origin = geom.GeoOrigin(0.0, 0.0, 0.0)
    ned = geom.lla_to_ned(1e-5, 0.0, 0.0, origin)
    m_ref, _ = oracle.wgs84_radii_reference(0.0)
    assert ned[0] == pytest.approx(m_ref * 1e-5, rel=1e-12)
    assert ned[0] == pytest.approx(63.3544, abs=1e-3)
    assert ned[1] == 0.0


def test_lla_to_ned_east_uses_normal_radius_and_cos_lat():
    lat0 = 0.7
    origin = geom.GeoOrigin(lat0, 0.1, 0.0)
    ned = geom.lla_to_ned(lat0, 0.1 + 2e-5, 0.0, origin)
    _, n_ref = oracle.wgs84_radii_reference(lat0)
    assert ned[1] == pytest.approx(2e-5 * n_ref * math.cos(lat0), rel=1e-12)


def test_lla_to_ned_range_limit():
    origin = geom.GeoOrigin(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        geom.lla_to_ned(0.002, 0.0, 0.0, origin)  # ~12.7 km north


def test_lla_to_ned_is_affine_for_a_fixed_origin():
    # point differences depend only on coordinate differences, exactly
    lat0, lon0 = 0.2, 0.9
    origin = geom.GeoOrigin(lat0, lon0, 0.0)
    dl = np.array([5e-5, 1e-4, 12.0])
    for base in [(lat0, lon0, 0.0), (lat0 - 8e-5, lon0 - 3e-5, -4.0)]:
        p = (base[0] + dl[0], base[1] + dl[1], base[2] + dl[2])
        diff = geom.lla_to_ned(*p, origin) - geom.lla_to_ned(*base, origin)
        np.testing.assert_allclose(
            diff, geom.lla_to_ned(lat0 + dl[0], lon0 + dl[1], dl[2], origin), atol=1e-9
        )


def test_lla_to_ned_differences_insensitive_to_origin_shift():
    # near the equator the curvature radii are stationary in latitude, so a
    # modest origin move must not disturb differences of nearby points; at
    # mid latitudes the east term picks up O(sin(lat0) dlat0) and only a far
    # looser bound holds
    lat0, lon0 = 0.0, 0.9
    p1 = (lat0 + 5e-5, lon0 + 1e-4, 12.0)
    p2 = (lat0 - 8e-5, lon0 - 3e-5, -4.0)
    base = geom.GeoOrigin(lat0, lon0, 0.0)
    shifted = geom.GeoOrigin(lat0 + 1.5e-5, lon0 - 1e-5, 5.0)  # ~100 m move
    d_base = geom.lla_to_ned(*p1, base) - geom.lla_to_ned(*p2, base)
    d_shift = geom.lla_to_ned(*p1, shifted) - geom.lla_to_ned(*p2, shifted)
    np.testing.assert_allclose(d_base, d_shift, atol=1e-6)


def test_geo_origin_validation():
    with pytest.raises(ValueError):
        geom.GeoOrigin(2.0, 0.0)
    with pytest.raises(ValueError):
        geom.GeoOrigin(0.0, 4.0)
