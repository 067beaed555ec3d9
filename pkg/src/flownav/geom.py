"""Quaternion, rotation, and local tangent-frame math shared by all modules.

Conventions, fixed repo-wide:

* quaternions are scalar-first ``(q0, q1, q2, q3)`` and rotate body-frame
  vectors into NED: ``v_ned = quat_to_rot(q) @ v_body``;
* Euler angles follow the aerospace Z-Y-X sequence (yaw, then pitch, then
  roll), radians;
* the local frame is NED (north, east, down-positive) anchored at a
  :class:`GeoOrigin` via a flat-earth tangent plane.

Most functions accept stacked inputs: a quaternion argument may be shape
``(4,)`` or ``(..., 4)`` and the result broadcasts accordingly.  This keeps
the finite-difference Jacobians in the filter cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# WGS-84 ellipsoid constants.
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# Flat-earth approximation is only trusted this far from the origin.
MAX_TANGENT_RANGE_M = 10_000.0

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

GRAVITY = 9.80665  # m/s^2, NED down-positive


@dataclass(frozen=True)
class GeoOrigin:
    """Anchor of the local NED tangent frame (WGS-84 ellipsoidal altitude)."""

    lat_rad: float
    lon_rad: float
    alt_m: float = 0.0

    def __post_init__(self):
        if abs(self.lat_rad) > math.pi / 2:
            raise ValueError(f"latitude out of range: {self.lat_rad}")
        if abs(self.lon_rad) > math.pi:
            raise ValueError(f"longitude out of range: {self.lon_rad}")


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Return q scaled to unit norm. Raises on (near-)zero quaternions."""
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ValueError("cannot normalize zero quaternion")
    return q / norm


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b, broadcasting over leading dimensions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_from_delta_angle(dtheta: np.ndarray) -> np.ndarray:
    """Exponential map: rotation vector (rad) -> unit quaternion.

    Uses the exact axis-angle form, switching to a second-order series
    below 1e-8 rad where the sin(x)/x division loses accuracy.
    """
    dtheta = np.asarray(dtheta, dtype=float)
    angle = np.linalg.norm(dtheta, axis=-1)
    half = 0.5 * angle
    small = angle < 1e-8
    # sin(half)/angle, series: 1/2 - angle^2/48 for small angles
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(small, 0.5 - angle * angle / 48.0, np.sin(half) / np.where(angle == 0.0, 1.0, angle))
    w = np.where(small, 1.0 - half * half / 2.0, np.cos(half))
    q = np.empty(dtheta.shape[:-1] + (4,))
    q[..., 0] = w
    q[..., 1:] = dtheta * scale[..., None]
    return q


def delta_angle_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) for unit quaternion(s), shape (..., 3).

    Inverse of quat_from_delta_angle; the sign is fixed so the returned
    angle is the shortest one (|angle| <= pi).
    """
    q = quat_normalize(q)
    q = np.where(q[..., :1] < 0.0, -q, q)
    w = q[..., 0]
    vec = q[..., 1:]
    s = np.linalg.norm(vec, axis=-1)
    small = s < 1e-8
    # 2*atan2(s, w)/s, series 2/w - 2 s^2/(3 w^3) for small s
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(
            small,
            2.0 / w - 2.0 * s * s / (3.0 * w**3),
            2.0 * np.arctan2(s, w) / np.where(s == 0.0, 1.0, s),
        )
    return vec * scale[..., None]


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Body-to-NED rotation matrix for unit quaternion q, shape (..., 3, 3)."""
    q = np.asarray(q, dtype=float)
    if np.any(np.linalg.norm(q, axis=-1) < 1e-12):
        raise ValueError("zero quaternion has no rotation")
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    ww, xx, yy, zz = w * w, x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    n = ww + xx + yy + zz
    rows = np.stack(
        [
            ww + xx - yy - zz, 2.0 * (xy - wz), 2.0 * (xz + wy),
            2.0 * (xy + wz), ww - xx + yy - zz, 2.0 * (yz - wx),
            2.0 * (xz - wy), 2.0 * (yz + wx), ww - xx - yy + zz,
        ],
        axis=-1,
    )
    return (rows / n[..., None]).reshape(q.shape[:-1] + (3, 3))


def rotate_vec(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate body vector(s) into NED: R(q) @ v, broadcasting."""
    R = quat_to_rot(q)
    return np.einsum("...ij,...j->...i", R, np.asarray(v, dtype=float))


def rotate_vec_inv(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate NED vector(s) into body: R(q)^T @ v."""
    R = quat_to_rot(q)
    return np.einsum("...ji,...j->...i", R, np.asarray(v, dtype=float))


def quat_from_euler(roll, pitch, yaw) -> np.ndarray:
    """Quaternion for Z-Y-X Euler angles (yaw-pitch-roll), radians.

    Accepts scalars or broadcastable arrays; output shape is (..., 4).
    """
    roll, pitch, yaw = np.broadcast_arrays(
        np.asarray(roll, dtype=float),
        np.asarray(pitch, dtype=float),
        np.asarray(yaw, dtype=float),
    )
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.stack(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ],
        axis=-1,
    )


def euler_from_quat(q: np.ndarray) -> np.ndarray:
    """(roll, pitch, yaw) in radians for a unit quaternion.

    Pitch is clamped into [-pi/2, pi/2]; near gimbal lock the roll/yaw
    split is ill-conditioned, as usual for the Z-Y-X sequence.
    """
    q = quat_normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2.0 * (w * y - x * z), -1.0, 1.0))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return np.stack([roll, pitch, yaw], axis=-1)


def wgs84_radii(lat_rad: float) -> tuple[float, float]:
    """(meridian, normal) radii of curvature at the given latitude."""
    s2 = math.sin(lat_rad) ** 2
    den = 1.0 - WGS84_E2 * s2
    r_meridian = WGS84_A * (1.0 - WGS84_E2) / den**1.5
    r_normal = WGS84_A / math.sqrt(den)
    return r_meridian, r_normal


def lla_to_ned(lat_rad: float, lon_rad: float, alt_m: float, origin: GeoOrigin) -> np.ndarray:
    """Geodetic point -> NED meters on the flat-earth tangent plane at origin.

    Valid within 10 km of the origin; beyond that the curvature terms the
    tangent plane drops become significant and a range error is raised.
    """
    r_m, r_n = wgs84_radii(origin.lat_rad)
    north = (lat_rad - origin.lat_rad) * r_m
    east = (lon_rad - origin.lon_rad) * r_n * math.cos(origin.lat_rad)
    down = -(alt_m - origin.alt_m)
    if math.hypot(north, east) > MAX_TANGENT_RANGE_M:
        raise ValueError("point beyond 10 km flat-earth validity range")
    return np.array([north, east, down])
