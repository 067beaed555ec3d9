"""Independent reference implementations used to derive expected test values.

Everything in here is deliberately written the dumb way (per-pixel least
squares, brute-force minima, textbook closed forms) and shares no code with
the package.  Module tests compare package output against these; the oracles
themselves are sanity-checked in test_00_oracles.py before anything else
runs.
"""

import math

import numpy as np

# WGS-84, written via the polar radius b rather than the eccentricity so the
# algebra is independent of the package's formulation.
_A = 6378137.0
_B = _A * (1.0 - 1.0 / 298.257223563)


def wgs84_radii_reference(lat_rad):
    """(meridian, normal) curvature radii from the (a, b) form."""
    w = math.hypot(_A * math.cos(lat_rad), _B * math.sin(lat_rad))
    r_meridian = (_A * _B) ** 2 / w**3
    r_normal = _A**2 / w
    return r_meridian, r_normal


def rodrigues_matrix(rotvec):
    """Rotation matrix from a rotation vector via the Rodrigues formula."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        return np.eye(3)
    k = rotvec / angle
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)


def quat_mul_matrix_form(a, b):
    """Hamilton product via the 4x4 left-multiplication matrix of a."""
    w, x, y, z = a
    left = np.array(
        [
            [w, -x, -y, -z],
            [x, w, -z, y],
            [y, z, w, -x],
            [z, -y, x, w],
        ]
    )
    return left @ np.asarray(b, dtype=float)


def polyexp_reference(img, n, sigma):
    """Per-pixel weighted least-squares quadratic fit, no separability tricks.

    Returns (A, b, c) where A[...,k] holds (axx, axy, ayy), b[...,k] holds
    (bx, by), matching the package's PolyField layout.  x is the column
    offset, y the row offset.  Borders use replicated image extension.
    """
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    half = (n - 1) // 2
    coords = np.arange(-half, half + 1, dtype=float)
    dy, dx = np.meshgrid(coords, coords, indexing="ij")
    dx = dx.ravel()
    dy = dy.ravel()
    weights = np.exp(-(dx**2 + dy**2) / (2.0 * sigma**2))
    sqw = np.sqrt(weights)
    basis = np.stack([np.ones_like(dx), dx, dy, dx**2, dy**2, dx * dy], axis=1)
    design = basis * sqw[:, None]

    padded = np.pad(img, half, mode="edge")
    a_out = np.zeros((h, w, 3))
    b_out = np.zeros((h, w, 2))
    c_out = np.zeros((h, w))
    for r in range(h):
        for col in range(w):
            patch = padded[r : r + n, col : col + n].ravel()
            coef, *_ = np.linalg.lstsq(design, patch * sqw, rcond=None)
            c_out[r, col] = coef[0]
            b_out[r, col] = coef[1:3]
            a_out[r, col] = (coef[3], coef[5] / 2.0, coef[4])
    return a_out, b_out, c_out


def kalman_1d(x0, p0, q, r_var, measurements):
    """Textbook scalar Kalman filter; returns (states, variances) arrays."""
    x, p = float(x0), float(p0)
    xs, ps = [], []
    for z in measurements:
        p = p + q
        k = p / (p + r_var)
        x = x + k * (z - x)
        p = (1.0 - k) * p
        xs.append(x)
        ps.append(p)
    return np.array(xs), np.array(ps)


def flow_rate_center(v_body_xy, gyro_xy, h_agl, focal_px):
    """Image-center flow rate (px/s) for a level nadir camera.

    Forward body motion drives the scene backward in the image, so the x
    rate is -f*vx/h; pitch rate adds -f*wy, roll rate adds +f*wx on y.
    """
    vx, vy = v_body_xy
    wx, wy = gyro_xy
    rate_x = -focal_px * (vx / h_agl + wy)
    rate_y = -focal_px * vy / h_agl + focal_px * wx
    return np.array([rate_x, rate_y])


def flow_displacement_translation(u, v, intr_f, intr_c, h_agl, v_body, dt):
    """Pixel displacement over dt for pure translation at level attitude.

    Includes the radial term from vertical speed (positive down shrinks
    altitude and expands the image).
    """
    cx, cy = intr_c
    vx, vy, vz = v_body
    du = (-intr_f * vx + (u - cx) * vz) * dt / h_agl
    dv = (-intr_f * vy + (v - cy) * vz) * dt / h_agl
    return du, dv


def integrate_speed_profile(speed_fn, duration, samples=200_001):
    """Distance covered by a scalar speed profile, dense Simpson quadrature."""
    from scipy.integrate import simpson

    t = np.linspace(0.0, duration, samples)
    return simpson(np.array([speed_fn(ti) for ti in t]), x=t)


def cosine_ramp_speed(t, v_cruise, t_ramp, duration):
    """Reference trapezoid with cosine-blended ramps; ramp distance v*t_ramp/2."""
    if t <= 0.0 or t >= duration:
        return 0.0
    if t < t_ramp:
        return v_cruise * 0.5 * (1.0 - math.cos(math.pi * t / t_ramp))
    if t > duration - t_ramp:
        return v_cruise * 0.5 * (1.0 - math.cos(math.pi * (duration - t) / t_ramp))
    return v_cruise


def gm_autocov(sigma, tau, lag_s):
    """Stationary first-order Gauss-Markov autocovariance."""
    return sigma**2 * math.exp(-abs(lag_s) / tau)


def point_segment_distance(p, a, b):
    """Distance from 2-D point p to segment ab."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def polyline_cross_track(p, vertices):
    """Min distance from 2-D point to a polyline, brute force over segments."""
    best = math.inf
    for a, b in zip(vertices[:-1], vertices[1:]):
        best = min(best, point_segment_distance(p, a, b))
    return best


def merge_reference(streams, priority):
    """Stable time-ordered merge; ties broken by the given kind priority."""
    events = []
    for si, stream in enumerate(streams):
        for idx, ev in enumerate(stream):
            events.append((ev["t"], priority[ev["kind"]], si, idx, ev))
    events.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    return [e[4] for e in events]


def toy_navlog_metrics():
    """Hand-checkable 10-sample truth/estimate pair with expected metrics.

    Estimate = truth + 1 m east from the sixth sample on, truth runs north
    along E = 0.  The offset appears after the start, so none of it is
    absorbed into the navigation origin: east RMSE is sqrt(5/10) and the
    cross-track stats see the full metre on half the samples.
    """
    t = np.arange(10.0)
    truth_n = 2.0 * t
    truth_e = np.zeros(10)
    est_n = truth_n.copy()
    est_e = truth_e + (t >= 5.0) * 1.0
    expected = {
        "rmse_north": 0.0,
        "rmse_east": np.sqrt(0.5),
        "origin_offset_east": 0.0,
        "max_cross_track": 1.0,
        "mean_cross_track": 0.5,
    }
    return t, (truth_n, truth_e), (est_n, est_e), expected
