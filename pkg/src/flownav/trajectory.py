"""Ground-truth trajectory generators: hover dither and waypoint missions.

Trajectories are kinematic scripts, not closed-loop dynamics.  Velocity is
defined analytically per segment; position is the cumulative trapezoid of
the sampled velocity, which makes the series exactly consistent with a
midpoint-rule strapdown integrator.  Attitude couples to the script through
a quad tilt model: horizontal acceleration is produced by leaning the
thrust axis, so pitch ~ -a_forward/g and roll ~ a_right/g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import geom

HOVER_DITHER_MIN_HZ = 0.08


class InvalidMissionError(ValueError):
    pass


@dataclass
class TrajectoryConfig:
    rate_hz: float = 100.0
    gravity: float = 9.80665
    # hover dither
    dither_std: float = 0.15  # m per horizontal axis
    dither_bandwidth_hz: float = 0.5
    dither_components: int = 8
    dither_ramp_s: float = 2.0
    dither_seed: int = 0
    yaw: float = 0.0
    # mission shaping
    ramp_time_s: float = 2.0  # speed-up / slow-down time per leg end
    turn_rate: float = math.radians(45.0)
    initial_hold_s: float = 2.5  # static time for filter alignment
    final_hold_s: float = 1.0

    def __post_init__(self):
        if self.rate_hz < 100.0:
            raise ValueError("sample rate must be at least 100 Hz")
        if self.dither_std < 0 or self.dither_bandwidth_hz <= 0:
            raise ValueError("bad dither config")
        if self.ramp_time_s <= 0 or self.turn_rate <= 0:
            raise ValueError("bad mission shaping config")


@dataclass
class TruthTrajectory:
    t: np.ndarray
    pos: np.ndarray  # (n, 3) NED m
    vel: np.ndarray  # (n, 3) NED m/s
    quat: np.ndarray  # (n, 4) body -> NED
    body_rate: np.ndarray  # (n, 3) rad/s
    specific_force: np.ndarray  # (n, 3) body m/s^2
    waypoints: np.ndarray | None = None  # mission reference polyline, NED
    cruise_windows: list = dc_field(default_factory=list)  # [(t0, t1)] steady legs

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def index_at(self, t: float) -> int:
        if not self.t[0] <= t <= self.t[-1] + 1e-9:
            raise ValueError(f"t={t} outside trajectory span")
        return min(int(round((t - self.t[0]) / self.dt)), len(self.t) - 1)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_rate(u: np.ndarray) -> np.ndarray:
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


def _finalize(
    t: np.ndarray,
    vel: np.ndarray,
    yaw: np.ndarray,
    start_pos: np.ndarray,
    cfg: TrajectoryConfig,
    waypoints=None,
    cruise_windows=None,
) -> TruthTrajectory:
    """Assemble a consistent trajectory from sampled velocity and yaw."""
    dt = t[1] - t[0]
    pos = start_pos + np.concatenate(
        [np.zeros((1, 3)), cumulative_trapezoid(vel, dx=dt, axis=0)]
    )
    accel = np.gradient(vel, dt, axis=0)
    # lean the thrust axis to realize horizontal acceleration
    cy, sy = np.cos(yaw), np.sin(yaw)
    a_fwd = cy * accel[:, 0] + sy * accel[:, 1]
    a_rgt = -sy * accel[:, 0] + cy * accel[:, 1]
    pitch = -np.arctan2(a_fwd, cfg.gravity)
    roll = np.arctan2(a_rgt, cfg.gravity)
    quat = geom.quat_from_euler(roll, pitch, yaw)

    body_rate = np.zeros_like(vel)
    if len(t) > 2:
        q_prev = quat[:-2]
        q_next = quat[2:]
        dq = geom.quat_mul(geom.quat_conjugate(q_prev), q_next)
        body_rate[1:-1] = geom.delta_angle_from_quat(dq) / (2.0 * dt)
        body_rate[0] = body_rate[1]
        body_rate[-1] = body_rate[-2]

    g_vec = np.array([0.0, 0.0, cfg.gravity])
    specific_force = geom.rotate_vec_inv(quat, accel - g_vec)
    return TruthTrajectory(
        t=t,
        pos=pos,
        vel=vel,
        quat=quat,
        body_rate=body_rate,
        specific_force=specific_force,
        waypoints=None if waypoints is None else np.asarray(waypoints, dtype=float),
        cruise_windows=list(cruise_windows or []),
    )


def hover_trajectory(
    duration: float, hold_position, cfg: TrajectoryConfig | None = None
) -> TruthTrajectory:
    """Station-keeping with band-limited position dither around hold_position.

    The dither is a sum of seeded sinusoids per axis (half amplitude
    vertically), ramped in smoothly after an initial static hold so the
    filter sees a quiet alignment window.
    """
    cfg = cfg or TrajectoryConfig()
    if duration <= 0:
        raise ValueError("duration must be positive")
    hold_position = np.asarray(hold_position, dtype=float)
    dt = 1.0 / cfg.rate_hz
    n = max(int(round(duration / dt)) + 1, 2)
    t = np.arange(n) * dt

    vel = np.zeros((n, 3))
    if cfg.dither_std > 0:
        rng = np.random.default_rng([cfg.dither_seed, 0xD1])
        k = cfg.dither_components
        lo = min(HOVER_DITHER_MIN_HZ, cfg.dither_bandwidth_hz)
        amp_scale = np.array([1.0, 1.0, 0.5]) * cfg.dither_std
        ramp_start = min(cfg.initial_hold_s, max(duration - cfg.dither_ramp_s, 0.0))
        u = (t - ramp_start) / cfg.dither_ramp_s
        env = _smoothstep(u)
        env_rate = _smoothstep_rate(u) / cfg.dither_ramp_s
        for axis in range(3):
            freqs = rng.uniform(lo, cfg.dither_bandwidth_hz, k)
            phases = rng.uniform(0.0, 2.0 * math.pi, k)
            amps = np.full(k, amp_scale[axis] * math.sqrt(2.0 / k))
            w = 2.0 * math.pi * freqs
            arg = np.outer(t, w) + phases
            p_d = np.sin(arg) @ amps
            v_d = np.cos(arg) @ (amps * w)
            vel[:, axis] = env * v_d + env_rate * p_d
    yaw = np.full(n, cfg.yaw)
    return _finalize(t, vel, yaw, hold_position, cfg)


def _wrap_pi(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


class _Segment:
    """One scripted phase: analytic velocity/yaw over a local time axis."""

    def __init__(self, duration, vel_fn, yaw_fn, cruise_window=None):
        self.duration = duration
        self.vel_fn = vel_fn
        self.yaw_fn = yaw_fn
        self.cruise_window = cruise_window  # (t0, t1) local, steady portion


def _ramped_speed(tau: np.ndarray, v_peak: float, t_ramp: float, total: float):
    """Cosine-blended trapezoid speed profile, zero at both ends."""
    up = 0.5 * v_peak * (1.0 - np.cos(math.pi * np.clip(tau / t_ramp, 0, 1)))
    down = 0.5 * v_peak * (
        1.0 - np.cos(math.pi * np.clip((total - tau) / t_ramp, 0, 1))
    )
    return np.minimum(up, down)


def _leg_segment(start, end, cruise_speed, cfg) -> _Segment:
    delta = np.asarray(end, dtype=float) - np.asarray(start, dtype=float)
    length = float(np.linalg.norm(delta))
    u = delta / length
    t_r = cfg.ramp_time_s
    ramp_dist = cruise_speed * t_r  # both ends combined
    if length >= ramp_dist:
        v_pk = cruise_speed
        total = length / cruise_speed + t_r
    else:
        # too short to reach cruise: back-to-back ramps
        v_pk = length / t_r
        total = 2.0 * t_r

    def vel_fn(tau, u=u, v_pk=v_pk, t_r=t_r, total=total):
        return np.outer(_ramped_speed(tau, v_pk, t_r, total), u)

    cruise = (t_r, total - t_r) if total > 2.0 * t_r else None
    return _Segment(total, vel_fn, None, cruise_window=cruise)


def _hold_segment(duration) -> _Segment:
    return _Segment(duration, lambda tau: np.zeros((len(tau), 3)), None)


def _turn_segment(yaw0, yaw1, cfg) -> _Segment:
    dpsi = _wrap_pi(yaw1 - yaw0)
    total = max(abs(dpsi) / cfg.turn_rate, 1.0 / cfg.rate_hz)

    def yaw_fn(tau, yaw0=yaw0, dpsi=dpsi, total=total):
        return yaw0 + dpsi * _smoothstep(tau / total)

    return _Segment(total, lambda tau: np.zeros((len(tau), 3)), yaw_fn)


def waypoint_trajectory(
    waypoints, cruise_speed: float, cfg: TrajectoryConfig | None = None
) -> TruthTrajectory:
    """Multi-leg mission through NED waypoints with trapezoidal speed legs.

    The vehicle stops at every waypoint, slews yaw to face the next leg
    (vertical legs keep the previous heading), then flies the leg with a
    cosine-blended speed trapezoid.  Starts and ends with static holds.
    """
    cfg = cfg or TrajectoryConfig()
    wps = np.asarray(waypoints, dtype=float)
    if wps.ndim != 2 or wps.shape[1] != 3 or len(wps) < 2:
        raise InvalidMissionError("need at least two NED waypoints")
    if cruise_speed <= 0:
        raise InvalidMissionError("cruise speed must be positive")
    deltas = np.diff(wps, axis=0)
    if np.any(np.linalg.norm(deltas, axis=1) < 1e-9):
        raise InvalidMissionError("duplicate consecutive waypoints")

    segments: list[_Segment] = [_hold_segment(cfg.initial_hold_s)]
    yaw_current = cfg.yaw
    for i, d in enumerate(deltas):
        horiz = math.hypot(d[0], d[1])
        if horiz > 1e-6:
            leg_yaw = math.atan2(d[1], d[0])
            if abs(_wrap_pi(leg_yaw - yaw_current)) > 1e-9:
                segments.append(_turn_segment(yaw_current, leg_yaw, cfg))
                yaw_current = leg_yaw
        segments.append(_leg_segment(wps[i], wps[i + 1], cruise_speed, cfg))
    segments.append(_hold_segment(cfg.final_hold_s))

    dt = 1.0 / cfg.rate_hz
    total = sum(s.duration for s in segments)
    n = int(round(total / dt)) + 1
    t = np.arange(n) * dt
    vel = np.zeros((n, 3))
    yaw = np.empty(n)
    cruise_windows = []
    t0 = 0.0
    yaw_val = cfg.yaw
    for seg in segments:
        t1 = t0 + seg.duration
        mask = (t >= t0 - 1e-12) & (t < t1 - 1e-12)
        tau = t[mask] - t0
        vel[mask] = seg.vel_fn(tau)
        if seg.yaw_fn is not None:
            yaw[mask] = seg.yaw_fn(tau)
            yaw_val = float(seg.yaw_fn(np.array([seg.duration]))[0])
        else:
            yaw[mask] = yaw_val
        if seg.cruise_window is not None:
            cruise_windows.append((t0 + seg.cruise_window[0], t0 + seg.cruise_window[1]))
        t0 = t1
    yaw[t >= t0 - 1e-12] = yaw_val
    vel[-1] = 0.0

    return _finalize(
        t, vel, yaw, wps[0], cfg, waypoints=wps, cruise_windows=cruise_windows
    )


def mission_waypoints(
    altitude: float = 10.0, center_north: float = 35.0, far_north: float = 70.0
) -> np.ndarray:
    """Out-and-back survey line: climb, two forward waypoints, return, land.

    The return leg forces a 180 degree yaw reversal at the far point.
    """
    return np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, 0.0, -altitude],
            [center_north, 0.0, -altitude],
            [far_north, 0.0, -altitude],
            [0.0, 0.0, -altitude],
            [0.0, 0.0, 0.0],
        ]
    )


def kinematic_consistency(traj: TruthTrajectory) -> tuple[float, float]:
    """(max velocity mismatch m/s, max rate mismatch rad/s), central diffs."""
    dt = traj.dt
    v_fd = (traj.pos[2:] - traj.pos[:-2]) / (2.0 * dt)
    v_err = float(np.max(np.abs(v_fd - traj.vel[1:-1])))
    dq = geom.quat_mul(geom.quat_conjugate(traj.quat[:-2]), traj.quat[2:])
    w_fd = geom.delta_angle_from_quat(dq) / (2.0 * dt)
    w_err = float(np.max(np.abs(w_fd - traj.body_rate[1:-1])))
    return v_err, w_err
