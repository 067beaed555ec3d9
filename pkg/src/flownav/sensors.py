"""Sensor synthesis from ground truth: IMU, GPS, baro, magnetometer.

IMU increments are generated by inverse mechanization of consecutive truth
samples, so integrating them with the strapdown equations reproduces the
truth exactly when noise and bias are zero.  GPS position error is a
first-order Gauss-Markov process plus white noise; all other sensors add
white noise only.

Every sensor draws from its own seeded sub-stream, so one sensor's sample
count never perturbs another's sequence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import geom
from .ekf import ImuSample
from .trajectory import TruthTrajectory

# sub-stream ids appended to the scenario seed
STREAM_IMU = 1
STREAM_GPS = 2
STREAM_BARO = 3
STREAM_MAG = 4


class DataFormatError(ValueError):
    """Malformed sensor file content (bad JSON line, bad field)."""


@dataclass
class SensorNoiseConfig:
    seed: int = 0
    # rates
    imu_rate_hz: float = 100.0
    gps_rate_hz: float = 5.0
    baro_rate_hz: float = 20.0
    mag_rate_hz: float = 10.0
    camera_rate_hz: float = 15.0
    # IMU
    gyro_noise_density: float = 0.004  # rad/s/sqrt(Hz)
    accel_noise_density: float = 0.04  # m/s^2/sqrt(Hz)
    gyro_bias: tuple = (0.003, -0.002, 0.001)  # rad/s, constant
    accel_bias: tuple = (0.04, -0.03, 0.05)  # m/s^2, constant
    # GPS: slow Gauss-Markov wander plus fast white jitter
    gps_gm_std_h: float = 1.2
    gps_gm_std_v: float = 2.5
    gps_gm_tau_s: float = 30.0
    gps_white_std_h: float = 0.25
    gps_white_std_v: float = 0.4
    gps_vel_std: float = 0.3
    # others
    baro_std: float = 0.8
    mag_std: float = 0.01
    earth_field: tuple = (0.22, 0.0, 0.41)  # gauss, NED

    def __post_init__(self):
        rates = [self.imu_rate_hz, self.gps_rate_hz, self.baro_rate_hz, self.mag_rate_hz]
        if any(r <= 0 for r in rates):
            raise ValueError("sensor rates must be positive")
        if self.camera_rate_hz < 0:
            raise ValueError("camera rate must be non-negative")
        stds = [
            self.gyro_noise_density, self.accel_noise_density,
            self.gps_gm_std_h, self.gps_gm_std_v,
            self.gps_white_std_h, self.gps_white_std_v,
            self.gps_vel_std, self.baro_std, self.mag_std,
        ]
        if any(s < 0 for s in stds):
            raise ValueError("noise stds must be non-negative")
        if self.gps_gm_tau_s <= 0:
            raise ValueError("Gauss-Markov correlation time must be positive")
        for name in ("gyro_bias", "accel_bias", "earth_field"):
            val = np.asarray(getattr(self, name), dtype=float)
            if val.shape != (3,):
                raise ValueError(f"{name} must have 3 components")


def _stream_rng(cfg: SensorNoiseConfig, stream_id: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream_id])


def _sample_times(truth: TruthTrajectory, rate_hz: float, start: float = 0.0):
    """Sensor sample times snapped to the truth grid.

    Returning the exact truth.t floats keeps timestamps bit-equal across
    streams, so the timeline merge orders same-epoch events correctly
    instead of being at the mercy of accumulated rounding.
    """
    dt = truth.dt
    last = len(truth.t) - 1
    out = []
    i = 0
    while True:
        g = int(round((start + i / rate_hz) / dt))
        if g > last:
            break
        out.append(truth.t[g])
        i += 1
    return np.asarray(out)


def sample_imu(
    truth: TruthTrajectory, t: float, cfg: SensorNoiseConfig, rng: np.random.Generator
) -> ImuSample:
    """Inertial increments over [t - dt, t] by inverse mechanization."""
    dt = 1.0 / cfg.imu_rate_hz
    i1 = truth.index_at(t)
    i0 = truth.index_at(t - dt)
    if i0 == i1:
        raise ValueError("imu interval shorter than the truth grid")
    dq = geom.quat_mul(geom.quat_conjugate(truth.quat[i0]), truth.quat[i1])
    dang = geom.delta_angle_from_quat(dq)
    g_dt = np.array([0.0, 0.0, geom.GRAVITY * dt])
    dvel = geom.rotate_vec_inv(
        truth.quat[i1], truth.vel[i1] - truth.vel[i0] - g_dt
    )
    sq = math.sqrt(dt)
    dang = dang + np.asarray(cfg.gyro_bias) * dt + rng.normal(
        0.0, cfg.gyro_noise_density * sq, 3
    )
    dvel = dvel + np.asarray(cfg.accel_bias) * dt + rng.normal(
        0.0, cfg.accel_noise_density * sq, 3
    )
    return ImuSample(t=float(t), delta_angle=dang, delta_velocity=dvel, dt=dt)


def sample_baro(
    truth: TruthTrajectory, t: float, cfg: SensorNoiseConfig, rng: np.random.Generator
) -> dict:
    alt = -truth.pos[truth.index_at(t)][2]
    return {"t": float(t), "kind": "baro", "value": [alt + rng.normal(0.0, cfg.baro_std)]}


def sample_mag(
    truth: TruthTrajectory, t: float, cfg: SensorNoiseConfig, rng: np.random.Generator
) -> dict:
    i = truth.index_at(t)
    m = geom.rotate_vec_inv(truth.quat[i], np.asarray(cfg.earth_field, dtype=float))
    m = m + rng.normal(0.0, cfg.mag_std, 3)
    return {"t": float(t), "kind": "mag", "value": m.tolist()}


def sample_gps(
    truth: TruthTrajectory,
    t: float,
    cfg: SensorNoiseConfig,
    rng: np.random.Generator,
    gm_state: np.ndarray,
    dt_epoch: float,
) -> tuple[dict, dict]:
    """One GPS epoch: (position fix, velocity fix); gm_state mutated in place."""
    i = truth.index_at(t)
    gm_std = np.array([cfg.gps_gm_std_h, cfg.gps_gm_std_h, cfg.gps_gm_std_v])
    alpha = math.exp(-dt_epoch / cfg.gps_gm_tau_s)
    gm_state *= alpha
    gm_state += rng.normal(0.0, 1.0, 3) * gm_std * math.sqrt(1.0 - alpha * alpha)
    white = rng.normal(0.0, 1.0, 3) * np.array(
        [cfg.gps_white_std_h, cfg.gps_white_std_h, cfg.gps_white_std_v]
    )
    pos = truth.pos[i] + gm_state + white
    vel = truth.vel[i] + rng.normal(0.0, cfg.gps_vel_std, 3)
    return (
        {"t": float(t), "kind": "gps_pos", "value": pos.tolist()},
        {"t": float(t), "kind": "gps_vel", "value": vel.tolist()},
    )


def imu_events(truth: TruthTrajectory, cfg: SensorNoiseConfig) -> list[dict]:
    rng = _stream_rng(cfg, STREAM_IMU)
    dt = 1.0 / cfg.imu_rate_hz
    events = []
    for t in _sample_times(truth, cfg.imu_rate_hz, start=dt):
        s = sample_imu(truth, t, cfg, rng)
        events.append(
            {
                "t": s.t,
                "kind": "imu",
                "dang": s.delta_angle.tolist(),
                "dvel": s.delta_velocity.tolist(),
                "dt": s.dt,
            }
        )
    return events


def gps_events(truth: TruthTrajectory, cfg: SensorNoiseConfig) -> list[dict]:
    rng = _stream_rng(cfg, STREAM_GPS)
    gm_std = np.array([cfg.gps_gm_std_h, cfg.gps_gm_std_h, cfg.gps_gm_std_v])
    gm_state = rng.normal(0.0, 1.0, 3) * gm_std  # stationary start
    dt_epoch = 1.0 / cfg.gps_rate_hz
    events = []
    for t in _sample_times(truth, cfg.gps_rate_hz):
        pos_evt, vel_evt = sample_gps(truth, t, cfg, rng, gm_state, dt_epoch)
        events.append(pos_evt)
        events.append(vel_evt)
    return events


def baro_events(truth: TruthTrajectory, cfg: SensorNoiseConfig) -> list[dict]:
    rng = _stream_rng(cfg, STREAM_BARO)
    return [sample_baro(truth, t, cfg, rng) for t in _sample_times(truth, cfg.baro_rate_hz)]


def mag_events(truth: TruthTrajectory, cfg: SensorNoiseConfig) -> list[dict]:
    rng = _stream_rng(cfg, STREAM_MAG)
    return [sample_mag(truth, t, cfg, rng) for t in _sample_times(truth, cfg.mag_rate_hz)]


def write_jsonl(path, events) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for evt in events:
            fh.write(json.dumps(evt, separators=(",", ":")) + "\n")


def read_jsonl(path) -> list[dict]:
    events = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                evt = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: bad JSON at line {lineno}: {exc.msg}") from exc
            if not isinstance(evt, dict) or "t" not in evt or "kind" not in evt:
                raise DataFormatError(f"{path}: line {lineno} missing 't'/'kind'")
            events.append(evt)
    return events
