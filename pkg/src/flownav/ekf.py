"""24-state extended Kalman filter for GPS/INS/baro/mag/flow fusion.

State vector layout (fixed ordering, 24 scalars):

  =====  ==========================  =========================
  slice  meaning                     units
  =====  ==========================  =========================
  0:4    attitude quaternion         body to NED, scalar first
  4:7    velocity (V_N, V_E, V_D)    m/s
  7:10   position (P_N, P_E, P_D)    m
  10:13  delta-angle bias            rad per IMU interval
  13:16  delta-velocity bias         m/s per IMU interval
  16:18  wind (N, E)                 m/s
  18:21  earth magnetic field NED    gauss
  21:24  body magnetic field         gauss
  =====  ==========================  =========================

Prediction is strapdown mechanization driven by delta-angle/delta-velocity
increments; all Jacobians are central finite differences (no analytic
linearization is maintained).  Covariance updates use the Joseph form and
are re-symmetrized every step.

Wind states are carried for completeness but, with no airspeed sensor on a
multirotor, they are unobservable; their process noise defaults to
near-zero so they simply hold their initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.stats import chi2

from . import geom

STATE_DIM = 24
Q = slice(0, 4)
V = slice(4, 7)
P = slice(7, 10)
BG = slice(10, 13)
BA = slice(13, 16)
W = slice(16, 18)
MN = slice(18, 21)
MB = slice(21, 24)

MEASUREMENT_DIMS = {
    "gps_pos": 3,
    "gps_vel": 3,
    "baro": 1,
    "mag": 3,
    "flow_vel": 2,
}

BIAS_DANG_LIMIT = 0.05  # rad per interval
BIAS_DVEL_LIMIT = 2.0  # m/s per interval

_FD_STEP = 1e-6


class NumericalFault(RuntimeError):
    """Covariance or innovation algebra went numerically bad."""


class InitializationError(RuntimeError):
    pass


@dataclass
class NavState:
    """Thin wrapper over the flat 24-vector; slices are live views."""

    x: np.ndarray = dc_field(default_factory=lambda: _default_state())

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.shape != (STATE_DIM,):
            raise ValueError(f"state must have {STATE_DIM} components")

    @property
    def q(self):
        return self.x[Q]

    @property
    def v(self):
        return self.x[V]

    @property
    def p(self):
        return self.x[P]

    @property
    def b_dang(self):
        return self.x[BG]

    @property
    def b_dvel(self):
        return self.x[BA]

    @property
    def wind(self):
        return self.x[W]

    @property
    def mag_earth(self):
        return self.x[MN]

    @property
    def mag_body(self):
        return self.x[MB]

    def copy(self) -> "NavState":
        return NavState(self.x.copy())


def _default_state() -> np.ndarray:
    x = np.zeros(STATE_DIM)
    x[0] = 1.0
    return x


@dataclass
class ImuSample:
    """Pre-integrated inertial increments over one interval ending at t."""

    t: float
    delta_angle: np.ndarray
    delta_velocity: np.ndarray
    dt: float

    def __post_init__(self):
        self.delta_angle = np.asarray(self.delta_angle, dtype=float)
        self.delta_velocity = np.asarray(self.delta_velocity, dtype=float)
        if not 0.0 < self.dt <= 0.1:
            raise ValueError(f"imu dt out of (0, 0.1]: {self.dt}")
        if not (
            np.all(np.isfinite(self.delta_angle))
            and np.all(np.isfinite(self.delta_velocity))
        ):
            raise ValueError("non-finite imu increments")


@dataclass
class Measurement:
    kind: str
    value: np.ndarray
    std: np.ndarray
    t: float
    h_agl: float | None = None  # context for flow_vel bookkeeping

    def __post_init__(self):
        if self.kind not in MEASUREMENT_DIMS:
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        dim = MEASUREMENT_DIMS[self.kind]
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float))
        self.std = np.broadcast_to(
            np.asarray(self.std, dtype=float), (dim,)
        ).copy()
        if self.value.shape != (dim,):
            raise ValueError(f"{self.kind} expects {dim} values")
        if np.any(self.std <= 0):
            raise ValueError("measurement std must be positive")
        if not np.all(np.isfinite(self.value)):
            raise ValueError("non-finite measurement")


@dataclass
class OutputVector:
    """Export layout: angles, then velocity and position as (N, D, E)."""

    roll: float
    pitch: float
    yaw: float
    v_n: float
    v_d: float
    v_e: float
    p_n: float
    p_d: float
    p_e: float
    g_x: float
    g_y: float
    g_z: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.roll, self.pitch, self.yaw,
                self.v_n, self.v_d, self.v_e,
                self.p_n, self.p_d, self.p_e,
                self.g_x, self.g_y, self.g_z,
            ]
        )


OUTPUT_FIELDS = [
    "roll", "pitch", "yaw",
    "v_n", "v_d", "v_e",
    "p_n", "p_d", "p_e",
    "g_x", "g_y", "g_z",
]


@dataclass
class InnovationRecord:
    t: float
    kind: str
    innovation: tuple
    nis: float
    accepted: bool


@dataclass
class FilterConfig:
    """Process/measurement noise and initialization spread.

    Noise densities are continuous-time (per root Hz / root s); they are
    scaled by the IMU interval inside predict.
    """

    gravity: float = 9.80665
    nominal_dt: float = 0.01
    # process noise densities
    gyro_noise: float = 0.004  # rad/s/sqrt(Hz)
    accel_noise: float = 0.04  # m/s^2/sqrt(Hz)
    gyro_bias_rw: float = 1e-4  # rad/s per sqrt(s)
    accel_bias_rw: float = 1e-3  # m/s^2 per sqrt(s)
    wind_rw: float = 1e-6  # m/s per sqrt(s); wind is unobservable here
    mag_earth_rw: float = 1e-5  # gauss per sqrt(s)
    mag_body_rw: float = 1e-5
    pos_noise: float = 0.0  # extra position random walk, usually 0
    # measurement noise stds
    gps_pos_std_h: float = 1.2
    gps_pos_std_v: float = 2.5
    gps_vel_std: float = 0.3
    baro_std: float = 0.8
    mag_std: float = 0.01
    flow_vel_std: float | tuple = 0.15  # scalar, or per-axis (body x, body y)
    # initial uncertainty
    init_pos_std_h: float = 1.2
    init_pos_std_v: float = 2.5
    init_vel_std: float = 0.3
    init_att_rp_std: float = 0.03  # rad
    init_att_yaw_std: float = 0.08
    init_gyro_bias_std: float = 0.01  # rad/s, scaled by nominal_dt
    init_accel_bias_std: float = 0.1  # m/s^2, scaled by nominal_dt
    init_wind_std: float = 0.1
    init_mag_earth_std: float = 0.02
    init_mag_body_std: float = 0.01
    gate_prob: float = 0.99

    def gravity_vec(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.gravity])


def gate_threshold(dim: int, prob: float = 0.99) -> float:
    return float(chi2.ppf(prob, dim))


def mechanize(states: np.ndarray, imu: ImuSample, gravity_vec: np.ndarray) -> np.ndarray:
    """Strapdown state transition, vectorized over leading dimensions."""
    states = np.asarray(states, dtype=float)
    out = states.copy()
    q = states[..., Q]
    dq = geom.quat_from_delta_angle(imu.delta_angle - states[..., BG])
    q_new = geom.quat_normalize(geom.quat_mul(q, dq))
    dv_ned = geom.rotate_vec(q_new, imu.delta_velocity - states[..., BA]) + gravity_vec * imu.dt
    out[..., Q] = q_new
    out[..., V] = states[..., V] + dv_ned
    out[..., P] = states[..., P] + states[..., V] * imu.dt + 0.5 * dv_ned * imu.dt
    return out


def transition_jacobian(
    state: NavState, imu: ImuSample, gravity_vec: np.ndarray, step: float = _FD_STEP
) -> np.ndarray:
    """Central-difference F; perturbed quaternions are re-normalized."""
    base = state.x
    batch = np.tile(base, (2 * STATE_DIM, 1))
    idx = np.arange(STATE_DIM)
    batch[idx, idx] += step
    batch[STATE_DIM + idx, idx] -= step
    batch[:, Q] /= np.linalg.norm(batch[:, Q], axis=1, keepdims=True)
    prop = mechanize(batch, imu, gravity_vec)
    return (prop[:STATE_DIM] - prop[STATE_DIM:]).T / (2.0 * step)


def process_noise(cfg: FilterConfig, dt: float) -> np.ndarray:
    qd = np.zeros(STATE_DIM)
    qd[Q] = (0.5 * cfg.gyro_noise * math.sqrt(dt)) ** 2
    qd[V] = (cfg.accel_noise * math.sqrt(dt)) ** 2
    qd[P] = (cfg.pos_noise * math.sqrt(dt)) ** 2 if cfg.pos_noise else 0.0
    qd[BG] = (cfg.gyro_bias_rw * math.sqrt(dt) * dt) ** 2
    qd[BA] = (cfg.accel_bias_rw * math.sqrt(dt) * dt) ** 2
    qd[W] = (cfg.wind_rw * math.sqrt(dt)) ** 2
    qd[MN] = (cfg.mag_earth_rw * math.sqrt(dt)) ** 2
    qd[MB] = (cfg.mag_body_rw * math.sqrt(dt)) ** 2
    return np.diag(qd)


def _check_covariance(cov: np.ndarray) -> np.ndarray:
    """Re-symmetrize and verify positive semi-definiteness.

    Cheap Cholesky probe first; on failure fall back to an eigenvalue check,
    faulting below -1e-6 and flooring tiny negatives otherwise.
    """
    if not np.all(np.isfinite(cov)):
        raise NumericalFault("non-finite covariance")
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov + 1e-9 * np.eye(STATE_DIM))
        return cov
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-6:
        raise NumericalFault(f"covariance eigenvalue {vals.min():.3e}")
    vals = np.maximum(vals, 1e-12)
    return (vecs * vals) @ vecs.T


def predict(
    state: NavState, cov: np.ndarray, imu: ImuSample, cfg: FilterConfig
) -> tuple[NavState, np.ndarray]:
    if not np.all(np.isfinite(state.x)):
        raise NumericalFault("non-finite state")
    g_vec = cfg.gravity_vec()
    f_mat = transition_jacobian(state, imu, g_vec)
    new_x = mechanize(state.x, imu, g_vec)
    if not np.all(np.isfinite(new_x)):
        raise NumericalFault("non-finite state after propagation")
    new_cov = f_mat @ cov @ f_mat.T + process_noise(cfg, imu.dt)
    return NavState(new_x), _check_covariance(new_cov)


def measurement_model(states: np.ndarray, kind: str) -> np.ndarray:
    """h(x), vectorized over leading dimensions."""
    states = np.asarray(states, dtype=float)
    if kind == "gps_pos":
        return states[..., P]
    if kind == "gps_vel":
        return states[..., V]
    if kind == "baro":
        return -states[..., 9:10]
    if kind == "mag":
        return geom.rotate_vec_inv(states[..., Q], states[..., MN]) + states[..., MB]
    if kind == "flow_vel":
        return geom.rotate_vec_inv(states[..., Q], states[..., V])[..., :2]
    raise ValueError(f"unknown measurement kind {kind!r}")


def measurement_jacobian(state: NavState, kind: str, step: float = _FD_STEP) -> np.ndarray:
    base = state.x
    batch = np.tile(base, (2 * STATE_DIM, 1))
    idx = np.arange(STATE_DIM)
    batch[idx, idx] += step
    batch[STATE_DIM + idx, idx] -= step
    batch[:, Q] /= np.linalg.norm(batch[:, Q], axis=1, keepdims=True)
    h = measurement_model(batch, kind)
    return (h[:STATE_DIM] - h[STATE_DIM:]).T / (2.0 * step)


def _clamp_biases(x: np.ndarray) -> None:
    np.clip(x[BG], -BIAS_DANG_LIMIT, BIAS_DANG_LIMIT, out=x[BG])
    np.clip(x[BA], -BIAS_DVEL_LIMIT, BIAS_DVEL_LIMIT, out=x[BA])


def update(
    state: NavState, cov: np.ndarray, meas: Measurement, cfg: FilterConfig
) -> tuple[NavState, np.ndarray, InnovationRecord]:
    """Gated Kalman update; a rejected measurement leaves state untouched."""
    h_mat = measurement_jacobian(state, meas.kind)
    predicted = measurement_model(state.x, meas.kind)
    innovation = meas.value - predicted
    r_mat = np.diag(meas.std**2)
    s_mat = h_mat @ cov @ h_mat.T + r_mat
    try:
        s_inv = np.linalg.inv(s_mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalFault(f"singular innovation covariance for {meas.kind}") from exc
    nis = float(innovation @ s_inv @ innovation)
    record = InnovationRecord(
        t=meas.t,
        kind=meas.kind,
        innovation=tuple(innovation),
        nis=nis,
        accepted=nis <= gate_threshold(len(innovation), cfg.gate_prob),
    )
    if not record.accepted:
        return state, cov, record

    k_gain = cov @ h_mat.T @ s_inv
    new_x = state.x + k_gain @ innovation
    new_x[Q] = geom.quat_normalize(new_x[Q])
    _clamp_biases(new_x)
    ikh = np.eye(STATE_DIM) - k_gain @ h_mat
    new_cov = ikh @ cov @ ikh.T + k_gain @ r_mat @ k_gain.T
    return NavState(new_x), _check_covariance(new_cov), record


def init_state(
    first_gps: Measurement,
    first_mag: Measurement,
    accel_avg: np.ndarray,
    cfg: FilterConfig,
    first_gps_vel: Measurement | None = None,
) -> tuple[NavState, np.ndarray]:
    """Coarse alignment from a static interval.

    Roll/pitch come from the averaged specific force (gravity direction),
    yaw from the tilt-compensated magnetometer, position/velocity from the
    first GPS fix.  The earth-field states are seeded by rotating the
    measured field into NED with the freshly initialized attitude.
    """
    accel_avg = np.asarray(accel_avg, dtype=float)
    g = cfg.gravity
    norm = float(np.linalg.norm(accel_avg))
    if not 0.8 * g <= norm <= 1.2 * g:
        raise InitializationError(
            f"accel magnitude {norm:.2f} outside [{0.8 * g:.2f}, {1.2 * g:.2f}]: "
            "vehicle not static or IMU invalid"
        )
    pitch = math.asin(np.clip(accel_avg[0] / norm, -1.0, 1.0))
    roll = math.atan2(-accel_avg[1], -accel_avg[2])

    m_body = first_mag.value
    m_level = geom.quat_to_rot(geom.quat_from_euler(roll, pitch, 0.0)) @ m_body
    yaw = math.atan2(-m_level[1], m_level[0])

    x = _default_state()
    x[Q] = geom.quat_from_euler(roll, pitch, yaw)
    x[P] = first_gps.value
    if first_gps_vel is not None:
        x[V] = first_gps_vel.value
    x[MN] = geom.quat_to_rot(x[Q]) @ m_body

    d = np.zeros(STATE_DIM)
    d[0] = (0.5 * cfg.init_att_rp_std) ** 2
    d[1] = d[2] = (0.5 * cfg.init_att_rp_std) ** 2
    d[3] = (0.5 * cfg.init_att_yaw_std) ** 2
    d[V] = cfg.init_vel_std**2
    d[P] = [cfg.init_pos_std_h**2, cfg.init_pos_std_h**2, cfg.init_pos_std_v**2]
    d[BG] = (cfg.init_gyro_bias_std * cfg.nominal_dt) ** 2
    d[BA] = (cfg.init_accel_bias_std * cfg.nominal_dt) ** 2
    d[W] = cfg.init_wind_std**2
    d[MN] = cfg.init_mag_earth_std**2
    d[MB] = cfg.init_mag_body_std**2
    return NavState(x), np.diag(d)


def output_vector(state: NavState, nominal_imu_dt: float) -> OutputVector:
    roll, pitch, yaw = geom.euler_from_quat(state.q)
    gyro_bias = state.b_dang / nominal_imu_dt
    return OutputVector(
        roll=float(roll),
        pitch=float(pitch),
        yaw=float(yaw),
        v_n=float(state.v[0]),
        v_d=float(state.v[2]),
        v_e=float(state.v[1]),
        p_n=float(state.p[0]),
        p_d=float(state.p[2]),
        p_e=float(state.p[1]),
        g_x=float(gyro_bias[0]),
        g_y=float(gyro_bias[1]),
        g_z=float(gyro_bias[2]),
    )


STATE_NAMES = [
    "q0", "q1", "q2", "q3",
    "vn", "ve", "vd",
    "pn", "pe", "pd",
    "bgx", "bgy", "bgz",
    "bax", "bay", "baz",
    "wn", "we",
    "mn_n", "mn_e", "mn_d",
    "mb_x", "mb_y", "mb_z",
]


def snapshot_header() -> str:
    return ",".join(["t"] + STATE_NAMES + [f"var_{n}" for n in STATE_NAMES])


def snapshot_row(t: float, state: NavState, cov: np.ndarray) -> str:
    vals = [t, *state.x, *np.diag(cov)]
    return ",".join(f"{v:.12g}" for v in vals)


def write_snapshots(path, rows) -> None:
    """rows: iterable of (t, NavState, cov)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(snapshot_header() + "\n")
        for t, state, cov in rows:
            fh.write(snapshot_row(t, state, cov) + "\n")


def read_snapshots(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    states = data[:, 1 : 1 + STATE_DIM]
    variances = data[:, 1 + STATE_DIM :]
    return t, states, variances


class Ekf:
    """Mutable convenience wrapper; one instance per fusion run."""

    def __init__(self, state: NavState, cov: np.ndarray, cfg: FilterConfig):
        self.state = state
        self.cov = cov
        self.cfg = cfg

    def predict(self, imu: ImuSample) -> None:
        self.state, self.cov = predict(self.state, self.cov, imu, self.cfg)

    def update(self, meas: Measurement) -> InnovationRecord:
        self.state, self.cov, record = update(self.state, self.cov, meas, self.cfg)
        return record
