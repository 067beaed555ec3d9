"""Event-ordered sensor fusion: timeline merge, filter driving, flow updates.

A fusion run is a pure function of its inputs: randomness lives entirely in
the simulation stage, so replaying the same timeline and config reproduces
the log bit for bit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import ekf, imageio, optflow

KIND_PRIORITY = {
    "imu": 0,
    "baro": 1,
    "mag": 2,
    "gps_pos": 3,
    "gps_vel": 4,
    "frame": 5,
}

UPDATE_KINDS = ("baro", "mag", "gps_pos", "gps_vel")


class TimelineError(ValueError):
    pass


def merge_streams(streams: dict) -> list[dict]:
    """Merge per-sensor event lists into one time-ordered timeline.

    Equal timestamps keep a fixed kind priority (IMU first, frames last);
    within one (t, kind) the source order is preserved.
    """
    merged = []
    for name, events in streams.items():
        last = -np.inf
        for i, evt in enumerate(events):
            if evt["t"] < last:
                raise TimelineError(
                    f"stream {name!r} not time-ordered at index {i}"
                )
            last = evt["t"]
        merged.extend(events)
    for evt in merged:
        if evt["kind"] not in KIND_PRIORITY:
            raise TimelineError(f"unknown event kind {evt['kind']!r}")
    merged.sort(key=lambda e: (e["t"], KIND_PRIORITY[e["kind"]]))
    return merged


@dataclass
class FusionConfig:
    use_flow: bool = True
    filter: ekf.FilterConfig = dc_field(default_factory=ekf.FilterConfig)
    flow_params: optflow.FlowParams = dc_field(
        default_factory=lambda: optflow.FlowParams(
            pyramid_levels=1,
            iterations_per_level=2,
            expansion_window=5,
            expansion_sigma=1.1,
            averaging_window=9,
        )
    )
    focal_px: float = 42.0
    flow_gain: float = 1.0  # scale-factor calibration applied to measured flow
    init_window_s: float = 1.0
    min_flow_quality: float = 1e-11
    min_flow_altitude: float = 0.1
    record_pos_cov: bool = False


@dataclass
class NavLog:
    t: np.ndarray  # (n,) one entry per IMU epoch
    outputs: np.ndarray  # (n, 12) OutputVector rows
    cov_diag: np.ndarray  # (n, 24)
    innovations: list  # InnovationRecord per attempted update
    flow_invocations: int
    init_time: float
    pos_cov: np.ndarray | None = None  # (n, 3, 3) when recorded

    def output_column(self, name: str) -> np.ndarray:
        return self.outputs[:, ekf.OUTPUT_FIELDS.index(name)]

    @property
    def pos_ned(self) -> np.ndarray:
        cols = [ekf.OUTPUT_FIELDS.index(k) for k in ("p_n", "p_e", "p_d")]
        return self.outputs[:, cols]

    def final_position_error(self, truth_pos_at) -> float:
        return float(np.linalg.norm(self.pos_ned[-1] - truth_pos_at(self.t[-1])))


class _InitAccumulator:
    """Collects the static window: averaged accel and the latest fixes."""

    def __init__(self):
        self.dvel_sum = np.zeros(3)
        self.dt_sum = 0.0
        self.gps_pos = None
        self.gps_vel = None
        self.mag = None

    def feed(self, evt: dict) -> None:
        kind = evt["kind"]
        if kind == "imu":
            self.dvel_sum += np.asarray(evt["dvel"], dtype=float)
            self.dt_sum += evt["dt"]
        elif kind in ("gps_pos", "gps_vel", "mag"):
            setattr(self, kind, evt)

    def build(self, cfg: ekf.FilterConfig):
        if self.dt_sum <= 0.0:
            raise ekf.InitializationError("no IMU data in the init window")
        if self.gps_pos is None:
            raise ekf.InitializationError("no GPS fix in the init window")
        if self.mag is None:
            raise ekf.InitializationError("no magnetometer sample in the init window")
        accel_avg = self.dvel_sum / self.dt_sum
        gps = ekf.Measurement(
            "gps_pos", self.gps_pos["value"],
            [cfg.gps_pos_std_h, cfg.gps_pos_std_h, cfg.gps_pos_std_v],
            self.gps_pos["t"],
        )
        mag = ekf.Measurement("mag", self.mag["value"], cfg.mag_std, self.mag["t"])
        vel = None
        if self.gps_vel is not None:
            vel = ekf.Measurement(
                "gps_vel", self.gps_vel["value"], cfg.gps_vel_std, self.gps_vel["t"]
            )
        return ekf.init_state(gps, mag, accel_avg, cfg, first_gps_vel=vel)


def _measurement_from_event(evt: dict, cfg: ekf.FilterConfig) -> ekf.Measurement:
    kind = evt["kind"]
    if kind == "gps_pos":
        std = [cfg.gps_pos_std_h, cfg.gps_pos_std_h, cfg.gps_pos_std_v]
    elif kind == "gps_vel":
        std = cfg.gps_vel_std
    elif kind == "baro":
        std = cfg.baro_std
    else:
        std = cfg.mag_std
    return ekf.Measurement(kind, evt["value"], std, evt["t"])


def _load_frame(evt: dict, frame_dir) -> optflow.ImageFrame:
    if "frame_obj" in evt:
        return evt["frame_obj"]
    if frame_dir is None:
        raise TimelineError("frame event carries a path but no frame_dir given")
    frame = imageio.read_frame(os.path.join(frame_dir, evt["path"]), evt["t"])
    frame.degraded = bool(evt.get("degraded", False))
    return frame


def run_fusion(timeline: list, cfg: FusionConfig, frame_dir=None) -> NavLog:
    """Drive the filter through a merged timeline; returns the epoch log.

    IMU events predict, measurement events update, frame pairs produce
    body-velocity updates through the dense-flow pipeline.  With use_flow
    false, frame events are ignored without touching the flow code at all.
    """
    fc = cfg.filter
    init = _InitAccumulator()
    idx = 0
    t0 = timeline[0]["t"] if timeline else 0.0
    while idx < len(timeline) and timeline[idx]["t"] - t0 <= cfg.init_window_s:
        init.feed(timeline[idx])
        idx += 1
    state, cov = init.build(fc)
    filt = ekf.Ekf(state, cov, fc)

    times = []
    outputs = []
    cov_diags = []
    pos_covs = [] if cfg.record_pos_cov else None
    innovations = []
    flow_invocations = 0

    prev_pyr = None
    prev_frame_t = None
    gyro_accum = np.zeros(3)
    margin = cfg.flow_params.averaging_window // 2 + cfg.flow_params.expansion_window // 2
    intr = None  # built lazily from the first frame's size

    for evt in timeline[idx:]:
        kind = evt["kind"]
        t = evt["t"]
        try:
            if kind == "imu":
                imu = ekf.ImuSample(t, evt["dang"], evt["dvel"], evt["dt"])
                filt.predict(imu)
                gyro_accum += np.asarray(evt["dang"], dtype=float) - filt.state.b_dang
                times.append(t)
                outputs.append(ekf.output_vector(filt.state, fc.nominal_dt).as_array())
                cov_diags.append(np.diag(filt.cov).copy())
                if pos_covs is not None:
                    pos_covs.append(filt.cov[ekf.P, ekf.P].copy())
            elif kind in UPDATE_KINDS:
                innovations.append(
                    filt.update(_measurement_from_event(evt, fc))
                )
            elif kind == "frame":
                if not cfg.use_flow:
                    continue
                frame = _load_frame(evt, frame_dir)
                if frame.degraded:
                    continue
                if intr is None or intr.width != frame.width or intr.height != frame.height:
                    intr = optflow.CameraIntrinsics(
                        focal_px=cfg.focal_px,
                        cx=(frame.width - 1) / 2.0,
                        cy=(frame.height - 1) / 2.0,
                        width=frame.width,
                        height=frame.height,
                    )
                pyr = optflow.frame_pyramid(frame, cfg.flow_params)
                if prev_pyr is not None:
                    dt_pair = t - prev_frame_t
                    flow = optflow.flow_from_pyramids(
                        prev_pyr, pyr, cfg.flow_params, dt_pair
                    )
                    flow_invocations += 1
                    if flow.quality >= cfg.min_flow_quality:
                        gyro_mean = gyro_accum / dt_pair
                        rate = optflow.mean_translation_rate(
                            flow, gyro_mean, intr, margin
                        )
                        rate = (rate[0] * cfg.flow_gain, rate[1] * cfg.flow_gain)
                        h_agl = -float(filt.state.p[2])
                        v_body = optflow.flow_to_body_velocity(
                            rate, (0.0, 0.0, 0.0), h_agl, intr,
                            min_altitude=cfg.min_flow_altitude,
                        )
                        if v_body is not None:
                            meas = ekf.Measurement(
                                "flow_vel", v_body, fc.flow_vel_std, t, h_agl=h_agl
                            )
                            innovations.append(filt.update(meas))
                prev_pyr = pyr
                prev_frame_t = t
                gyro_accum = np.zeros(3)
        except ekf.NumericalFault as exc:
            raise ekf.NumericalFault(f"at t={t:.3f}s ({kind}): {exc}") from exc

    return NavLog(
        t=np.asarray(times),
        outputs=np.asarray(outputs).reshape(len(times), 12),
        cov_diag=np.asarray(cov_diags).reshape(len(times), ekf.STATE_DIM),
        innovations=innovations,
        flow_invocations=flow_invocations,
        init_time=t0 + cfg.init_window_s,
        pos_cov=None if pos_covs is None else np.asarray(pos_covs),
    )


NAVLOG_COLUMNS = ["t"] + ekf.OUTPUT_FIELDS + [f"var_{n}" for n in ekf.STATE_NAMES]


def write_navlog(path, log: NavLog) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(NAVLOG_COLUMNS) + "\n")
        for i in range(len(log.t)):
            vals = [log.t[i], *log.outputs[i], *log.cov_diag[i]]
            fh.write(",".join(f"{v:.12g}" for v in vals) + "\n")


def read_navlog(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (t, outputs (n,12), cov_diag (n,24)); validates the header."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
    if header.split(",") != NAVLOG_COLUMNS:
        raise ValueError(f"{path}: unexpected navlog header")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:13], data[:, 13:]


def write_innovations(path, innovations) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("t,kind,i0,i1,i2,nis,accepted\n")
        for rec in innovations:
            comps = list(rec.innovation) + [""] * (3 - len(rec.innovation))
            cells = [f"{rec.t:.12g}", rec.kind]
            cells += [f"{c:.12g}" if c != "" else "" for c in comps]
            cells += [f"{rec.nis:.12g}", str(int(rec.accepted))]
            fh.write(",".join(cells) + "\n")
