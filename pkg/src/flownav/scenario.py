"""Scenario bundles on disk: truth, merged sensor stream, camera frames.

A bundle directory contains:

  config.json    resolved scenario configuration (seed included)
  meta.json      config hash, mission waypoints, cruise windows, camera
  truth.csv      t, position NED, velocity NED, attitude quaternion
  sensors.jsonl  merged event stream (IMU, GPS, baro, mag, frame refs)
  frames/        P5 PGM camera frames referenced by the stream
"""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np

from . import fusion, imageio, render, sensors, texture, trajectory
from .config import ScenarioConfig, config_hash, save_scenario_config

TRUTH_COLUMNS = ["t", "pn", "pe", "pd", "vn", "ve", "vd", "q0", "q1", "q2", "q3"]


def build_truth(cfg: ScenarioConfig) -> trajectory.TruthTrajectory:
    # the scenario seed is the master: it drives truth dither and sensors
    tcfg = dataclasses.replace(cfg.trajectory, dither_seed=cfg.seed)
    if cfg.kind == "hover":
        return trajectory.hover_trajectory(cfg.duration_s, cfg.hold_position, tcfg)
    wps = cfg.waypoints if cfg.waypoints is not None else trajectory.mission_waypoints()
    return trajectory.waypoint_trajectory(wps, cfg.cruise_speed, tcfg)


def frame_events(
    truth: trajectory.TruthTrajectory,
    cfg: ScenarioConfig,
    out_dir=None,
) -> list[dict]:
    """Render camera frames; write PGMs when out_dir is given.

    Frames are emitted only while the vehicle is high enough for the
    ground-plane model; below that the camera stays silent.
    """
    if cfg.sensors.camera_rate_hz <= 0:
        return []
    tex = texture.GroundTexture(seed=cfg.resolved_texture_seed())
    intr = render.default_intrinsics(
        width=cfg.camera.width, height=cfg.camera.height, focal_px=cfg.camera.focal_px
    )
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    events = []
    # grid-snapped times keep frame stamps bit-equal with the other streams
    times = sensors._sample_times(truth, cfg.sensors.camera_rate_hz)
    for k, t in enumerate(times):
        i = truth.index_at(t)
        if -truth.pos[i][2] <= render.MIN_RENDER_ALTITUDE:
            continue
        frame = render.render_ground_image(
            (truth.pos[i], truth.quat[i]), tex, intr, timestamp=t
        )
        rel = f"frames/frame_{k:06d}.pgm"
        evt = {"t": float(t), "kind": "frame", "path": rel, "degraded": frame.degraded}
        if out_dir is not None:
            imageio.write_pgm(os.path.join(out_dir, rel), frame.pixels)
        else:
            evt["frame_obj"] = frame
        events.append(evt)
    return events


def build_events(
    truth: trajectory.TruthTrajectory, cfg: ScenarioConfig, out_dir=None
) -> list[dict]:
    scfg = dataclasses.replace(cfg.sensors, seed=cfg.seed)
    streams = {
        "imu": sensors.imu_events(truth, scfg),
        "gps": sensors.gps_events(truth, scfg),
        "baro": sensors.baro_events(truth, scfg),
        "mag": sensors.mag_events(truth, scfg),
        "camera": frame_events(truth, cfg, out_dir=out_dir),
    }
    return fusion.merge_streams(streams)


def write_truth_csv(path, truth: trajectory.TruthTrajectory) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(TRUTH_COLUMNS) + "\n")
        for i in range(len(truth.t)):
            vals = [truth.t[i], *truth.pos[i], *truth.vel[i], *truth.quat[i]]
            fh.write(",".join(f"{v:.12g}" for v in vals) + "\n")


def read_truth_csv(path):
    """Returns (t, pos, vel, quat) arrays; validates the header."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
    if header.split(",") != TRUTH_COLUMNS:
        raise ValueError(f"{path}: unexpected truth header")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:4], data[:, 4:7], data[:, 7:11]


def simulate_scenario(cfg: ScenarioConfig, out_dir) -> dict:
    """Generate and write a full scenario bundle; returns the meta dict."""
    os.makedirs(out_dir, exist_ok=True)
    truth = build_truth(cfg)
    events = build_events(truth, cfg, out_dir=out_dir)
    write_truth_csv(os.path.join(out_dir, "truth.csv"), truth)
    sensors.write_jsonl(os.path.join(out_dir, "sensors.jsonl"), events)
    save_scenario_config(os.path.join(out_dir, "config.json"), cfg)
    meta = {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "duration_s": truth.duration,
        "camera": {
            "width": cfg.camera.width,
            "height": cfg.camera.height,
            "focal_px": cfg.camera.focal_px,
        },
        "waypoints": None
        if truth.waypoints is None
        else [list(map(float, w)) for w in truth.waypoints],
        "cruise_windows": [[float(a), float(b)] for a, b in truth.cruise_windows],
        "frame_count": sum(1 for e in events if e["kind"] == "frame"),
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def load_bundle(scenario_dir):
    """Returns (timeline events, meta dict) for a bundle directory."""
    sensors_path = os.path.join(scenario_dir, "sensors.jsonl")
    meta_path = os.path.join(scenario_dir, "meta.json")
    if not os.path.exists(sensors_path):
        raise FileNotFoundError(f"missing {sensors_path}")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"missing {meta_path}")
    events = sensors.read_jsonl(sensors_path)
    with open(meta_path, "r", encoding="ascii") as fh:
        meta = json.load(fh)
    return events, meta
