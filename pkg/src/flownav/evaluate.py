"""Estimation quality metrics and comparison reports.

Consumes a truth CSV plus one or more navigation logs and produces the
numbers the experiments compare: hover scatter, cross-track error against
the waypoint polyline, per-axis RMSE, and attitude smoothness in cruise.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import ekf, fusion, geom, svgplot

DEFAULT_SETTLE_S = 5.0


class EvaluationError(ValueError):
    """Semantically invalid evaluation input (e.g. disjoint time ranges)."""


def interp_truth(truth_t, values, t):
    """Linear interpolation of truth columns onto navlog times."""
    t = np.asarray(t, dtype=float)
    if t[0] > truth_t[-1] or t[-1] < truth_t[0]:
        raise EvaluationError("navlog and truth time ranges do not overlap")
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.interp(t, truth_t, values)
    return np.stack([np.interp(t, truth_t, col) for col in values.T], axis=1)


def point_segment_distance(p, a, b) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    s = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + s * ab)))


def cross_track_series(pos_ne: np.ndarray, waypoints) -> np.ndarray:
    """Per-sample distance to the horizontal waypoint polyline."""
    verts = np.asarray(waypoints, dtype=float)[:, :2]
    out = np.empty(len(pos_ne))
    for i, p in enumerate(pos_ne):
        out[i] = min(
            point_segment_distance(p, a, b) for a, b in zip(verts[:-1], verts[1:])
        )
    return out


def smoothness_std(t, angle, windows) -> float | None:
    """Std of frame-to-frame angle steps inside the given time windows."""
    diffs = []
    angle = np.asarray(angle, dtype=float)
    for t0, t1 in windows:
        sel = (t >= t0) & (t <= t1)
        if np.count_nonzero(sel) >= 3:
            diffs.append(np.diff(angle[sel]))
    if not diffs:
        return None
    return float(np.std(np.concatenate(diffs)))


def evaluate_navlog(
    truth_t,
    truth_pos,
    nav_t,
    outputs,
    waypoints=None,
    cruise_windows=(),
    settle_s: float = DEFAULT_SETTLE_S,
) -> dict:
    """Metrics for one navlog against truth; arrays as from read_navlog."""
    cols = {name: outputs[:, i] for i, name in enumerate(ekf.OUTPUT_FIELDS)}
    est = np.stack([cols["p_n"], cols["p_e"], cols["p_d"]], axis=1)
    tru = interp_truth(truth_t, truth_pos, nav_t)
    err = est - tru

    post = nav_t >= settle_s
    if not np.any(post):
        raise EvaluationError("settle time leaves no samples to evaluate")

    e_n, e_e = err[post, 0], err[post, 1]
    est_n, est_e = est[post, 0], est[post, 1]
    metrics = {
        "n_samples": int(np.count_nonzero(post)),
        "t_start": float(nav_t[post][0]),
        "t_end": float(nav_t[-1]),
        "final_pos_error": float(np.linalg.norm(err[-1])),
        "rmse_north": float(np.sqrt(np.mean(e_n**2))),
        "rmse_east": float(np.sqrt(np.mean(e_e**2))),
        "rmse_down": float(np.sqrt(np.mean(err[post, 2] ** 2))),
        "scatter_std": float(
            np.sqrt(np.var(est_n) + np.var(est_e))
        ),
        "box_max_north": float(np.max(np.abs(est_n - est_n.mean()))),
        "box_max_east": float(np.max(np.abs(est_e - est_e.mean()))),
        "error_series": {
            "t": [round(float(v), 6) for v in nav_t[post]],
            "north": [round(float(v), 6) for v in e_n],
            "east": [round(float(v), 6) for v in e_e],
        },
    }
    if waypoints is not None:
        # A mission is flown relative to the filter's navigation origin, set
        # where the filter initialises.  Whatever position offset exists at
        # that moment is absorbed into the origin, so the planned polyline is
        # anchored at the initial estimate before measuring track deviation.
        origin = err[0, :2]
        ct = cross_track_series(est[post, :2] - origin, waypoints)
        metrics["origin_offset_north"] = float(origin[0])
        metrics["origin_offset_east"] = float(origin[1])
        metrics["max_cross_track"] = float(ct.max())
        metrics["mean_cross_track"] = float(ct.mean())
    if cruise_windows:
        metrics["roll_step_std"] = smoothness_std(
            nav_t, cols["roll"], cruise_windows
        )
        metrics["pitch_step_std"] = smoothness_std(
            nav_t, cols["pitch"], cruise_windows
        )
    for k, v in metrics.items():
        if isinstance(v, float) and not np.isfinite(v):
            raise EvaluationError(f"non-finite metric {k}")
    return metrics


def build_report(scenario_dir, navlog_paths, settle_s: float = DEFAULT_SETTLE_S) -> dict:
    """Compare navlogs from one scenario bundle; returns the report dict."""
    from . import scenario as sc

    truth_t, truth_pos, _, _ = sc.read_truth_csv(
        os.path.join(scenario_dir, "truth.csv")
    )
    with open(os.path.join(scenario_dir, "meta.json"), "r", encoding="ascii") as fh:
        meta = json.load(fh)
    report = {
        "scenario": f"{meta['kind']}-seed{meta['seed']}",
        "config_hash": meta["config_hash"],
        "seeds": [meta["seed"]],
        "settle_s": settle_s,
        "navlogs": {},
    }
    for path in navlog_paths:
        label = _navlog_label(path)
        nav_t, outputs, _ = fusion.read_navlog(path)
        report["navlogs"][label] = evaluate_navlog(
            truth_t,
            truth_pos,
            nav_t,
            outputs,
            waypoints=meta.get("waypoints"),
            cruise_windows=meta.get("cruise_windows") or (),
            settle_s=settle_s,
        )
    flow = report["navlogs"].get("flow")
    noflow = report["navlogs"].get("noflow")
    if flow and noflow:
        ratios = {"scatter_ratio": _ratio(flow, noflow, "scatter_std")}
        if "max_cross_track" in flow:
            ratios["cross_track_ratio"] = _ratio(flow, noflow, "max_cross_track")
        report["improvement"] = ratios
    return report


def _ratio(flow: dict, noflow: dict, key: str):
    denom = noflow[key]
    return float(flow[key] / denom) if denom > 0 else None


def _navlog_label(path) -> str:
    stem = os.path.splitext(os.path.basename(path))[0]
    return stem.removeprefix("navlog_") or stem


def write_report(path, report: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plots(out_dir, scenario_dir, navlog_paths) -> list[str]:
    """Figure set for a bundle: plan view, oblique path, attitude, velocity."""
    from . import scenario as sc

    truth_t, truth_pos, truth_vel, truth_quat = sc.read_truth_csv(
        os.path.join(scenario_dir, "truth.csv")
    )
    logs = []
    for path in navlog_paths:
        nav_t, outputs, _ = fusion.read_navlog(path)
        logs.append((_navlog_label(path), nav_t, outputs))

    def col(outputs, name):
        return outputs[:, ekf.OUTPUT_FIELDS.index(name)]

    written = []

    def fig(name, series, **kw):
        path = os.path.join(out_dir, name)
        svgplot.line_plot(path, series, **kw)
        written.append(path)

    plan = [svgplot.Series(truth_pos[:, 1], truth_pos[:, 0], "truth", "#444444")]
    for label, nav_t, outputs in logs:
        plan.append(svgplot.Series(col(outputs, "p_e"), col(outputs, "p_n"), label))
    fig("xy_plane.svg", plan, title="Plan view", xlabel="east m",
        ylabel="north m", equal_aspect=True)

    k = 0.35  # oblique depth factor for the third axis
    obl = [
        svgplot.Series(
            truth_pos[:, 1] + k * truth_pos[:, 0],
            -truth_pos[:, 2] + k * truth_pos[:, 0],
            "truth",
            "#444444",
        )
    ]
    for label, nav_t, outputs in logs:
        obl.append(
            svgplot.Series(
                col(outputs, "p_e") + k * col(outputs, "p_n"),
                -col(outputs, "p_d") + k * col(outputs, "p_n"),
                label,
            )
        )
    fig("path_oblique.svg", obl, title="Oblique path projection",
        xlabel="east + 0.35 north m", ylabel="height + 0.35 north m")

    truth_euler = geom.euler_from_quat(truth_quat)
    for idx, angle in enumerate(("roll", "pitch", "yaw")):
        series = [
            svgplot.Series(truth_t, np.degrees(truth_euler[:, idx]), "truth", "#444444")
        ]
        for label, nav_t, outputs in logs:
            series.append(
                svgplot.Series(nav_t, np.degrees(col(outputs, angle)), label)
            )
        fig(f"attitude_{angle}.svg", series, title=f"{angle} trace",
            xlabel="time s", ylabel=f"{angle} deg")

    for idx, (axis, key) in enumerate((("north", "v_n"), ("east", "v_e"))):
        series = [svgplot.Series(truth_t, truth_vel[:, idx], "truth", "#444444")]
        for label, nav_t, outputs in logs:
            series.append(svgplot.Series(nav_t, col(outputs, key), label))
        fig(f"velocity_{axis}.svg", series, title=f"{axis} velocity",
            xlabel="time s", ylabel="m/s")

    return written
