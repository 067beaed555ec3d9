"""Command-line front end: simulate, fuse, eval, flow.

Exit codes: 0 success, 2 configuration problem, 3 unreadable or malformed
data, 4 semantically invalid input (failed init, disjoint ranges, filter
fault). Every artifact embeds the config hash for provenance.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import config, ekf, evaluate, fusion, imageio, optflow, presets, scenario, sensors
from .trajectory import InvalidMissionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SEMANTIC = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="flownav",
        description="Simulated GPS/INS/optical-flow navigation experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a scenario bundle")
    s.add_argument("--config", help="scenario config JSON (default: hover)")
    s.add_argument("--preset", choices=sorted(presets.PRESETS),
                   help="start from a named experiment configuration")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--runs", type=int, default=1,
                   help="batch size; runs > 1 write run_NNNN subdirectories")

    f = sub.add_parser("fuse", help="run the filter over a scenario bundle")
    f.add_argument("scenario_dir")
    grp = f.add_mutually_exclusive_group()
    grp.add_argument("--use-flow", dest="use_flow", action="store_true",
                     default=True, help="enable optical-flow updates (default)")
    grp.add_argument("--no-flow", dest="use_flow", action="store_false",
                     help="GPS-INS only")
    f.add_argument("--out", help="output directory (default: scenario dir)")

    e = sub.add_parser("eval", help="metrics report and figures for navlogs")
    e.add_argument("scenario_dir")
    e.add_argument("navlogs", nargs="+", help="navlog CSV paths")
    e.add_argument("--out", help="output directory (default: scenario dir)")
    e.add_argument("--settle", type=float, default=evaluate.DEFAULT_SETTLE_S,
                   help="seconds to skip before computing metrics")

    w = sub.add_parser("flow", help="dense flow between two PGM frames")
    w.add_argument("frame_a")
    w.add_argument("frame_b")
    w.add_argument("--out", required=True, help="output directory")
    w.add_argument("--dt", type=float, default=1.0,
                   help="frame interval in seconds")
    return p


def cmd_simulate(args) -> int:
    if args.config is not None and args.preset is not None:
        raise config.ConfigError("--config and --preset are mutually exclusive")
    if args.preset is not None:
        cfg = presets.PRESETS[args.preset](args.seed or 0)
    elif args.config is not None:
        cfg = config.load_scenario_config(args.config)
    else:
        cfg = config.ScenarioConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.runs < 1:
        raise config.ConfigError("--runs must be >= 1")
    if args.runs == 1:
        meta = scenario.simulate_scenario(cfg, args.out)
        print(f"wrote {args.out}: {cfg.kind} seed {cfg.seed} "
              f"({meta['frame_count']} frames, hash {meta['config_hash']})")
    else:
        for k in range(args.runs):
            run_cfg = dataclasses.replace(cfg, seed=cfg.seed + k)
            run_dir = os.path.join(args.out, f"run_{k:04d}")
            meta = scenario.simulate_scenario(run_cfg, run_dir)
            print(f"wrote {run_dir}: seed {run_cfg.seed} "
                  f"(hash {meta['config_hash']})")
    return EXIT_OK


def cmd_fuse(args) -> int:
    bundle = args.scenario_dir
    out_dir = args.out or bundle
    os.makedirs(out_dir, exist_ok=True)
    cfg = config.load_scenario_config(os.path.join(bundle, "config.json"))
    events, _ = scenario.load_bundle(bundle)
    fcfg = fusion.FusionConfig(
        use_flow=args.use_flow,
        filter=cfg.filter,
        focal_px=cfg.camera.focal_px,
        flow_gain=cfg.camera.flow_gain,
    )
    log = fusion.run_fusion(events, fcfg, frame_dir=bundle)
    suffix = "flow" if args.use_flow else "noflow"
    nav_path = os.path.join(out_dir, f"navlog_{suffix}.csv")
    fusion.write_navlog(nav_path, log)
    fusion.write_innovations(
        os.path.join(out_dir, f"innovations_{suffix}.csv"), log.innovations
    )
    truth_t, truth_pos, _, _ = scenario.read_truth_csv(
        os.path.join(bundle, "truth.csv")
    )
    final_err = log.final_position_error(
        lambda t: evaluate.interp_truth(truth_t, truth_pos, [t])[0]
    )
    print(f"wrote {nav_path}: {len(log.t)} epochs, "
          f"{log.flow_invocations} flow updates, "
          f"final position error {final_err:.6g} m")
    return EXIT_OK


def cmd_eval(args) -> int:
    out_dir = args.out or args.scenario_dir
    os.makedirs(out_dir, exist_ok=True)
    report = evaluate.build_report(
        args.scenario_dir, args.navlogs, settle_s=args.settle
    )
    report_path = os.path.join(out_dir, "report.json")
    evaluate.write_report(report_path, report)
    figures = evaluate.write_plots(out_dir, args.scenario_dir, args.navlogs)
    for label, m in report["navlogs"].items():
        line = f"{label}: scatter {m['scatter_std']:.4g} m"
        if "max_cross_track" in m:
            line += f", max cross-track {m['max_cross_track']:.4g} m"
        print(line)
    if "improvement" in report:
        print("improvement: " + ", ".join(
            f"{k} {v:.4g}" if v is not None else f"{k} n/a"
            for k, v in report["improvement"].items()
        ))
    print(f"wrote {report_path} and {len(figures)} figures")
    return EXIT_OK


def cmd_flow(args) -> int:
    try:
        if args.dt <= 0:
            raise ValueError("--dt must be positive")
        f1 = imageio.read_frame(args.frame_a, 0.0)
        f2 = imageio.read_frame(args.frame_b, args.dt)
        flow = optflow.farneback_flow(f1, f2)
    except ValueError as exc:
        raise config.ConfigError(str(exc)) from exc
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "flow.csv")
    imageio.write_flow_csv(csv_path, flow)
    imageio.write_flow_svg(os.path.join(args.out, "flow.svg"), flow)
    med_x = float(np.median(flow.vx))
    med_y = float(np.median(flow.vy))
    print(f"median flow ({med_x:.4g}, {med_y:.4g}) px, quality {flow.quality:.4g}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "flow": cmd_flow,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (config.ConfigError, InvalidMissionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except evaluate.EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    except (ekf.InitializationError, ekf.NumericalFault) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    except (sensors.DataFormatError, fusion.TimelineError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
