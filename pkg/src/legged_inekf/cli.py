"""``estimator sim|replay|observability``.

Exit codes: 0 success, 1 malformed config or log, 2 divergence or timestamp
regression.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import observability as obs
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .filter import TimestampError
from .kinematics import biped_legs
from .logs import EstimateRecords, LogFormatError, LogOrderError, pose_metrics, quat_to_rot, read_bundle, write_bundle
from .simulator import NS, FilterRun, build_filter, compute_metrics, generate_truth, initial_state, run_filter, synthesize_sensors
from .state import RobotState

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RUNTIME = 2


class RunFailure(RuntimeError):
    pass


def _dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _estimates_name(i: int, variant: str) -> str:
    return "estimates.csv" if i == 0 else f"estimates_{variant}.csv"


def run_bundle(bundle, cfg: RunConfig, variant: str, x0: RobotState) -> tuple[FilterRun, EstimateRecords]:
    """Filter one variant over a parsed log bundle."""
    legs = biped_legs()
    filt = build_filter(cfg.scenario, cfg.filter, x0, variant == "camera_on", legs, t0=None)
    run = run_filter(filt, bundle.streams(), variant)
    res = run.result
    idx = res.record_index[:: cfg.estimate_stride]
    rows = np.arange(res.states.shape[0])[:: cfg.estimate_stride]
    t_ns = np.round(run.times[idx] * NS).astype(np.int64)
    est = EstimateRecords.from_run(
        t_ns, res.states[rows], res.pdiag[rows], res.chi2[idx], res.status[idx], run.kinds[idx], run.contact_id[idx]
    )
    return run, est


def _initial_state_for_replay(cfg: RunConfig, bundle) -> RobotState:
    if cfg.initial_state is not None:
        return cfg.initial_state
    sc = cfg.scenario
    if bundle.truth is not None and len(bundle.truth):
        q, v, p = bundle.truth[0, 0:4], bundle.truth[0, 4:7], bundle.truth[0, 7:10]
        return RobotState(quat_to_rot(q), v, p, np.zeros(3), np.zeros(3), sc.R_c, np.asarray(sc.camera_position))
    return RobotState(R_c=sc.R_c, p_c=np.asarray(sc.camera_position))


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    return apply_overrides(cfg, seed=args.seed, rates=args.rates, gate_rho=args.gate_rho, tuner_window=args.tuner_window)


def cmd_sim(args) -> int:
    cfg = _config(args)
    out = args.out
    os.makedirs(out, exist_ok=True)
    legs = biped_legs()
    truth = generate_truth(cfg.scenario, legs)
    streams = synthesize_sensors(truth, cfg.scenario, legs)
    times = {"imu": truth.imu_t_ns, "contact": np.repeat(truth.contact_t_ns, 2), "camera": truth.cam_t_ns}
    write_bundle(out, times, streams, truth)
    x0 = cfg.initial_state or initial_state(truth, cfg.filter)
    cfg = replace(cfg, initial_state=x0)
    _dump_json(os.path.join(out, "resolved_config.json"), cfg.to_dict())

    # run from the files just written so sim and replay share one path
    bundle = read_bundle(out)
    metrics, failed = {}, None
    for i, variant in enumerate(cfg.variants):
        run, est = run_bundle(bundle, cfg, variant, x0)
        est.write(os.path.join(out, _estimates_name(i, variant)))
        m = compute_metrics(run, truth, gait_period=cfg.scenario.gait_period).to_dict()
        m["degraded"] = False
        metrics[variant] = m
        if run.result.diverged and failed is None:
            failed = f"{variant}: filter diverged at t={run.times[run.result.diverged_at]:.9f}"
    _dump_json(os.path.join(out, "metrics.json"), metrics)
    if failed:
        raise RunFailure(failed)
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _config(args)
    bundle = read_bundle(args.logs)
    out = args.out
    os.makedirs(out, exist_ok=True)
    variants = cfg.variants
    if bundle.degraded:
        print("camera.csv missing or empty: running kinematics-only (degraded mode)", file=sys.stderr)
        variants = ("camera_off",)
    x0 = _initial_state_for_replay(cfg, bundle)
    metrics, failed = {}, None
    for i, variant in enumerate(variants):
        run, est = run_bundle(bundle, cfg, variant, x0)
        est.write(os.path.join(out, _estimates_name(i, variant)))
        m = {"degraded": bundle.degraded, "diverged": bool(run.result.diverged)}
        if bundle.truth is not None:
            m.update(pose_metrics(est, bundle.truth_t_ns, bundle.truth, cfg.scenario.gait_period))
        metrics[variant] = m
        if run.result.diverged and failed is None:
            failed = f"{variant}: filter diverged at t={run.times[run.result.diverged_at]:.9f}"
    _dump_json(os.path.join(out, "metrics.json"), metrics)
    if failed:
        raise RunFailure(failed)
    return EXIT_OK


def cmd_observability(args) -> int:
    cfg = _config(args)
    if args.case not in ("dynamic", "static", "zero-omega-moving"):
        raise ConfigError(f"unknown case {args.case!r}; expected dynamic, static or zero-omega-moving")
    if not 0 <= args.order <= obs.MAX_ORDER:
        raise ConfigError(f"--order must be in 0..{obs.MAX_ORDER}")
    x, u = obs.canonical_case(args.case)
    x = replace(x, R_c=cfg.scenario.R_c, p_c=np.asarray(cfg.scenario.camera_position, dtype=float))
    report = obs.classify_case(x, u, order=args.order, tol=args.tol).to_dict()
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--seed", type=int, help="noise seed")
    common.add_argument("--rates", help="sensor rates in Hz as imu,contact,camera")
    common.add_argument("--gate-rho", type=float, help="chi-square gate for kinematic updates (default 30.1)")
    common.add_argument("--tuner-window", type=int, help="camera noise window length (default 5)")

    p = argparse.ArgumentParser(prog="estimator", description="Legged-robot invariant EKF tools")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("sim", parents=[common], help="simulate a walk, write logs, estimates and metrics")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_sim)
    r = sub.add_parser("replay", parents=[common], help="filter a log directory")
    r.add_argument("logs", help="directory with imu.csv, contacts.csv and optionally camera.csv, truth.csv")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_replay)
    o = sub.add_parser("observability", parents=[common], help="rank of the camera observability matrix")
    o.add_argument("--case", required=True, help="dynamic | static | zero-omega-moving")
    o.add_argument("--order", type=int, default=obs.MAX_ORDER, help="highest derivative order")
    o.add_argument("--tol", type=float, default=obs.DEFAULT_TOL, help="relative singular value threshold")
    o.add_argument("--out", help="also write the JSON report here")
    o.set_defaults(func=cmd_observability)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LogOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, LogFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TimestampError, RunFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
