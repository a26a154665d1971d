"""Command-line entry point: calibrate, run, simulate, fit, report, serve.

Every subcommand is a pure function of its input files and flags for fixed
seeds, so experiment scripts are reproducible.  Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("ikk")


def _setup_logging():
    level = os.environ.get("IKK_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(name)s %(levelname)s %(message)s")


class UsageError(Exception):
    pass


def _load_model(args):
    from . import arm

    if getattr(args, "model", None):
        path = Path(args.model)
        if not path.exists():
            raise UsageError(f"model file not found: {path}")
        return arm.ArmModel.load(path)
    return arm.default_arm()


def _load_config(args):
    cfg = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        cfg = json.loads(path.read_text(encoding="utf-8"))
    return cfg


def _gains_from_config(cfg):
    from . import simuser

    fields = {}
    for key in ("k_task", "k_null", "damping", "joint_speed_limit", "reaction_delay", "noise"):
        if key in cfg.get("gains", {}):
            fields[key] = float(cfg["gains"][key])
    return simuser.SimUserGains(**fields)


def cmd_calibrate(args) -> int:
    from . import capture, identify, interp

    model = _load_model(args)
    config = identify.IdentifyConfig(
        variance_threshold=args.variance_threshold,
        neighborhood_radius=args.neighborhood_radius,
        v_lin_max=args.v_lin_max,
        v_ang_max=args.v_ang_max,
    )
    if args.synthetic:
        if args.seed is None:
            raise UsageError("--synthetic requires --seed")
        session = capture.synthesize_calibration(model, seed=args.seed, n_points=args.points)
    else:
        if not args.session:
            raise UsageError("either --synthetic or --session MANIFEST is required")
        manifest = Path(args.session)
        if not manifest.exists():
            raise UsageError(f"session manifest not found: {manifest}")
        session = capture.load_session(manifest)
        model = session.model

    bases = identify.identify_session(session, config)
    identify.save_bases(bases, args.out, config)
    for b in bases:
        ratios = ", ".join(f"{r:.3f}" for r in b.explained_variance_ratio[:3])
        print(f"{b.label}: mode={b.mode} explained_variance=[{ratios}, ...]")
    print(f"wrote {len(bases)} node bases to {args.out}")
    if args.volume_out:
        volume = interp.build_volume(bases)
        interp.save_volume(volume, args.volume_out)
        print(f"wrote interpolation volume ({len(volume.tetrahedra)} tetrahedra) to {args.volume_out}")
    return 0


def cmd_run(args) -> int:
    from . import capture, control, interp

    volume_path = Path(args.volume)
    input_path = Path(args.input)
    if not volume_path.exists():
        raise UsageError(f"volume file not found: {volume_path}")
    if not input_path.exists():
        raise UsageError(f"input recording not found: {input_path}")
    volume = interp.load_volume_or_bases(volume_path)
    rec = capture.load_recording(input_path)
    cfg = control.ControlConfig(
        smoothing_time_constant=args.smoothing,
        max_slew_rate=args.slew,
    )
    samples = list(control.stream(volume, cfg, rec.frames))
    n_outside = sum(not s.inside_hull for s in samples)
    control.write_signal_csv(samples, args.out)
    if n_outside:
        print(
            f"warning: {n_outside}/{len(samples)} frames outside the calibrated hull "
            "(inverse-distance fallback used)",
            file=sys.stderr,
        )
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from . import experiments, interp

    cfg = _load_config(args)
    basis_path = Path(args.basis)
    if not basis_path.exists():
        raise UsageError(f"basis file not found: {basis_path}")
    model = _load_model(args)
    volume = interp.load_volume_or_bases(basis_path)
    gains = _gains_from_config(cfg)
    out_dir = Path(args.out)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))

    if args.experiment == "exp1":
        seeds = tuple(cfg.get("profile_seeds", experiments.CANONICAL_SEEDS))
        results, summary = experiments.run_experiment1(
            model, volume, gains=gains, profile_seeds=seeds,
            repetitions=args.repetitions, duration=args.duration, out_dir=out_dir,
        )
        print(json.dumps(summary, indent=2))
    elif args.experiment == "exp2":
        schedule = experiments.make_sphere_schedule(seed, volume)
        results = experiments.run_experiment2(
            model, volume, schedule, gains=gains, mode=args.mode, out_dir=out_dir,
        )
        print(experiments.report(results, "markdown"))
    else:
        raise UsageError(f"unknown experiment {args.experiment!r}")
    failed = sum(not r.success for r in results)
    if failed:
        print(f"warning: {failed} trial(s) diverged", file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    from . import experiments

    try:
        counts = [float(c) for c in args.counts.split(",")]
    except ValueError as exc:
        raise UsageError(f"--counts must be a comma-separated number list: {exc}")
    fit = experiments.fit_learning_curve(counts, restarts=args.restarts, seed=args.seed or 0)
    print(json.dumps({
        "theta": list(fit.theta),
        "x_min": fit.x_min,
        "plateau": fit.plateau,
        "residual": fit.residual,
        "restarts": fit.restarts,
    }, indent=2))
    return 0


def cmd_report(args) -> int:
    results_dir = Path(args.results)
    if not results_dir.exists():
        raise UsageError(f"results directory not found: {results_dir}")
    summary = results_dir / "summary.json"
    if summary.exists() and args.format == "json":
        print(summary.read_text(encoding="utf-8"))
        return 0
    md = results_dir / "summary.md"
    if md.exists() and args.format == "markdown":
        print(md.read_text(encoding="utf-8"))
        return 0
    raise UsageError(f"no {args.format} summary found under {results_dir}")


def cmd_serve(args) -> int:
    import asyncio

    from . import interp, service

    basis_path = Path(args.basis)
    if not basis_path.exists():
        raise UsageError(f"basis file not found: {basis_path}")
    model = _load_model(args)
    volume = interp.load_volume_or_bases(basis_path)
    host = service.SessionHost(model, volume, out_dir=args.out)
    print(f"serving on ws://{args.host}:{args.port}")
    asyncio.run(service.serve(host, host_addr=args.host, port=args.port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ikk",
        description="Null-space arm-motion control pipeline: calibration, "
        "interpolation, real-time signal, experiments, live sessions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="identify per-node signal bases from a calibration session")
    cal.add_argument("--synthetic", action="store_true", help="generate a synthetic session instead of loading one")
    cal.add_argument("--seed", type=int, help="seed for the synthetic session")
    cal.add_argument("--session", help="session manifest JSON (recorded data)")
    cal.add_argument("--points", type=int, default=10, help="synthetic calibration points (default 10)")
    cal.add_argument("--model", help="arm model JSON (default: built-in 7-DoF arm)")
    cal.add_argument("-o", "--out", required=True, help="output basis JSON path")
    cal.add_argument("--volume-out", help="also write the interpolation volume JSON here")
    cal.add_argument("--variance-threshold", type=float, default=0.80,
                     help="first-component explained-variance bound for OnePC mode (default 0.80)")
    cal.add_argument("--neighborhood-radius", type=float, default=0.05,
                     help="meters around each centroid: data admitted to PCA (default 0.05)")
    cal.add_argument("--v-lin-max", type=float, default=0.05,
                     help="steady-hand linear speed threshold, m/s (default 0.05)")
    cal.add_argument("--v-ang-max", type=float, default=0.10,
                     help="steady-hand angular speed threshold, rad/s (default 0.10)")
    cal.set_defaults(func=cmd_calibrate)

    run = sub.add_parser("run", help="stream a recording through the control signal engine")
    run.add_argument("--volume", required=True, help="volume or basis JSON")
    run.add_argument("--input", required=True, help="recording CSV to process")
    run.add_argument("--out", required=True, help="output signal CSV (t,raw,value,inside_hull)")
    run.add_argument("--smoothing", type=float, default=0.05, help="low-pass time constant, s (default 0.05)")
    run.add_argument("--slew", type=float, default=400.0, help="max slew rate, units/s (default 400)")
    run.set_defaults(func=cmd_run)

    sim = sub.add_parser("simulate", help="run a virtual experiment with the simulated user")
    sim.add_argument("experiment", choices=["exp1", "exp2"], help="which experiment to run")
    sim.add_argument("--basis", required=True, help="basis or volume JSON")
    sim.add_argument("--model", help="arm model JSON (default: built-in 7-DoF arm)")
    sim.add_argument("--seed", type=int, help="schedule/simulation seed")
    sim.add_argument("--repetitions", type=int, default=3, help="repetitions per trajectory (default 3)")
    sim.add_argument("--duration", type=float, default=25.0, help="trajectory duration, s (exp1 only, default 25)")
    sim.add_argument("--mode", choices=["single", "parallel"], default="parallel",
                     help="sphere task mode (exp2 only, default parallel)")
    sim.add_argument("--config", help="experiment config JSON (seeds, gains); CLI flags win")
    sim.add_argument("-o", "--out", required=True, help="results directory")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit the learning curve to per-trial counts")
    fit.add_argument("--counts", required=True, help="comma-separated per-trial performance counts")
    fit.add_argument("--restarts", type=int, default=200, help="random restarts (default 200)")
    fit.add_argument("--seed", type=int, default=0, help="restart seed (default 0)")
    fit.set_defaults(func=cmd_fit)

    rep = sub.add_parser("report", help="print a stored experiment summary")
    rep.add_argument("--results", required=True, help="results directory written by simulate")
    rep.add_argument("--format", choices=["markdown", "json"], default="markdown")
    rep.set_defaults(func=cmd_report)

    srv = sub.add_parser("serve", help="host live sessions over WebSocket")
    srv.add_argument("--basis", required=True, help="basis or volume JSON")
    srv.add_argument("--model", help="arm model JSON (default: built-in 7-DoF arm)")
    srv.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    srv.add_argument("--port", type=int, default=8765, help="port (default 8765)")
    srv.add_argument("--out", default="results/live", help="directory for recorded trials")
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
