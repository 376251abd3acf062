"""Command line: simulate, estimate, sweep and oracle runs."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness as H
from .exceptions import FlowNavError

log = logging.getLogger("flownav")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="scenario and noise seed")
    p.add_argument("--frame-rate", type=float, help="frames per second")
    p.add_argument("--resolution", type=int, help="square image size in pixels (power of two)")
    p.add_argument("--camera-noise", type=float, help="camera noise STD in grey levels")
    p.add_argument("--state-noise", type=float,
                   help="attitude (rad) and angular-rate (rad/s) noise STD")
    p.add_argument("--threads", type=int, help="worker threads for the compiled kernels")
    p.add_argument("-v", "--verbose", action="store_true", help="log every frame pair")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flownav", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render frames and telemetry for a scenario")
    p.add_argument("config", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    _common(p)

    p = sub.add_parser("estimate", help="estimate velocity from a simulated directory")
    p.add_argument("directory", type=Path)
    p.add_argument("--model", choices=H.MODEL_CHOICES, default="auto")
    p.add_argument("-o", "--output", type=Path, default=Path("report"))
    _common(p)

    p = sub.add_parser("sweep", help="rerun a scenario over values of one parameter")
    p.add_argument("config", type=Path)
    p.add_argument("--axis", choices=H.SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--model", choices=H.MODEL_CHOICES)
    p.add_argument("-o", "--output", type=Path, required=True)
    _common(p)

    p = sub.add_parser("oracle", help="invert the exact motion field (no images)")
    p.add_argument("config", type=Path)
    p.add_argument("--model", choices=H.MODEL_CHOICES)
    p.add_argument("-o", "--output", type=Path)
    _common(p)
    return ap


def _overrides(args) -> dict:
    return {"seed": args.seed, "frame_rate": args.frame_rate, "resolution": args.resolution,
            "camera_sigma": args.camera_noise, "state_sigma": args.state_noise,
            "model": getattr(args, "model", None)}


def _print_summary(label: str, report: H.RunReport) -> None:
    s = report.summary
    print(f"{label}: pairs={s['n_pairs']} used={s['n_used']} failed={s['n_failed']} "
          f"rel_mean={s['rel_mean']:.4g} rel_max={s['rel_max']:.4g} "
          f"mean_abs={s['mean_abs_error_mps']:.4g} m/s")


def _progress(rec: H.FrameRecord) -> None:
    log.info("pair %d t=%.3f model=%s status=%s rel=%.4g n=%d", rec.index, rec.t_mid,
             rec.model, rec.status, rec.rel_error, rec.n_features)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads is not None:
        import numba
        numba.set_num_threads(args.threads)
    progress = _progress if args.verbose else None
    try:
        if args.command == "simulate":
            cfg = H.load_config(args.config, **_overrides(args))
            out = H.simulate(cfg, args.output)
            print(f"wrote {out}")
        elif args.command == "estimate":
            src = H.DirectorySource(args.directory)
            cfg = src.cfg.with_value("model", args.model)
            for key, value in _overrides(args).items():
                if value is not None and key != "model":
                    raise FlowNavError(f"--{key.replace('_', '-')} is fixed by the simulated "
                                       "data and cannot be changed in estimate")
            src.cfg = cfg
            report = H.run_pipeline(cfg, source=src, progress=progress)
            paths = H.export_report(report, args.output)
            _print_summary(cfg.scenario, report)
            print(f"wrote {', '.join(str(p) for p in paths.values())}")
        elif args.command == "sweep":
            cfg = H.load_config(args.config, **_overrides(args))
            cast = int if args.axis == "resolution" else float
            values = tuple(cast(v) for v in args.values.split(",") if v.strip())
            sw = H.SweepConfig(cfg, args.axis, values)
            reports = H.run_sweep(sw, progress=lambda v, r: _print_summary(
                f"{args.axis}={v}", r))
            print(f"wrote {H.export_sweep(sw, reports, args.output)}")
        else:
            cfg = H.load_config(args.config, **_overrides(args))
            report = H.run_oracle(cfg)
            if args.output is not None:
                H.export_report(report, args.output)
            _print_summary(f"{cfg.scenario} oracle", report)
    except (FlowNavError, OSError, ValueError) as exc:
        print(f"flownav: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
