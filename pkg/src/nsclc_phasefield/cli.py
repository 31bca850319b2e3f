"""Command-line interface: ``nsclc-phasefield {run,sweep-dose,compare-schedules,calibrate}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import scenario as sc
from .calibration import CalibrationProblem, FreeParameter, MeasurementSeries, fit


def _base_config(args) -> sc.ScenarioConfig:
    if args.config and args.preset:
        raise sc.ConfigError("use either --config or --preset, not both")
    if args.config:
        cfg = sc.load_config(args.config)
    else:
        cfg = sc.preset(args.preset or "patient1")
    if args.dose_scale is not None:
        if not args.dose_scale >= 0:
            raise sc.ConfigError("--dose-scale must be non-negative")
        cfg = replace(cfg, dose_scale=args.dose_scale)
    return cfg


def _print_summary(summary: dict) -> None:
    for key, value in summary.items():
        print(f"{key}: {value}")


def cmd_run(args) -> int:
    cfg = _base_config(args)
    out = args.out or cfg.output
    outcome = sc.run_scenario(cfg, output=out)
    _print_summary(outcome.summary)
    if outcome.status != sc.EXIT_OK:
        print(f"error: {outcome.message}", file=sys.stderr)
        if outcome.dump_path:
            print(f"last good state written to {outcome.dump_path}", file=sys.stderr)
    return outcome.status


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise sc.ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _report_rows(rows: list[dict], key: str) -> int:
    for row in rows:
        cure, relapse = row.get("cure_time"), row.get("relapse_time")
        print(f"{key}={row[key]}: status={row['status']} "
              f"peak_volume_mm3={row.get('peak_volume_mm3')} cure_time={cure} "
              f"relapse_time={relapse}")
    return sc.EXIT_NUMERICAL if any(r["status"] != sc.EXIT_OK for r in rows) else sc.EXIT_OK


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    rows = sc.sweep_dose(cfg, _parse_floats(args.scales), _out_dir(args), args.workers)
    return _report_rows(rows, "dose_scale")


def cmd_compare(args) -> int:
    cfg = _base_config(args)
    if args.variants:
        try:
            variants = yaml.safe_load(Path(args.variants).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise sc.ConfigError(f"cannot read variants: {exc}") from None
        if not isinstance(variants, dict) or not variants:
            raise sc.ConfigError("variants file must map names to schedule sections")
    elif cfg.schedule.get("kind") == "patient2":
        s = cfg.schedule
        variants = sc.patient2_variants(float(s["t_s"]), float(s["t_q6w"]), float(s["t_pd"]),
                                        cfg.t_end)
    else:
        raise sc.ConfigError("--variants is required unless the scenario uses a patient2 schedule")
    rows = sc.compare_schedules(cfg, variants, _out_dir(args), args.workers)
    return _report_rows(rows, "variant")


def _free_parameters(cfg: sc.ScenarioConfig, specs: list[str] | None) -> tuple[FreeParameter, ...]:
    if not specs:
        return tuple(FreeParameter(n, 0.5 * cfg.params.get(n), 2.0 * cfg.params.get(n))
                     for n in ("lambda_pro", "lambda_eff"))
    out = []
    for spec in specs:
        try:
            name, lo, hi = spec.split(":")
            out.append(FreeParameter(name, float(lo), float(hi)))
        except ValueError as exc:
            raise sc.ConfigError(f"bad --free {spec!r}, expected NAME:LOWER:UPPER ({exc})") from None
    return tuple(out)


def cmd_calibrate(args) -> int:
    cfg = _base_config(args)
    path = args.measurements or cfg.measurements
    if path is None:
        raise sc.ConfigError("calibration needs --measurements or a 'measurements' entry")
    try:
        meas = MeasurementSeries.from_csv(path)
    except (OSError, ValueError) as exc:
        raise sc.ConfigError(f"cannot read measurements: {exc}") from None
    if args.skip_first:
        meas = meas.without(0)
    free = _free_parameters(cfg, args.free)
    try:
        problem = CalibrationProblem(cfg.params, cfg.therapy(), cfg.grid(), cfg.r0, free, meas,
                                     cfg=cfg.step,
                                     lam_values=(1.0, 2.0) if args.categorical_lam else None)
        result = fit(problem, args.budget, seed=args.seed)
    except KeyError as exc:
        raise sc.ConfigError(f"unknown parameter {exc}") from None
    except ValueError as exc:
        raise sc.ConfigError(str(exc)) from None
    print(json.dumps({"values": result.values, "misfit": result.misfit,
                      "runs": len(result.trace), "converged": result.converged}, indent=2))
    if args.out:
        names = sorted({k for vals, _ in result.trace for k in vals})
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", *names, "misfit"])
            for i, (vals, value) in enumerate(result.trace):
                w.writerow([i, *(repr(vals[n]) for n in names), repr(value)])
    return sc.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON scenario file")
    common.add_argument("--preset", metavar="NAME", help=f"one of {', '.join(sc.PRESETS)}")
    common.add_argument("--out", metavar="PATH", help="output file or directory")
    common.add_argument("--dose-scale", type=float, metavar="X", help="multiply every dose by X")
    common.add_argument("--seed", type=int, default=0, metavar="N",
                        help="seed for the calibration search (simulations are deterministic)")

    parser = argparse.ArgumentParser(prog="nsclc-phasefield",
                                     description="Radial phase-field tumor model under immunotherapy.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="simulate one scenario and write its CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-dose", parents=[common], help="repeat a scenario for several dose scales")
    p.add_argument("--scales", default="1.0,0.5,0.3,0.25,0.2,0.18",
                   help="comma-separated dose scales")
    p.add_argument("--workers", type=int, default=1, help="parallel processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-schedules", parents=[common],
                       help="repeat a scenario under different administration plans")
    p.add_argument("--variants", metavar="PATH", help="YAML mapping of names to schedule sections")
    p.add_argument("--workers", type=int, default=1, help="parallel processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", parents=[common], help="fit parameters to measured volumes")
    p.add_argument("--measurements", metavar="PATH", help="CSV with t_days,volume_mm3")
    p.add_argument("--free", action="append", metavar="NAME:LO:HI",
                   help="free parameter with bounds (repeatable)")
    p.add_argument("--budget", type=int, default=300, help="maximum forward runs")
    p.add_argument("--categorical-lam", action="store_true",
                   help="also try growth exponents 1 and 2")
    p.add_argument("--skip-first", action="store_true", help="ignore the first measurement")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except sc.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return sc.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
