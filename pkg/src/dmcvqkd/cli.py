"""Command-line driver: single runs, parameter sweeps, config validation, cutoff checks.

Sweep output is a CSV with frozen columns; every row carries enough provenance
(cutoff, tolerances, seed, package version, config fingerprint) to re-run that
single point.  Rows are ordered by axis value regardless of worker completion
order, and the output is deterministic for a fixed config and seed except for
the wall-clock runtime_s column.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .optimizer import KeyRateReport, convergence_check, key_rate
from .scenario import ConfigError, Scenario, SweepSpec, load_config

CSV_COLUMNS = (
    "axis",
    "value",
    "rate",
    "raw_rate",
    "lower_bound_D",
    "delta_ec",
    "p_pass",
    "n_cutoff",
    "fw_gap",
    "fw_iterations",
    "sdp_feas_tol",
    "sdp_gap_tol",
    "epsilon",
    "seed",
    "runtime_s",
    "version",
    "fingerprint",
    "status",
)

WORKERS_ENV = "DMCVQKD_WORKERS"


def _format_row(
    axis: str, value: float, scenario: Scenario, report: KeyRateReport | None, error: str
) -> str:
    num = scenario.numerics
    if report is None:
        fields = dict.fromkeys(CSV_COLUMNS, "")
        fields.update(
            axis=axis,
            value=f"{value:.12g}",
            n_cutoff=str(num.n_cutoff),
            sdp_feas_tol=f"{num.sdp_feas_tol:.3e}",
            sdp_gap_tol=f"{num.sdp_gap_tol:.3e}",
            epsilon=f"{num.epsilon:.3e}",
            seed=str(num.seed),
            version=__version__,
            fingerprint=scenario.fingerprint(),
            status=f"error: {error}",
        )
    else:
        fields = dict(
            axis=axis,
            value=f"{value:.12g}",
            rate=f"{report.rate:.12e}",
            raw_rate=f"{report.raw_rate:.12e}",
            lower_bound_D=f"{report.lower_bound_D:.12e}",
            delta_ec=f"{report.delta_ec:.12e}",
            p_pass=f"{report.p_pass:.12e}",
            n_cutoff=str(report.n_cutoff),
            fw_gap=f"{report.fw_gap:.6e}",
            fw_iterations=str(report.fw_iterations),
            sdp_feas_tol=f"{num.sdp_feas_tol:.3e}",
            sdp_gap_tol=f"{num.sdp_gap_tol:.3e}",
            epsilon=f"{num.epsilon:.3e}",
            seed=str(num.seed),
            runtime_s=f"{report.runtime_s:.3f}",
            version=__version__,
            fingerprint=report.scenario_fingerprint,
            status="ok",
        )
    return ",".join(fields[c] for c in CSV_COLUMNS)


def _run_point(job: tuple[str, float, Scenario]) -> str:
    axis, value, scenario = job
    try:
        report = key_rate(scenario)
        return _format_row(axis, value, scenario, report, "")
    except Exception as exc:  # failed points are flagged, the sweep continues
        return _format_row(axis, value, scenario, None, str(exc).replace(",", ";"))


def cmd_validate(args) -> int:
    try:
        scenario, sweep = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    print(f"config ok (fingerprint {scenario.fingerprint()})")
    if sweep is not None:
        print(f"sweep: axis={sweep.axis} points={len(sweep.values)}")
    return 0


def cmd_run(args) -> int:
    try:
        scenario, _ = load_config(args.config)
        report = key_rate(scenario)
    except (ConfigError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(report.summary())
    if args.out:
        header = ",".join(CSV_COLUMNS)
        row = _format_row("single", 0.0, scenario, report, "")
        Path(args.out).write_text(header + "\n" + row + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    try:
        scenario, sweep = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.axis:
        values = _parse_values(args)
        try:
            sweep = SweepSpec(axis=args.axis, values=values)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    if sweep is None:
        print("error: no sweep axis (config [sweep] section or --axis)", file=sys.stderr)
        return 1
    if args.seed is not None:
        scenario = replace(
            scenario, numerics=replace(scenario.numerics, seed=args.seed)
        )

    jobs = [
        (sweep.axis, value, scen) for value, scen in sweep.scenarios(scenario)
    ]
    jobs.sort(key=lambda j: j[1])
    workers = args.workers or int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    else:
        rows = [_run_point(job) for job in jobs]

    text = ",".join(CSV_COLUMNS) + "\n" + "\n".join(rows) + "\n"
    Path(args.out).write_text(text)
    failed = sum(1 for r in rows if not r.endswith(",ok"))
    print(f"wrote {args.out}: {len(rows)} points, {failed} failed")
    return 0 if failed == 0 else 3


def _parse_values(args) -> tuple[float, ...]:
    if args.values:
        return tuple(float(v) for v in args.values.split(","))
    if args.start is None or args.stop is None or args.step is None:
        raise ConfigError("--axis needs --values or --start/--stop/--step")
    values = []
    v = args.start
    while v <= args.stop + 1e-12:
        values.append(round(v, 12))
        v += args.step
    return tuple(values)


def cmd_convergence(args) -> int:
    try:
        scenario, _ = load_config(args.config)
        base, bumped, drift = convergence_check(scenario)
    except (ConfigError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"n_cutoff={base.n_cutoff}: {base.summary()}")
    print(f"n_cutoff={bumped.n_cutoff}: {bumped.summary()}")
    print(f"relative rate drift: {drift:.3e}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dmcvqkd",
        description="Asymptotic key rates of QPSK CV-QKD with trusted noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="compute one key rate from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="optional CSV output path")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis and write a CSV dataset")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", help="overrides the config [sweep] section")
    p_sweep.add_argument("--values", help="comma-separated axis values")
    p_sweep.add_argument("--start", type=float)
    p_sweep.add_argument("--stop", type=float)
    p_sweep.add_argument("--step", type=float)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument(
        "--workers", type=int, default=None, help=f"default ${WORKERS_ENV} or 1"
    )
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="check a config file against the schema")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)

    p_conv = sub.add_parser(
        "convergence", help="re-run at n_cutoff + 2 and report the rate drift"
    )
    p_conv.add_argument("config")
    p_conv.set_defaults(func=cmd_convergence)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
