"""Command-line front end.

Commands::

    suntracker run FILE [--out DIR] [--metrics-format kv|json] [--gnuplot-script]
    suntracker compare A B [--out DIR]
    suntracker energy --lat DEG --day N [--dt S] [--p-max W]
    suntracker sweep FILE --param TABLE.KEY --values V1,V2,... [--jobs N] [--out DIR]
    suntracker scenarios

Exit codes: 0 success, 2 invalid input, 3 aborted simulation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import pandas as pd

from . import harness, scenario
from .errors import DomainError, ScenarioError, SimulationAborted
from .sun_reference import energy_gain

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ABORTED = 3

log = logging.getLogger("suntracker")


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return str(v)


def format_kv(mapping: dict[str, Any]) -> str:
    return "".join(f"{k}={_format_value(v)}\n" for k, v in mapping.items())


def _json_safe(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def format_json(mapping: dict[str, Any]) -> str:
    return json.dumps({k: _json_safe(v) for k, v in mapping.items()}, indent=2) + "\n"


def _emit(mapping: dict[str, Any], fmt: str) -> str:
    return format_json(mapping) if fmt == "json" else format_kv(mapping)


def run_metrics(trace: harness.SimTrace) -> dict[str, Any]:
    """Flat metric mapping; keys carry an axis prefix when two axes are driven."""
    out: dict[str, Any] = {}
    multi = len(trace.axes) > 1
    for name in trace.axes:
        for k, v in harness.metrics_mapping(harness.metrics(trace, name)).items():
            out[f"{name}.{k}" if multi else k] = v
    if multi and trace.energy_gain is not None:
        out = {k: v for k, v in out.items() if not k.endswith(".energy_gain")}
        out["energy_gain"] = trace.energy_gain
    out["n_clamped"] = trace.meta.get("n_clamped", 0)
    return out


def gnuplot_script(csv_name: str, axes: Sequence[str]) -> str:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 't [s]'",
        "set multiplot layout 3,1",
    ]
    for signal, label in (("q", "position [rad]"), ("u", "v_q [V]"), ("s", "surface")):
        lines.append(f"set ylabel '{label}'")
        plots = [f"'{csv_name}' using 't':'{signal}_{a}' with lines" for a in axes]
        if signal == "q":
            plots += [f"'{csv_name}' using 't':'q_r_{a}' with lines dt 2" for a in axes]
        lines.append("plot " + ", ".join(plots))
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def _out_dir(path: str | None) -> Path:
    out = Path(path or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args: argparse.Namespace) -> int:
    sc = scenario.load(args.file)
    out = _out_dir(args.out)
    try:
        trace = harness.run(sc)
    except SimulationAborted as exc:
        if exc.trace is not None:
            harness.write_csv(exc.trace, out / "trace.csv", sc.output_every)
        print(f"error: simulation aborted at {exc}", file=sys.stderr)
        return EXIT_ABORTED
    harness.write_csv(trace, out / "trace.csv", sc.output_every)
    text = _emit(run_metrics(trace), args.metrics_format)
    (out / ("metrics.json" if args.metrics_format == "json" else "metrics.txt")).write_text(text, encoding="utf-8")
    if args.gnuplot_script:
        (out / "plot.gp").write_text(gnuplot_script("trace.csv", sc.axes), encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    a = scenario.load(args.a)
    b = scenario.load(args.b)
    if not harness.comparable(a, b):
        raise ScenarioError("scenarios not comparable: plant, reference, disturbance or integrator differ")
    out = _out_dir(args.out)
    ta, tb = harness.run(a), harness.run(b)
    harness.write_csv(ta, out / "trace_a.csv", a.output_every)
    harness.write_csv(tb, out / "trace_b.csv", b.output_every)
    report: dict[str, Any] = {}
    for name in ta.axes:
        cmp = harness.compare_traces(ta, tb, name)
        prefix = f"{name}." if len(ta.axes) > 1 else ""
        report[f"{prefix}chattering_ratio"] = cmp.chattering_ratio
        report[f"{prefix}switching_ratio"] = cmp.switching_ratio
        report[f"{prefix}settling_ratio"] = cmp.settling_ratio
        for tag, m in (("a", cmp.a), ("b", cmp.b)):
            for k, v in harness.metrics_mapping(m).items():
                report[f"{prefix}{tag}.{k}"] = v
    text = _emit(report, args.metrics_format)
    (out / ("comparison.json" if args.metrics_format == "json" else "comparison.txt")).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_energy(args: argparse.Namespace) -> int:
    rep = energy_gain(args.lat, args.day, args.p_max, args.dt)
    report = {
        "latitude_deg": args.lat,
        "day": args.day,
        "fixed_wh": rep.fixed_wh,
        "tracked_wh": rep.tracked_wh,
        "gain_percent": 100.0 * rep.gain,
    }
    sys.stdout.write(_emit(report, args.metrics_format))
    return EXIT_OK


def parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(f"--values must be a comma-separated list of numbers, got '{text}'") from None
    if not values:
        raise ScenarioError("--values is empty")
    return values


def _sweep_point(item: tuple[str, str, float]) -> dict[str, Any]:
    text, key, value = item
    sc = scenario.with_override(scenario.loads(text), key, value)
    row: dict[str, Any] = {key: value, "status": "ok"}
    try:
        row.update(run_metrics(harness.run(sc)))
    except SimulationAborted as exc:
        row.update(status="aborted", aborted_at=exc.t)
    return row


def cmd_sweep(args: argparse.Namespace) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    base = scenario.loads(text)
    values = parse_values(args.values)
    for v in values:
        scenario.with_override(base, args.param, v)  # validate every point before running any
    items = [(text, args.param, v) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, items))
    else:
        rows = [_sweep_point(it) for it in items]
    frame = pd.DataFrame(rows)
    out = _out_dir(args.out)
    frame.to_csv(out / "sweep.csv", index=False, na_rep="", float_format="%.12g", lineterminator="\n")
    sys.stdout.write(frame.to_csv(index=False, na_rep="", float_format="%.6g", lineterminator="\n"))
    return EXIT_OK


def cmd_scenarios(args: argparse.Namespace) -> int:
    for name in scenario.bundled_names():
        print(f"{name}\t{scenario.bundled(name)}")
    return EXIT_OK


def _scenario_path(text: str) -> str:
    """Accept either a path or the name of a bundled scenario."""
    if Path(text).exists():
        return text
    try:
        return str(scenario.bundled(text))
    except FileNotFoundError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="suntracker", description="Sun-tracker drive control simulations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--metrics-format", choices=("kv", "json"), default="kv")

    p = sub.add_parser("run", parents=[fmt], help="simulate one scenario")
    p.add_argument("file", type=_scenario_path)
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--gnuplot-script", action="store_true", help="also write plot.gp")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[fmt], help="run two scenarios and report metric ratios a/b")
    p.add_argument("a", type=_scenario_path)
    p.add_argument("b", type=_scenario_path)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("energy", parents=[fmt], help="fixed versus tracked daily energy")
    p.add_argument("--lat", type=float, required=True, help="latitude in degrees")
    p.add_argument("--day", type=int, required=True, help="day of year, 1..365")
    p.add_argument("--dt", type=float, default=60.0, help="integration step in seconds")
    p.add_argument("--p-max", type=float, default=1000.0, help="panel power at normal incidence, W")
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("sweep", help="rerun a scenario over values of one parameter")
    p.add_argument("file", type=_scenario_path)
    p.add_argument("--param", required=True, help="TABLE.KEY, e.g. smc.U0")
    p.add_argument("--values", required=True, help="comma-separated numbers")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenarios", help="list bundled scenario files")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationAborted as exc:
        print(f"error: simulation aborted at {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
