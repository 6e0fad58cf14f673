"""Command line: ``hydromfc run|calibrate|sweep``.

Exit codes: 0 success, 1 run completed but the objective was missed (band
violated, too few calibration nodes, no improvement in a sweep), 2 bad
configuration or arguments, 3 simulation failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cascade import CalibrationError, calibrate_reconstruction
from .config import ConfigError, RunConfig, load_config
from .plant import SimulationError
from .plots import write_run_plots
from .simulation import TRACE_COLUMNS, RunResult, simulate, write_reconstruction

__all__ = ["main", "cmd_run", "cmd_calibrate", "cmd_sweep", "write_traces", "read_traces",
           "EXIT_OK", "EXIT_MISSED", "EXIT_CONFIG", "EXIT_SIMULATION"]

log = logging.getLogger("hydromfc")

EXIT_OK, EXIT_MISSED, EXIT_CONFIG, EXIT_SIMULATION = 0, 1, 2, 3
METRIC_COLUMNS = ("scenario", "period_s", "plant", "seed", "max_over", "max_under",
                  "max_excursion", "violation_time", "within_band", "band_halfwidth",
                  "measured_transport_delay", "relative_volume_error")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))  # shortest string that reads back to the same double


def _atomic_write(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in rows:
                w.writerow(row)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_traces(traces: dict, path) -> None:
    n = len(traces["t_s"])
    rows = [TRACE_COLUMNS]
    for k in range(n):
        row = []
        for c in TRACE_COLUMNS:
            v = traces[c][k]
            row.append(str(int(v)) if c == "saturated" else repr(float(v)))
        rows.append(row)
    _atomic_write(Path(path), rows)


def read_traces(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = list(zip(*reader))
    return {name: np.array([float(v) for v in col]) for name, col in zip(header, cols)}


def _metrics_row(cfg: RunConfig, res: RunResult) -> list[str]:
    rep = res.report
    vals = dict(rep.as_dict(), scenario=cfg.scenario, period_s=res.scenario.T_s, plant=cfg.plant,
                seed=cfg.seed, max_excursion=rep.max_excursion,
                relative_volume_error=res.relative_volume_error if cfg.plant == "pde" else math.nan)
    return [_fmt(vals[c]) for c in METRIC_COLUMNS]


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "plant", None) is not None:
        kw["plant"] = args.plant
    if getattr(args, "scenario", None) is not None:
        kw["scenario"] = args.scenario
    if getattr(args, "out", None) is not None:
        kw["output"] = args.out
    if getattr(args, "period", None) is not None:
        kw["controller"] = replace(cfg.controller, period=args.period)
    return cfg.with_(**kw) if kw else cfg


def _run_one(cfg: RunConfig, out: Path, anti_windup=None, plots: bool = True) -> RunResult:
    res = simulate(cfg, anti_windup=anti_windup)
    out.mkdir(parents=True, exist_ok=True)
    write_traces(res.traces, out / "traces.csv")
    _atomic_write(out / "metrics.csv", [METRIC_COLUMNS, _metrics_row(cfg, res)])
    if plots:
        write_run_plots(res.traces, out, cfg.halfwidth)
    return res


def cmd_run(cfg: RunConfig, *, anti_windup=None, plots: bool = True) -> int:
    out = Path(cfg.output)
    res = _run_one(cfg, out, anti_windup, plots)
    rep = res.report
    print(f"scenario {cfg.scenario}  T_s={res.scenario.T_s:g} s  plant={cfg.plant}  "
          f"max|z_r - z_r*| = {100 * rep.max_excursion:.1f} cm  "
          f"violation {rep.violation_time:g} s  -> {out}")
    return EXIT_OK if rep.within_band else EXIT_MISSED


def cmd_calibrate(cfg: RunConfig) -> int:
    grid = cfg.cascade.q_grid
    try:
        law = calibrate_reconstruction(cfg.geometry, grid, cfg.cascade.z_r_target)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_MISSED
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "reconstruction.csv"
    write_reconstruction(law, path)
    if law.monotonicity == 0:
        print("warning: z_a column is not monotone in q", file=sys.stderr)
    for q in law.dropped:
        print(f"warning: node q={q:g} m3/s dropped", file=sys.stderr)
    print(f"{law.grid.size}/{len(grid)} nodes calibrated -> {path}")
    return EXIT_OK if law.grid.size >= 0.8 * len(grid) else EXIT_MISSED


def cmd_sweep(cfg: RunConfig, periods, scenarios=None, plots: bool = False) -> int:
    if not periods:
        print("sweep needs at least one period", file=sys.stderr)
        return EXIT_CONFIG
    scenarios = scenarios or [cfg.scenario]
    out = Path(cfg.output)
    rows = [("scenario", "period_s", "max_excursion", "within_band")]
    best: dict[tuple[int, float], float] = {}
    ok = True
    for n in scenarios:
        for T in periods:
            run_cfg = cfg.with_(scenario=n, controller=replace(cfg.controller, period=float(T)))
            res = _run_one(run_cfg, out / f"scenario{n}_T{T:g}", plots=plots)
            best[n, float(T)] = res.report.max_excursion
            ok &= res.report.within_band
            rows.append((str(n), _fmt(float(T)), _fmt(res.report.max_excursion),
                         _fmt(res.report.within_band)))
            print(f"scenario {n}  T_s={T:>6g} s  max|z_r - z_r*| = "
                  f"{100 * res.report.max_excursion:5.2f} cm")
    _atomic_write(out / "sweep.csv", rows)
    for n in scenarios:
        if n in (1, 2) and (n, 120.0) in best and (n, 60.0) in best:
            if not best[n, 60.0] < best[n, 120.0]:
                print(f"scenario {n}: 60 s does not improve on 120 s", file=sys.stderr)
                ok = False
    return EXIT_OK if ok else EXIT_MISSED


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydromfc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file overriding the defaults")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="lock-flush seed")
    common.add_argument("--plant", choices=("pde", "surrogate"))
    common.add_argument("-v", "--verbose", action="store_true")

    r = sub.add_parser("run", parents=[common], help="simulate one scenario")
    r.add_argument("--scenario", type=int, choices=(1, 2, 3))
    r.add_argument("--period", type=float, help="controller period in seconds")
    r.add_argument("--no-anti-windup", dest="anti_windup", action="store_false", default=None)
    r.add_argument("--no-plots", dest="plots", action="store_false")

    sub.add_parser("calibrate", parents=[common], help="tabulate the reconstruction law")

    s = sub.add_parser("sweep", parents=[common], help="compare controller periods")
    s.add_argument("--periods", type=float, nargs="*", default=[120.0, 60.0],
                   help="controller periods in seconds")
    s.add_argument("--scenarios", type=int, nargs="+", choices=(1, 2, 3))
    s.add_argument("--plots", action="store_true")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            return cmd_run(cfg, anti_windup=args.anti_windup, plots=args.plots)
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        return cmd_sweep(cfg, args.periods, args.scenarios, plots=args.plots)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
