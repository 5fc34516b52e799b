"""Command-line surface: one binary, one subcommand per subsystem.

Exit codes are a stable contract: 0 success, 2 configuration or input
error, 3 runtime error.  All outputs are byte-deterministic functions
of the inputs.
"""

import argparse
import os
import sys

import numpy as np

from . import geodb as geodb_mod
from . import harness, occupancy, sensing
from .errors import ConfigError, ParseError, TvwsimError
from .geodb import query_vacant_channels
from .radio_env import FrequencyBand, PropagationConfig, build_channel_grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _cmd_simulate(args):
    cfg = harness.load_scenario(args.scenario)
    metrics, events = harness.run_simulation(cfg)
    curve = None
    if cfg.interference is not None:
        curve, guard = harness.run_interference_study(cfg.interference)
        print(guard.summary_line())
    written = harness.emit_report(metrics, cfg, args.out, events, curve)
    records = [r for r in metrics.handover_records if not r.aborted]
    print(f"simulated {cfg.duration_ms} ms, {metrics.plr.size} plr samples")
    print(f"handovers: {len(records)}")
    if records:
        lats = [r.latency_ms for r in records]
        print(f"mean_latency_ms: {np.mean(lats):.10g}")
        print(f"max_latency_ms: {np.max(lats):.10g}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _parse_power_range(text):
    lo, hi, step = (float(p) for p in text.split(":"))
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1)]


def _cmd_roc(args):
    cfg = sensing.load_calibration(args.calibration) if args.calibration != "default" \
        else sensing.default_calibration()
    powers = _parse_power_range(args.powers)
    points = sensing.estimate_roc(cfg, powers, trials=args.trials, seed=args.seed)
    print("power_dbm,pd,pfa")
    for p in points:
        print(f"{p.power_dbm:.10g},{p.pd:.10g},{p.pfa:.10g}")
    if args.out:
        sensing.roc_to_csv(points, args.trials, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_acir(args):
    study = harness.load_acir_study(args.study)
    curve, guard = harness.run_interference_study(study)
    os.makedirs(args.out, exist_ok=True)
    curve_path = os.path.join(args.out, "acir_curve.csv")
    from .interference import curve_to_csv

    curve_to_csv(curve, curve_path)
    guard_path = os.path.join(args.out, "guard_band.txt")
    with open(guard_path, "w", encoding="utf-8") as fh:
        fh.write(guard.summary_line() + "\n")
        fh.write(f"binding_constraint: {guard.binding_constraint}\n")
        for name, acir in sorted(guard.required_acir_db.items()):
            fh.write(f"required_acir_db.{name}: {acir:.10g}\n")
        fh.write(f"baseline_tv_outage: {curve.baseline_tv_outage:.10g}\n")
    print(guard.summary_line())
    print(f"wrote {curve_path}")
    print(f"wrote {guard_path}")
    return EXIT_OK


def _grid_from_args(args):
    excluded = []
    if args.exclude:
        for part in args.exclude.split(";"):
            lo, hi = (float(x) for x in part.split("-"))
            excluded.append(FrequencyBand(lo, hi))
    return build_channel_grid(FrequencyBand(args.band_low, args.band_high),
                              args.channel_mhz, tuple(excluded))


def _prop_from_args(args):
    return PropagationConfig(exponent=args.exponent, ref_loss_db=args.ref_loss_db)


def _cmd_geodb(args):
    prop = _prop_from_args(args)
    if args.geodb_cmd == "query":
        db = geodb_mod.load(args.db, prop)
        grid = _grid_from_args(args)
        rows = query_vacant_channels(db, (args.x, args.y), args.eirp, prop, grid,
                                     args.freq)
        print("channel,low_mhz,region")
        for ch, region in rows:
            print(f"{ch},{grid.low_edge_mhz(ch):.10g},{region.name.title()}")
        usable = sum(1 for _, r in rows if r is not geodb_mod.Region.BLACK)
        print(f"# usable channels (white+grey): {usable}")
    elif args.geodb_cmd == "contour":
        db = geodb_mod.load(args.db, prop)
        print("id,channel,protected_radius_m")
        for key in sorted(db.records):
            rec = db.records[key]
            radius = geodb_mod.protected_radius(rec, prop, args.freq)
            print(f"{key},{rec.service.channel_index},{radius:.10g}")
    else:  # separation
        table = (geodb_mod.default_separation_table() if args.table == "default"
                 else geodb_mod.separation_table_from_csv(args.table))
        sep, clamped = geodb_mod.required_separation(table, args.power, args.height)
        flag = " (clamped to table hull)" if clamped else ""
        print(f"required_separation_m: {sep:.10g}{flag}")
    return EXIT_OK


def _cmd_occupancy(args):
    matrix = occupancy.ingest_trace(args.trace)
    rule = (occupancy.ThresholdRule(fixed_dbm=args.threshold_dbm)
            if args.threshold_dbm is not None else occupancy.ThresholdRule())
    grid = _grid_from_args(args)
    duty = occupancy.duty_cycle(matrix, grid, rule)
    noise = float(np.percentile(matrix.power_dbm, 10.0))
    print(f"threshold rule: {rule.describe()}")
    print(f"noise floor estimate: {noise:.10g} dBm")
    print("channel,low_mhz,duty_cycle,class")
    for ch in range(grid.n_channels):
        cls = occupancy.classify_channel(matrix, grid, ch, noise)
        label = cls.label.value + ("(never-seen)" if cls.never_seen else "")
        print(f"{ch},{grid.low_edge_mhz(ch):.10g},{duty[ch]:.10g},{label}")
    print(f"band_average: {occupancy.band_average(grid, duty):.10g}")
    if args.subbands:
        rows, overall = occupancy.summarize_band(
            matrix, occupancy.load_subband_table(args.subbands), rule)
        print(occupancy.render_report(rows, overall, rule))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            out_path = os.path.join(args.out, "subband_report.csv")
            occupancy.report_to_csv(rows, overall, out_path)
            print(f"wrote {out_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tvwsim",
        description="Cognitive TD-LTE in the TV band: simulator and analytics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and emit metrics")
    p.add_argument("scenario", help="scenario INI file")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("roc", help="detector ROC over received power levels")
    p.add_argument("calibration", help="calibration CSV, or 'default'")
    p.add_argument("--powers", default="-130:-110:1", help="lo:hi:step dBm sweep")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None, help="write roc CSV here")
    p.set_defaults(func=_cmd_roc)

    p = sub.add_parser("acir", help="coexistence sweep and guard-band pick")
    p.add_argument("study", help="study INI file")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=_cmd_acir)

    p = sub.add_parser("geodb", help="geo-location database queries")
    gsub = p.add_subparsers(dest="geodb_cmd", required=True)
    for name in ("query", "contour"):
        g = gsub.add_parser(name)
        g.add_argument("db", help="geodb CSV file")
        g.add_argument("--freq", type=float, default=700.0)
        g.add_argument("--exponent", type=float, default=3.5)
        g.add_argument("--ref-loss-db", type=float, default=None)
        if name == "query":
            g.add_argument("--x", type=float, required=True)
            g.add_argument("--y", type=float, required=True)
            g.add_argument("--eirp", type=float, default=20.0)
            g.add_argument("--band-low", type=float, default=470.0)
            g.add_argument("--band-high", type=float, default=806.0)
            g.add_argument("--channel-mhz", type=float, default=8.0)
            g.add_argument("--exclude", default="566-606")
    g = gsub.add_parser("separation")
    g.add_argument("--table", default="default", help="separation table CSV")
    g.add_argument("--power", type=float, required=True)
    g.add_argument("--height", type=float, required=True)
    g.add_argument("--exponent", type=float, default=3.5)
    g.add_argument("--ref-loss-db", type=float, default=None)
    p.set_defaults(func=_cmd_geodb)

    p = sub.add_parser("occupancy", help="duty-cycle analytics over a trace")
    p.add_argument("trace", help="sweep trace CSV")
    p.add_argument("--band-low", type=float, default=470.0)
    p.add_argument("--band-high", type=float, default=806.0)
    p.add_argument("--channel-mhz", type=float, default=8.0)
    p.add_argument("--exclude", default="566-606")
    p.add_argument("--threshold-dbm", type=float, default=None)
    p.add_argument("--subbands", default=None, help="sub-band table CSV")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=_cmd_occupancy)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TvwsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
