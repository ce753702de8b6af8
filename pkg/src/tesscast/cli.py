"""Command-line front end for the forecasting pipeline.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import clustering, hedge, voronoi
from .errors import ConfigError, DataError, NumericError
from .experiment import (ExperimentConfig, default_synth_spec, run_and_report,
                         report_from_dict, run_experiment, STRATEGIES)
from .pipeline import GeohashPartitioner, read_events_csv, write_events_csv
from .synth import SyntheticCitySpec, generate_events
from .voronoi import bounds_of_points

SYNTH_KEYS = {
    "num_hotspots": int, "geometry": str, "center_lat": float, "center_lon": float,
    "city_radius_km": float, "scatter_km": float, "base_rate_per_min": float,
    "daily_amplitude": float, "weekly_amplitude": float,
    "regime_switch_day": float, "regime_scatter_factor": float,
    "users_per_hotspot": int,
}


def parse_config_file(path: str) -> dict:
    """Plain UTF-8 key=value lines; '#' starts a comment; values are strings."""
    out: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return out


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def build_config(file_values: dict, args: argparse.Namespace) -> ExperimentConfig:
    """Merge config-file values with CLI flag overrides."""
    values = dict(file_values)
    for flag, key in (("seed", "seed"), ("period", "periods"), ("k", "k"),
                      ("geohash_level", "geohash_level"), ("metric", "metric"),
                      ("schema", "schema"), ("events", "events_csv"),
                      ("days", "span_days")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = str(v)

    synth_kwargs = {}
    for key, cast in SYNTH_KEYS.items():
        if key in values:
            synth_kwargs[key] = cast(values.pop(key))
    try:
        kwargs: dict = {}
        if "events_csv" in values:
            kwargs["events_csv"] = values.pop("events_csv")
            kwargs["schema"] = values.pop("schema", "a")
            values.pop("source", None)
            if synth_kwargs:
                raise ConfigError("config mixes synthetic-city keys with an events CSV")
        else:
            values.pop("source", None)
            values.pop("schema", None)
            kwargs["synth_spec"] = (SyntheticCitySpec(**synth_kwargs) if synth_kwargs
                                    else default_synth_spec())
        if "span_days" in values:
            kwargs["span_days"] = int(values.pop("span_days"))
        if "periods" in values:
            kwargs["periods"] = _parse_int_list(values.pop("periods"))
        for key in ("k", "geohash_level", "validation_hours", "test_hours", "seed"):
            if key in values:
                kwargs[key] = int(values.pop(key))
        if "n_seasons" in values:
            raw = values.pop("n_seasons")
            kwargs["n_seasons"] = None if raw in ("", "all") else int(raw)
        if "dedup_window_min" in values:
            kwargs["dedup_window_min"] = float(values.pop("dedup_window_min"))
        if "metric" in values:
            kwargs["metric"] = values.pop("metric")
        if "candidates" in values:
            kwargs["candidates"] = tuple(x.strip() for x in values.pop("candidates").split(",")
                                         if x.strip())
        if "beta_grid" in values:
            kwargs["beta_grid"] = _parse_float_list(values.pop("beta_grid"))
        if "gamma_grid" in values:
            kwargs["gamma_grid"] = _parse_float_list(values.pop("gamma_grid"))
        if "boxcox" in values:
            raw = values.pop("boxcox")
            kwargs["boxcox"] = raw if raw in ("auto", "off") else float(raw)
        if "bbox" in values:
            box = _parse_float_list(values.pop("bbox"))
            if len(box) != 4:
                raise ConfigError("bbox needs lat_min,lat_max,lon_min,lon_max")
            kwargs["bbox"] = box
        if values:
            raise ConfigError(f"unknown config keys: {sorted(values)}")
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--period", type=int, choices=(5, 15, 30, 60), default=None)
    parser.add_argument("--k", type=int, default=None)
    parser.add_argument("--geohash-level", dest="geohash_level", type=int, default=None)
    parser.add_argument("--metric", choices=("smape", "mase"), default=None)
    parser.add_argument("--out", default="out")
    parser.add_argument("--schema", choices=("a", "b"), default=None)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    return build_config(file_values, args)


def cmd_synth(args: argparse.Namespace) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    synth_kwargs = {k: SYNTH_KEYS[k](v) for k, v in file_values.items() if k in SYNTH_KEYS}
    spec = SyntheticCitySpec(**synth_kwargs)
    events = generate_events(spec, args.days, args.seed if args.seed is not None else 0)
    os.makedirs(os.path.dirname(os.path.abspath(args.out_file)), exist_ok=True)
    write_events_csv(events, args.out_file)
    print(f"wrote {len(events)} events to {args.out_file}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    events = read_events_csv(args.in_file, args.schema or "a")
    if not events:
        raise DataError(f"{args.in_file}: no events parsed")
    write_events_csv(events, args.out_file)
    print(f"normalized {len(events)} events to {args.out_file}")
    return 0


def cmd_tessellate(args: argparse.Namespace) -> int:
    events = read_events_csv(args.in_file, args.schema or "a")
    if not events:
        raise DataError(f"{args.in_file}: no events parsed")
    lats = np.array([e.lat for e in events])
    lons = np.array([e.lon for e in events])
    bounds = bounds_of_points(lats, lons)
    k = args.k if args.k is not None else 40
    if len(events) < k:
        raise DataError(f"only {len(events)} events for k = {k}")
    model = clustering.fit(np.column_stack([lats, lons]), k,
                           seed=args.seed if args.seed is not None else 0)
    diagram = voronoi.build(model.centroids, bounds, model.projection)
    os.makedirs(args.out, exist_ok=True)

    with open(os.path.join(args.out, "centroids.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["centroid_id", "lat", "lon", "density"])
        cents = model.centroids
        for i in range(model.k):
            w.writerow([i, format(cents[i, 0], ".8f"), format(cents[i, 1], ".8f"),
                        int(model.density[i])])
    voronoi.write_cells_csv(diagram, os.path.join(args.out, "voronoi_cells.csv"))
    level = args.geohash_level if args.geohash_level is not None else 6
    part = GeohashPartitioner(level, bounds)
    with open(os.path.join(args.out, "geohash_cells.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["code", "area_km2"])
        for code in part.partition_ids():
            w.writerow([code, format(part.area_of(code), ".10g")])
    print(f"tessellation written to {args.out}")
    return 0


def cmd_forecast(args: argparse.Namespace) -> int:
    args.events = args.in_file
    config = _config_from_args(args)
    bundle = run_experiment(config)
    os.makedirs(args.out, exist_ok=True)
    pr = bundle.periods[0]
    with open(os.path.join(args.out, "errors.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "bin_start_iso8601"] + [f"e_{s}" for s in STRATEGIES])
        for t in range(pr.test_streams.shape[0]):
            w.writerow([t, pr.test_bin_starts[t]]
                       + [format(v, ".10g") for v in pr.test_streams[t]])
    report_from_dict(bundle.to_dict(), args.out)
    print(f"forecast reports written to {args.out}")
    return 0


def cmd_hedge(args: argparse.Namespace) -> int:
    rows = []
    with open(args.in_file, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = [c for c in (reader.fieldnames or []) if c.startswith("e_")]
        if len(cols) < 2:
            raise DataError(f"{args.in_file}: need at least two e_* columns")
        for row in reader:
            rows.append([float(row[c]) for c in cols])
    if not rows:
        raise DataError(f"{args.in_file}: empty error stream")
    result = hedge.run(np.asarray(rows), args.beta, args.gamma)
    os.makedirs(args.out, exist_ok=True)
    hedge.write_trace_csv(result, os.path.join(args.out, "trace.csv"))
    print(f"hybrid mean error {result.cumulative_mean_error:.6g} "
          f"with {result.switch_count} switches; trace in {args.out}/trace.csv")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    bundle = run_and_report(config, args.out)
    for pr in bundle.periods:
        me = pr.mean_errors
        print(f"period {pr.period} min: voronoi {me['voronoi']:.4g}, "
              f"geohash {me['geohash']:.4g}, hybrid {me['hybrid']:.4g} "
              f"(beta={pr.beta:g}, gamma={pr.gamma:g}, "
              f"switches={pr.hedge_run.switch_count})")
    print(f"reports written to {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    path = os.path.join(args.in_dir, "bundle.json")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    report_from_dict(data, args.out)
    print(f"reports re-rendered to {args.out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tesscast",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic event CSV (schema A)")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--days", type=int, default=14)
    p.add_argument("--out-file", default="events.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="normalize an event CSV to schema A")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--schema", choices=("a", "b"), default="a")
    p.add_argument("--out-file", default="events.csv")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("tessellate", help="cluster events and export both tessellations")
    p.add_argument("--in", dest="in_file", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_tessellate)

    p = sub.add_parser("forecast", help="run the pipeline on an event CSV and export reports")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--days", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("hedge", help="combine expert error streams from a CSV")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.7)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_hedge)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--events", default=None, help="events CSV (overrides synthetic source)")
    p.add_argument("--days", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="re-render report CSVs from a finished run directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
