"""End-to-end experiment: dual tessellation, per-cell models, expert combination, reports."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import clustering, hedge, metrics, models, voronoi
from .errors import ConfigError, DataError, NumericError
from .pipeline import (DemandEvent, GeohashPartitioner, TimeGrid,
                       VoronoiPartitioner, aggregate, boxcox_transform,
                       dedup_events, parse_iso8601, read_events_csv,
                       select_boxcox_lambda, SAMPLING_PERIODS_MIN)
from .synth import DEFAULT_START, SyntheticCitySpec, generate_events
from .voronoi import bounds_of_points

STRATEGIES = ("voronoi", "geohash")

# benchmark set; seasonal decomposition/smoothing models are config-selectable
DEFAULT_CANDIDATES = ("baseline", "naive", "seasonal-naive", "drift")
SEASONAL_CANDIDATES = DEFAULT_CANDIDATES + ("stl(naive)", "stl(drift)", "stl(ses)",
                                            "stl(ar)", "holt-winters", "tbats-lite")

DAY_SECONDS = 86400.0


@dataclass
class ExperimentConfig:
    """One run of the full pipeline; exactly one input source must be set."""

    synth_spec: SyntheticCitySpec | None = None
    span_days: int = 14
    events_csv: str | None = None
    schema: str = "a"
    bbox: tuple[float, float, float, float] | None = None
    k: int = 40
    geohash_level: int = 6
    periods: tuple[int, ...] = (60,)
    validation_hours: int = 24
    test_hours: int = 24
    candidates: tuple[str, ...] = DEFAULT_CANDIDATES
    metric: str = "smape"
    beta_grid: tuple[float, ...] = hedge.DEFAULT_GRID
    gamma_grid: tuple[float, ...] = hedge.DEFAULT_GRID
    boxcox: str | float = "auto"         # "auto" | "off" | fixed lambda
    n_seasons: int | None = None
    dedup_window_min: float = 30.0
    kmeans_tol: float = 1e-4             # coarser than the library default; desk-scale runs
    kmeans_max_iter: int = 150
    seed: int = 0

    def __post_init__(self):
        if (self.synth_spec is None) == (self.events_csv is None):
            raise ConfigError("configure exactly one input: synthetic spec or events CSV")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not (1 <= self.geohash_level <= 12):
            raise ConfigError(f"geohash level must lie in [1, 12], got {self.geohash_level}")
        if not self.periods:
            raise ConfigError("at least one sampling period is required")
        for p in self.periods:
            if p not in SAMPLING_PERIODS_MIN:
                raise ConfigError(f"sampling period {p} not in {SAMPLING_PERIODS_MIN}")
        if self.metric not in ("smape", "mase"):
            raise ConfigError(f"metric must be 'smape' or 'mase', got {self.metric!r}")
        if self.schema not in ("a", "b"):
            raise ConfigError(f"schema must be 'a' or 'b', got {self.schema!r}")
        if self.validation_hours < 1 or self.test_hours < 1:
            raise ConfigError("validation and test windows must be at least one hour")
        if isinstance(self.boxcox, str) and self.boxcox not in ("auto", "off"):
            raise ConfigError("boxcox must be 'auto', 'off' or a numeric lambda")
        if not self.beta_grid or not self.gamma_grid:
            raise ConfigError("beta/gamma grids must be nonempty")

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "synth_spec"}
        out["periods"] = list(self.periods)
        out["candidates"] = list(self.candidates)
        out["beta_grid"] = list(self.beta_grid)
        out["gamma_grid"] = list(self.gamma_grid)
        if self.bbox is not None:
            out["bbox"] = list(self.bbox)
        if self.synth_spec is not None:
            spec = dict(self.synth_spec.__dict__)
            if spec.get("hotspot_centers") is not None:
                spec["hotspot_centers"] = [list(map(float, c)) for c in spec["hotspot_centers"]]
            out["synth_spec"] = spec
        return out


@dataclass
class PeriodResult:
    """Everything the reports need for one sampling period."""

    period: int
    beta: float
    gamma: float
    test_bin_starts: list[str]
    val_streams: np.ndarray            # (T_val, 2) expert errors, voronoi first
    test_streams: np.ndarray           # (T_test, 2)
    hedge_run: hedge.HedgeRun
    per_cell: list[dict]
    zero_cells: dict[str, int]
    event_stats: dict[str, dict]
    mean_errors: dict[str, float]


@dataclass
class ReportBundle:
    config: dict
    expert_order: tuple[str, str]
    periods: list[PeriodResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"config": self.config, "expert_order": list(self.expert_order),
               "periods": []}
        for pr in self.periods:
            out["periods"].append({
                "period": pr.period,
                "beta": pr.beta,
                "gamma": pr.gamma,
                "test_bin_starts": pr.test_bin_starts,
                "val_streams": pr.val_streams.tolist(),
                "test_streams": pr.test_streams.tolist(),
                "choices": pr.hedge_run.choices.tolist(),
                "losses": pr.hedge_run.losses.tolist(),
                "weights": pr.hedge_run.weights.tolist(),
                "hybrid_errors": pr.hedge_run.hybrid_errors.tolist(),
                "switch_count": pr.hedge_run.switch_count,
                "per_cell": pr.per_cell,
                "zero_cells": pr.zero_cells,
                "event_stats": pr.event_stats,
                "mean_errors": pr.mean_errors,
            })
        return out


def default_synth_spec() -> SyntheticCitySpec:
    """
    Desk-scale radial city whose demand starts spread out and concentrates
    sharply mid-way through the test day, so the better tessellation flips.
    """
    return SyntheticCitySpec(num_hotspots=32, geometry="radial",
                             city_radius_km=8.0, scatter_km=1.6,
                             base_rate_per_min=0.15, regime_switch_day=13.5,
                             regime_scatter_factor=0.2)


def default_config(periods: tuple[int, ...] = (60,), seed: int = 0) -> ExperimentConfig:
    """The default synthetic-city experiment: 14 days, K = 40, level-6 geohashes."""
    return ExperimentConfig(synth_spec=default_synth_spec(), span_days=14, k=40,
                            geohash_level=6, periods=periods, seed=seed)


class StageFailure(RuntimeError):
    """Module error annotated with the pipeline stage it came from."""

    def __init__(self, stage: str, original: BaseException):
        super().__init__(f"[{stage}] {original}")
        self.stage = stage
        self.original = original


def _run_stage(stage: str, fn):
    try:
        return fn()
    except (ConfigError, DataError, NumericError) as exc:
        raise StageFailure(stage, exc) from exc
    except (ValueError, IndexError, KeyError, ArithmeticError,
            np.linalg.LinAlgError, OSError) as exc:
        raise StageFailure(stage, exc) from exc


def _classify(stage: str, exc: BaseException) -> BaseException:
    """Map a stage failure onto the config/data/numeric taxonomy."""
    original = exc.original if isinstance(exc, StageFailure) else exc
    if isinstance(original, ConfigError):
        return ConfigError(str(exc))
    if isinstance(original, (DataError, OSError)):
        return DataError(str(exc))
    if stage in ("ingest", "bounds", "dedup", "aggregate"):
        return DataError(str(exc))
    return NumericError(str(exc))


def load_events(config: ExperimentConfig) -> list[DemandEvent]:
    if config.synth_spec is not None:
        return generate_events(config.synth_spec, config.span_days, config.seed,
                               DEFAULT_START)
    return read_events_csv(config.events_csv, config.schema)


def _time_grid(config: ExperimentConfig, events, period: int) -> TimeGrid:
    if config.synth_spec is not None:
        start = parse_iso8601(DEFAULT_START)
        n_bins = config.span_days * (1440 // period)
        return TimeGrid(start, period, n_bins)
    ts = np.array([e.timestamp for e in events])
    start = math.floor(ts.min() / DAY_SECONDS) * DAY_SECONDS
    end = math.ceil(ts.max() / DAY_SECONDS) * DAY_SECONDS
    n_bins = int(round((end - start) / (period * 60.0)))
    return TimeGrid(start, period, n_bins)


def _split_bins(config: ExperimentConfig, grid: TimeGrid, m_daily: int) -> tuple[int, int, int]:
    val_bins = config.validation_hours * 60 // grid.period_minutes
    test_bins = config.test_hours * 60 // grid.period_minutes
    train_bins = grid.n_bins - val_bins - test_bins
    if train_bins < m_daily + 1:
        raise ConfigError(
            f"data span of {grid.n_bins} bins leaves {train_bins} training bins; "
            f"need more than one daily season ({m_daily})")
    return train_bins, val_bins, test_bins


def _strategy_run(config: ExperimentConfig, partitioner, deduped, n_dropped_dedup,
                  grid: TimeGrid, train_bins: int, val_bins: int, test_bins: int):
    """Aggregate and model one tessellation strategy for one period."""
    series_list, stats = aggregate(deduped, partitioner, grid)
    stats.dropped_dedup = n_dropped_dedup

    m_daily = 1440 // grid.period_minutes
    weekly = 7 * m_daily
    n_model = train_bins + val_bins
    cells = []
    zero_cells = 0
    for s in series_list:
        values = s.values
        if not values.any():
            zero_cells += 1
        train = values[:train_bins]
        model_window = values[:n_model]
        if config.boxcox == "auto":
            lam = select_boxcox_lambda(train) if model_window.any() else None
        elif config.boxcox == "off":
            lam = None
        else:
            lam = float(config.boxcox)
        candidates = config.candidates if model_window.any() else ()
        sel = models.select_model(model_window, m_daily, candidates, val_bins,
                                  lam=lam, weekly_m=weekly, n_seasons=config.n_seasons)
        work = boxcox_transform(values, lam) if lam is not None else values
        test_actual = values[n_model:]
        test_forecast = models.roll_one_step(sel.model, work[n_model:], lam)
        cells.append({
            "partition_id": s.partition_id,
            "area_km2": s.area_km2,
            "kind": sel.kind,
            "val_smape": sel.val_scores.get(sel.kind, float("inf")),
            "val_forecast": sel.val_forecasts,
            "val_actual": values[train_bins:n_model],
            "test_forecast": test_forecast,
            "test_actual": test_actual,
            "train": train,
            "summary": models.model_summary(sel.model, sel.val_scores.get(sel.kind)),
        })
    return cells, stats, zero_cells


def _instant_streams(cells: list[dict], which: str, metric: str, m_daily: int) -> np.ndarray:
    """Unweighted per-instant mean of per-cell error contributions."""
    fc = np.vstack([c[f"{which}_forecast"] for c in cells])
    ac = np.vstack([c[f"{which}_actual"] for c in cells])
    if metric == "smape":
        denom = fc + ac
        contrib = np.where(denom > 0.0, 100.0 * np.abs(fc - ac) / np.where(denom > 0.0, denom, 1.0), 0.0)
    else:
        scale = np.array([metrics.seasonal_naive_mae(c["train"], m_daily)
                          if c["train"].size > m_daily else 0.0 for c in cells])
        safe = np.where(scale > 0.0, scale, 1.0)
        contrib = np.where(scale[:, None] > 0.0, np.abs(fc - ac) / safe[:, None], 0.0)
    return contrib.mean(axis=0)


def _per_cell_rows(cells_by_strategy: dict, m_daily: int) -> list[dict]:
    rows = []
    for strategy in STRATEGIES:
        for c in cells_by_strategy[strategy]:
            try:
                sm = metrics.smape(c["test_actual"], c["test_forecast"])
            except metrics.UndefinedMetricError:
                sm = float("nan")
            try:
                ms = metrics.mase(c["test_actual"], c["test_forecast"], c["train"], m_daily)
            except (metrics.UndefinedMetricError, ValueError):
                ms = float("nan")
            rows.append({"strategy": strategy,
                         "partition_id": c["partition_id"],
                         "model_kind": c["kind"],
                         "smape": sm,
                         "mase": ms,
                         "summary": c["summary"]})
    return rows


def run_experiment(config: ExperimentConfig) -> ReportBundle:
    """Execute the full pipeline for every requested sampling period."""
    try:
        events = _run_stage("ingest", lambda: load_events(config))
        if not events:
            raise StageFailure("ingest", DataError("no events to process"))
        lats = np.array([e.lat for e in events])
        lons = np.array([e.lon for e in events])
        bounds = config.bbox or _run_stage("bounds", lambda: bounds_of_points(lats, lons))
        lat_min, lat_max, lon_min, lon_max = bounds
        inside = ((lats >= lat_min) & (lats <= lat_max)
                  & (lons >= lon_min) & (lons <= lon_max))
        points = np.column_stack([lats[inside], lons[inside]])
        if points.shape[0] < config.k:
            raise StageFailure("cluster", DataError(
                f"only {points.shape[0]} in-bounds events for k = {config.k}"))
        cluster = _run_stage("cluster", lambda: clustering.fit(
            points, config.k, seed=config.seed, max_iter=config.kmeans_max_iter,
            tol=config.kmeans_tol))
        diagram = _run_stage("voronoi", lambda: voronoi.build(cluster.centroids, bounds,
                                                              cluster.projection))
        partitioners = {
            "voronoi": _run_stage("tessellate", lambda: VoronoiPartitioner(diagram)),
            "geohash": _run_stage("tessellate", lambda: GeohashPartitioner(
                config.geohash_level, bounds)),
        }
        pids = {s: _run_stage("tessellate", lambda s=s: partitioners[s].assign(lats, lons))
                for s in STRATEGIES}
        deduped = {s: _run_stage("dedup", lambda s=s: dedup_events(
            events, pids[s], config.dedup_window_min)) for s in STRATEGIES}

        bundle = ReportBundle(config.to_dict(), STRATEGIES)
        for period in config.periods:
            stage = f"period-{period}"
            grid = _run_stage(stage, lambda: _time_grid(config, events, period))
            m_daily = 1440 // period
            train_bins, val_bins, test_bins = _run_stage(
                stage, lambda: _split_bins(config, grid, m_daily))

            cells_by_strategy = {}
            stats_by_strategy = {}
            zero_by_strategy = {}
            for strategy in STRATEGIES:
                cells, stats, zero = _run_stage(
                    f"{stage}-{strategy}",
                    lambda s=strategy: _strategy_run(config, partitioners[s], deduped[s],
                                                     len(events) - len(deduped[s]),
                                                     grid, train_bins, val_bins,
                                                     test_bins))
                cells_by_strategy[strategy] = cells
                stats_by_strategy[strategy] = stats.__dict__.copy()
                zero_by_strategy[strategy] = zero

            val_streams = np.column_stack(
                [_instant_streams(cells_by_strategy[s], "val", config.metric, m_daily)
                 for s in STRATEGIES])
            test_streams = np.column_stack(
                [_instant_streams(cells_by_strategy[s], "test", config.metric, m_daily)
                 for s in STRATEGIES])
            beta, gamma = _run_stage(stage, lambda: hedge.tune(
                val_streams, config.beta_grid, config.gamma_grid))
            hedge_run = _run_stage(stage, lambda: hedge.run(test_streams, beta, gamma))

            mean_errors = {s: float(test_streams[:, i].mean())
                           for i, s in enumerate(STRATEGIES)}
            mean_errors["hybrid"] = hedge_run.cumulative_mean_error
            test_starts = [grid.bin_start_iso(train_bins + val_bins + t)
                           for t in range(test_bins)]
            bundle.periods.append(PeriodResult(
                period, beta, gamma, test_starts, val_streams, test_streams,
                hedge_run, _per_cell_rows(cells_by_strategy, m_daily),
                zero_by_strategy, stats_by_strategy, mean_errors))
        return bundle
    except StageFailure as exc:
        raise _classify(exc.stage, exc) from exc


def run_and_report(config: ExperimentConfig, out_dir: str) -> ReportBundle:
    """Run the pipeline and emit reports; on failure flush a marker file."""
    os.makedirs(out_dir, exist_ok=True)
    try:
        bundle = run_experiment(config)
    except Exception as exc:
        with open(os.path.join(out_dir, "FAILED"), "w", encoding="utf-8") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        raise
    report(bundle, out_dir)
    return bundle


# ---------------------------------------------------------------------------
# Report rendering

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return repr(x)   # shortest exact round-trip, keeps reports consistent
    return str(x)


def report(bundle: ReportBundle, out_dir: str) -> list[str]:
    """Write the five report CSVs plus model summaries and the raw bundle."""
    return report_from_dict(bundle.to_dict(), out_dir)


def report_from_dict(data: dict, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    expert_order = data["expert_order"]
    metric = data["config"].get("metric", "smape")
    written = []

    def _open(name):
        path = os.path.join(out_dir, name)
        written.append(path)
        return open(path, "w", newline="", encoding="utf-8")

    with _open("summary.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["sampling_period", "strategy", "metric", "mean_error", "beta", "gamma"])
        for pr in data["periods"]:
            for s in expert_order:
                w.writerow([pr["period"], s, metric, _fmt(pr["mean_errors"][s]), "", ""])
            w.writerow([pr["period"], "hybrid", metric, _fmt(pr["mean_errors"]["hybrid"]),
                        _fmt(pr["beta"]), _fmt(pr["gamma"])])

    with _open("trace.csv") as fh:
        w = csv.writer(fh)
        n = len(expert_order)
        w.writerow(["sampling_period", "t", "chosen_expert"]
                   + [f"e_{i}" for i in range(n)]
                   + [f"l_{i}" for i in range(n)]
                   + [f"w_{i}" for i in range(n)])
        for pr in data["periods"]:
            for t, choice in enumerate(pr["choices"]):
                row = [pr["period"], t, choice]
                row += [_fmt(v) for v in pr["test_streams"][t]]
                row += [_fmt(v) for v in pr["losses"][t]]
                row += [_fmt(v) for v in pr["weights"][t]]
                w.writerow(row)

    with _open("per_cell.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["sampling_period", "partition_id", "strategy", "model_kind",
                    "smape", "mase"])
        for pr in data["periods"]:
            for row in pr["per_cell"]:
                w.writerow([pr["period"], row["partition_id"], row["strategy"],
                            row["model_kind"], _fmt(row["smape"]), _fmt(row["mase"])])

    with _open("ecdf.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["sampling_period", "kind", "strategy", "x", "ecdf",
                    "d_stat", "p_value"])
        for pr in data["periods"]:
            samples = {}
            for s in expert_order:
                vals = [row[metric] for row in pr["per_cell"]
                        if row["strategy"] == s and row[metric] is not None
                        and not (isinstance(row[metric], float) and math.isnan(row[metric]))]
                samples[s] = sorted(vals)
            for s in expert_order:
                n = len(samples[s])
                for i, v in enumerate(samples[s]):
                    w.writerow([pr["period"], "point", s, _fmt(float(v)),
                                _fmt((i + 1) / n), "", ""])
            for i in range(len(expert_order)):
                for j in range(i + 1, len(expert_order)):
                    a, b = samples[expert_order[i]], samples[expert_order[j]]
                    if a and b:
                        d, p = metrics.ks_two_sample(a, b)
                    else:
                        d, p = float("nan"), float("nan")
                    w.writerow([pr["period"], "ks",
                                f"{expert_order[i]}|{expert_order[j]}", "", "",
                                _fmt(d), _fmt(p)])

    with _open("cumulative.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["sampling_period", "t", "strategy", "cumulative_mean_error"])
        for pr in data["periods"]:
            streams = {s: np.asarray(pr["test_streams"], dtype=float)[:, i]
                       for i, s in enumerate(expert_order)}
            streams["hybrid"] = np.asarray(pr["hybrid_errors"], dtype=float)
            t_len = len(pr["choices"])
            denom = np.arange(1, t_len + 1, dtype=float)
            for name in list(expert_order) + ["hybrid"]:
                cum = np.cumsum(streams[name]) / denom
                for t in range(t_len):
                    w.writerow([pr["period"], t, name, _fmt(float(cum[t]))])

    model_doc = {}
    for pr in data["periods"]:
        by_strategy: dict[str, dict] = {s: {} for s in expert_order}
        for row in pr["per_cell"]:
            by_strategy[row["strategy"]][row["partition_id"]] = row["summary"]
        model_doc[str(pr["period"])] = by_strategy
    path = os.path.join(out_dir, "models.json")
    written.append(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_doc, fh, indent=1, sort_keys=True)

    path = os.path.join(out_dir, "bundle.json")
    written.append(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True)
    return written
