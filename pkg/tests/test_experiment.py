"""Full-pipeline integration: determinism, report shapes, CLI and exit codes."""

import csv
import json
import os

import numpy as np
import pytest

from tesscast import cli
from tesscast.errors import ConfigError, DataError
from tesscast.experiment import (ExperimentConfig, default_config, report,
                                 run_and_report, run_experiment)
from tesscast.pipeline import format_iso8601, write_events_csv
from tesscast.synth import SyntheticCitySpec, generate_events


def tiny_spec(**overrides):
    base = dict(num_hotspots=4, geometry="radial", city_radius_km=3.0,
                scatter_km=0.4, base_rate_per_min=0.12, users_per_hotspot=60)
    base.update(overrides)
    return SyntheticCitySpec(**base)


def tiny_config(**overrides):
    kwargs = dict(synth_spec=tiny_spec(), span_days=7, k=5, geohash_level=6,
                  periods=(60,), seed=3,
                  candidates=("baseline", "naive", "seasonal-naive", "drift"))
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


@pytest.fixture(scope="module")
def tiny_bundle():
    return run_experiment(tiny_config())


def test_streams_aligned_and_finite(tiny_bundle):
    pr = tiny_bundle.periods[0]
    assert pr.test_streams.shape == (24, 2)
    assert pr.val_streams.shape == (24, 2)
    assert np.all(np.isfinite(pr.test_streams))
    assert np.all(np.isfinite(pr.val_streams))
    assert pr.hedge_run.choices.shape == (24,)
    assert len(pr.test_bin_starts) == 24
    assert pr.test_bin_starts[0].endswith("T00:00:00Z")


def test_mean_errors_consistent(tiny_bundle):
    pr = tiny_bundle.periods[0]
    assert pr.mean_errors["voronoi"] == pytest.approx(float(pr.test_streams[:, 0].mean()))
    assert pr.mean_errors["geohash"] == pytest.approx(float(pr.test_streams[:, 1].mean()))
    assert pr.mean_errors["hybrid"] == pytest.approx(float(pr.hedge_run.hybrid_errors.mean()))


def test_per_cell_rows_cover_both_strategies(tiny_bundle):
    pr = tiny_bundle.periods[0]
    strategies = {row["strategy"] for row in pr.per_cell}
    assert strategies == {"voronoi", "geohash"}
    voronoi_rows = [r for r in pr.per_cell if r["strategy"] == "voronoi"]
    assert len(voronoi_rows) == 5
    kinds = {row["model_kind"] for row in pr.per_cell}
    assert kinds <= {"baseline", "naive", "seasonal-naive", "drift"}
    assert all("summary" in row for row in pr.per_cell)


def test_event_accounting(tiny_bundle):
    pr = tiny_bundle.periods[0]
    for strategy in ("voronoi", "geohash"):
        st = pr.event_stats[strategy]
        assert st["kept"] > 0
        assert st["dropped_out_of_bounds"] == 0
        assert st["dropped_out_of_window"] == 0
        assert st["dropped_dedup"] >= 0


def test_determinism_byte_identical(tmp_path):
    cfg = tiny_config(seed=11)
    dir_a = tmp_path / "a"
    dir_b = tmp_path / "b"
    run_and_report(cfg, str(dir_a))
    run_and_report(tiny_config(seed=11), str(dir_b))
    names = sorted(os.listdir(dir_a))
    assert names == sorted(os.listdir(dir_b))
    for name in names:
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes(), name


def test_mase_metric_plumbing():
    bundle = run_experiment(tiny_config(metric="mase", seed=4))
    pr = bundle.periods[0]
    # MASE contributions are dimensionless and far below SMAPE percent scale
    assert 0.0 < pr.mean_errors["geohash"] < 20.0
    assert pr.test_streams.shape == (24, 2)


def test_report_files_and_shapes(tmp_path, tiny_bundle):
    out = tmp_path / "rep"
    paths = report(tiny_bundle, str(out))
    names = {os.path.basename(p) for p in paths}
    assert {"summary.csv", "trace.csv", "per_cell.csv", "ecdf.csv",
            "cumulative.csv", "models.json", "bundle.json"} <= names

    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * len(tiny_bundle.periods)   # strategies + hybrid per period
    hybrid_rows = [r for r in rows if r["strategy"] == "hybrid"]
    assert all(r["beta"] and r["gamma"] for r in hybrid_rows)

    with open(out / "trace.csv", newline="") as fh:
        trace = list(csv.DictReader(fh))
    assert len(trace) == 24
    assert set(trace[0]) == {"sampling_period", "t", "chosen_expert",
                             "e_0", "e_1", "l_0", "l_1", "w_0", "w_1"}

    with open(out / "ecdf.csv", newline="") as fh:
        ecdf_rows = list(csv.DictReader(fh))
    ks_rows = [r for r in ecdf_rows if r["kind"] == "ks"]
    assert len(ks_rows) == len(tiny_bundle.periods)    # one strategy pair
    assert all(r["p_value"] != "" for r in ks_rows)

    with open(out / "cumulative.csv", newline="") as fh:
        cum = list(csv.DictReader(fh))
    last = {r["strategy"]: float(r["cumulative_mean_error"])
            for r in cum if int(r["t"]) == 23}
    me = tiny_bundle.periods[0].mean_errors
    for name in ("voronoi", "geohash", "hybrid"):
        assert abs(last[name] - me[name]) < 1e-9

    with open(out / "per_cell.csv", newline="") as fh:
        cells = list(csv.DictReader(fh))
    assert set(cells[0]) == {"sampling_period", "partition_id", "strategy",
                             "model_kind", "smape", "mase"}

    models_doc = json.loads((out / "models.json").read_text())
    assert set(models_doc["60"]) == {"voronoi", "geohash"}


def test_report_rerender_matches(tmp_path, tiny_bundle):
    first = tmp_path / "first"
    report(tiny_bundle, str(first))
    second = tmp_path / "second"
    data = json.loads((first / "bundle.json").read_text())
    from tesscast.experiment import report_from_dict
    report_from_dict(data, str(second))
    for name in ("summary.csv", "trace.csv", "per_cell.csv", "ecdf.csv", "cumulative.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_failure_marker(tmp_path):
    cfg = tiny_config()
    cfg.events_csv = str(tmp_path / "missing.csv")
    cfg.synth_spec = None
    out = tmp_path / "out"
    with pytest.raises(Exception):
        run_and_report(cfg, str(out))
    assert (out / "FAILED").exists()
    assert "ingest" in (out / "FAILED").read_text() or "Error" in (out / "FAILED").read_text()


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig()                                     # no source
    with pytest.raises(ConfigError):
        tiny_config(periods=(45,))
    with pytest.raises(ConfigError):
        tiny_config(k=0)
    with pytest.raises(ConfigError):
        tiny_config(metric="rmse")
    with pytest.raises(ConfigError):
        tiny_config(boxcox="sometimes")
    with pytest.raises(ConfigError):
        # the split check needs the time grid, so it fires at run time
        run_experiment(tiny_config(span_days=7, validation_hours=96, test_hours=48))


def test_k_larger_than_events_is_data_error():
    spec = tiny_spec(base_rate_per_min=0.0005)
    with pytest.raises(DataError):
        run_experiment(tiny_config(synth_spec=spec, k=500))


def test_schema_b_pipeline(tmp_path):
    events = generate_events(tiny_spec(), 7, seed=9)
    path = tmp_path / "yellow.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["VendorID", "tpep_pickup_datetime", "pickup_longitude",
                    "pickup_latitude", "fare_amount"])
        for e in events:
            w.writerow([2, format_iso8601(e.timestamp).replace("T", " ").rstrip("Z"),
                        f"{e.lon:.6f}", f"{e.lat:.6f}", "7.5"])
    cfg = tiny_config()
    cfg = ExperimentConfig(events_csv=str(path), schema="b", k=5, periods=(60,),
                           seed=1, candidates=("baseline", "naive"))
    bundle = run_experiment(cfg)
    pr = bundle.periods[0]
    assert pr.test_streams.shape == (24, 2)
    assert pr.event_stats["geohash"]["dropped_dedup"] == 0   # schema B has no user ids


def test_cli_synth_and_run_and_report(tmp_path):
    events_path = tmp_path / "events.csv"
    config_path = tmp_path / "exp.conf"
    config_path.write_text(
        "# tiny experiment\n"
        "num_hotspots = 4\n"
        "city_radius_km = 3.0\n"
        "scatter_km = 0.4\n"
        "base_rate_per_min = 0.12\n"
        "users_per_hotspot = 60\n"
        "span_days = 7\n"
        "k = 5\n"
        "periods = 60\n"
        "candidates = baseline,naive,seasonal-naive,drift\n")
    rc = cli.main(["synth", "--config", str(config_path), "--days", "7",
                   "--seed", "3", "--out-file", str(events_path)])
    assert rc == 0
    assert events_path.exists()

    out_dir = tmp_path / "run_out"
    rc = cli.main(["run", "--config", str(config_path), "--seed", "3",
                   "--out", str(out_dir)])
    assert rc == 0
    for name in ("summary.csv", "trace.csv", "per_cell.csv", "ecdf.csv",
                 "cumulative.csv", "bundle.json"):
        assert (out_dir / name).exists()

    rerender = tmp_path / "rerender"
    rc = cli.main(["report", "--in", str(out_dir), "--out", str(rerender)])
    assert rc == 0
    assert ((rerender / "summary.csv").read_bytes()
            == (out_dir / "summary.csv").read_bytes())


def test_cli_run_with_events_csv(tmp_path):
    events = generate_events(tiny_spec(), 7, seed=5)
    events_path = tmp_path / "events.csv"
    write_events_csv(events, str(events_path))
    out_dir = tmp_path / "out"
    rc = cli.main(["run", "--events", str(events_path), "--schema", "a",
                   "--k", "5", "--period", "60", "--seed", "1",
                   "--out", str(out_dir)])
    assert rc == 0
    assert (out_dir / "summary.csv").exists()


def test_cli_tessellate_and_hedge(tmp_path):
    events = generate_events(tiny_spec(), 7, seed=6)
    events_path = tmp_path / "events.csv"
    write_events_csv(events, str(events_path))
    tess_dir = tmp_path / "tess"
    rc = cli.main(["tessellate", "--in", str(events_path), "--k", "5",
                   "--out", str(tess_dir)])
    assert rc == 0
    assert (tess_dir / "centroids.csv").exists()
    assert (tess_dir / "voronoi_cells.csv").exists()
    assert (tess_dir / "geohash_cells.csv").exists()

    errors_path = tmp_path / "errors.csv"
    with open(errors_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "e_voronoi", "e_geohash"])
        for t in range(48):
            w.writerow([t, 1.0 + 0.1 * t, 2.0])
    hedge_dir = tmp_path / "hedge"
    rc = cli.main(["hedge", "--in", str(errors_path), "--beta", "0.1",
                   "--gamma", "0.7", "--out", str(hedge_dir)])
    assert rc == 0
    assert (hedge_dir / "trace.csv").exists()


def test_cli_exit_codes(tmp_path):
    # unknown config key -> 2
    bad_conf = tmp_path / "bad.conf"
    bad_conf.write_text("nonsense_key = 1\n")
    assert cli.main(["run", "--config", str(bad_conf), "--out", str(tmp_path / "x")]) == 2
    # malformed line -> 2
    bad_conf2 = tmp_path / "bad2.conf"
    bad_conf2.write_text("just some words\n")
    assert cli.main(["run", "--config", str(bad_conf2), "--out", str(tmp_path / "y")]) == 2
    # missing events file -> 3
    assert cli.main(["run", "--events", str(tmp_path / "none.csv"),
                     "--out", str(tmp_path / "z")]) == 3
    # ingest of a file with wrong columns -> 3
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("a,b\n1,2\n")
    assert cli.main(["ingest", "--in", str(wrong), "--out-file",
                     str(tmp_path / "norm.csv")]) == 3


def test_parse_config_file(tmp_path):
    path = tmp_path / "c.conf"
    path.write_text("a = 1  # trailing comment\n\n# full comment\nb=two\n")
    assert cli.parse_config_file(str(path)) == {"a": "1", "b": "two"}


def test_default_config_shape():
    cfg = default_config(periods=(60,), seed=0)
    assert cfg.k == 40
    assert cfg.geohash_level == 6
    assert cfg.span_days == 14
    assert cfg.synth_spec.regime_switch_day is not None
