import csv
import json

import pytest

from gpsfeed.cli import main
from gpsfeed.errors import ConfigError, IoError, PipelineError
from gpsfeed.gtfs import validate_static
from gpsfeed.model import PipelineConfig
from gpsfeed.pipeline import _chunks, run_full_pipeline, run_trip_pipeline


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_trip_pipeline(tmp_path, small_fixture):
    paths, _, truth = small_fixture
    summary = run_trip_pipeline(paths["gps"], paths["terminals"], PipelineConfig(worker_count=1), tmp_path / "out")
    assert summary.devices == 2
    assert summary.trips == len(truth.trips)
    trips = read_rows(tmp_path / "out" / "trips.csv")
    features = read_rows(tmp_path / "out" / "trip_features.csv")
    assert len(trips) == len(features) == summary.trips
    assert not (tmp_path / "out" / "gtfs").exists()


def test_trip_pipeline_worker_independent(tmp_path, small_fixture):
    paths, _, _ = small_fixture
    for workers in (1, 8):
        run_trip_pipeline(paths["gps"], paths["terminals"], PipelineConfig(worker_count=workers), tmp_path / str(workers))
    for name in ("trips.csv", "trip_features.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "8" / name).read_bytes()


def test_missing_terminals_names_path(tmp_path, small_fixture):
    paths, _, _ = small_fixture
    missing = tmp_path / "none.csv"
    with pytest.raises(IoError) as info:
        run_trip_pipeline(paths["gps"], missing, PipelineConfig(worker_count=1), tmp_path / "out")
    assert str(missing) in str(info.value)
    assert info.value.stage == "ingest"


def test_full_pipeline(tmp_path, small_fixture):
    paths, _, truth = small_fixture
    out = tmp_path / "out"
    summary = run_full_pipeline(
        paths["gps"], paths["terminals"], paths["stops"], PipelineConfig(worker_count=1), out
    )
    assert summary.trips == len(truth.trips)
    assert sum(summary.stop_events.values()) == 12 * summary.trips
    tables = validate_static(out / "gtfs")
    assert len(tables["trips.txt"]) == summary.trips
    saved = json.loads((out / "summary.json").read_text())
    assert saved["trips"] == summary.trips
    for name in summary.files_written:
        assert (out / name).is_file()


def test_config_error_before_reading(tmp_path):
    bad = PipelineConfig(stops_buffer_radius_m=50, stops_extended_buffer_radius_m=40)
    with pytest.raises(ConfigError) as info:
        run_full_pipeline(tmp_path / "a", tmp_path / "b", tmp_path / "c", bad, tmp_path / "out")
    assert info.value.stage == "config"


def test_empty_gps_file(tmp_path, small_fixture):
    paths, _, _ = small_fixture
    gps = tmp_path / "empty.csv"
    gps.write_text("device_id,timestamp,latitude,longitude,speed,route_id\n")
    out = tmp_path / "out"
    summary = run_full_pipeline(gps, paths["terminals"], paths["stops"], PipelineConfig(worker_count=1), out)
    assert summary.trips == 0
    tables = validate_static(out / "gtfs")
    assert tables["trips.txt"] == [] and tables["stop_times.txt"] == []


def test_failed_run_leaves_previous_output(tmp_path, small_fixture, monkeypatch):
    paths, _, _ = small_fixture
    out = tmp_path / "out"
    run_full_pipeline(paths["gps"], paths["terminals"], paths["stops"], PipelineConfig(worker_count=1), out)
    before = (out / "gtfs" / "stop_times.txt").read_bytes()

    def boom(*args, **kwargs):
        raise IoError("disk full")

    monkeypatch.setattr("gpsfeed.pipeline.emit_trip_updates", boom)
    with pytest.raises(PipelineError) as info:
        run_full_pipeline(paths["gps"], paths["terminals"], paths["stops"], PipelineConfig(worker_count=1), out)
    assert info.value.stage == "report"
    assert (out / "gtfs" / "stop_times.txt").read_bytes() == before
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out"]


def test_chunks_cover_all_in_order():
    groups = [(f"d{i}", [0] * (i + 1)) for i in range(10)]
    chunks = _chunks(groups, 4)
    assert len(chunks) <= 4
    assert [g for c in chunks for g in c] == groups


def test_cli_full_run(tmp_path, small_fixture, capsys):
    paths, _, truth = small_fixture
    code = main(
        [
            "--gps", str(paths["gps"]),
            "--terminals", str(paths["terminals"]),
            "--stops", str(paths["stops"]),
            "--out", str(tmp_path / "out"),
            "--workers", "1",
            "--emit-geojson",
        ]
    )
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["trips"] == len(truth.trips)
    assert (tmp_path / "out" / "geojson" / "route.geojson").is_file()


def test_cli_config_file_and_flag_precedence(tmp_path, small_fixture):
    paths, _, _ = small_fixture
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"stops_buffer_radius_m": 60, "worker_count": 1, "min_trip_points": 5}))
    summary_path = tmp_path / "summary.json"
    code = main(
        [
            "--gps", str(paths["gps"]), "--terminals", str(paths["terminals"]),
            "--out", str(tmp_path / "out"), "--config", str(cfg),
            "--min-trip-points", "10", "--summary", str(summary_path),
        ]
    )
    assert code == 0
    assert json.loads(summary_path.read_text())["devices"] == 2


def test_cli_exit_codes(tmp_path, small_fixture):
    paths, _, _ = small_fixture
    common = ["--gps", str(paths["gps"]), "--terminals", str(paths["terminals"]), "--out", str(tmp_path / "o")]
    assert main(common + ["--stop-radius", "50", "--stop-extended-radius", "40"]) == 2
    assert main(["--gps", str(tmp_path / "missing.csv"), "--terminals", str(paths["terminals"]), "--out", str(tmp_path / "o")]) == 3
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text("{not json")
    assert main(common + ["--config", str(bad_cfg)]) == 2


def test_cli_custom_mapping(tmp_path, small_fixture):
    paths, _, _ = small_fixture
    src = paths["gps"].read_text().splitlines()
    src[0] = "bus,time,lat,lon,kmh,route"
    gps = tmp_path / "renamed.csv"
    gps.write_text("\n".join(src) + "\n")
    mapping = tmp_path / "mapping.json"
    mapping.write_text(
        json.dumps(
            {"columns": {"device_id": "bus", "timestamp": "time", "latitude": "lat",
                         "longitude": "lon", "speed": "kmh", "route_id": "route"}}
        )
    )
    summary_path = tmp_path / "s.json"
    code = main(["--gps", str(gps), "--terminals", str(paths["terminals"]), "--out", str(tmp_path / "o"),
                 "--mapping", str(mapping), "--workers", "1", "--summary", str(summary_path)])
    assert code == 0
    assert json.loads(summary_path.read_text())["trips"] == 10
