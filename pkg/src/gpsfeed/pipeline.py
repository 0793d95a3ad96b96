"""End-to-end orchestration: ingest, clean, extract, match, derive, report."""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import os
import shutil
import tempfile
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .columns import RecordColumns
from .errors import IntegrityError, IoError, PipelineError
from .features import SegmentRun, TripSummary, derive
from .geojson import export_geojson
from .gtfs import emit_static, emit_trip_updates
from .ingest import load_gps_columns, load_route, load_terminals
from .model import (
    STOP_EVENT_COLUMNS,
    TRIP_COLUMNS,
    TRIP_FEATURE_COLUMNS,
    Direction,
    FieldMapping,
    GpsRecord,
    PipelineConfig,
    RouteDefinition,
    StopPoint,
    validate_config,
)
from .preprocessing import CleaningReport, clean, partition
from .stops import Scenario, StopEvent, match_stops
from .trips import ExtractionReport, TripFeatureRow, TripTrajectory, extract_trips, trip_features

log = logging.getLogger(__name__)


@dataclass
class RunSummary:
    rows_read: int = 0
    rows_rejected: int = 0
    rejects_by_reason: dict = field(default_factory=dict)
    cleaning: dict = field(default_factory=dict)
    devices: int = 0
    trips: int = 0
    trips_discarded: dict = field(default_factory=dict)
    stop_events: dict = field(default_factory=dict)
    segment_runs: int = 0
    files_written: list = field(default_factory=list)
    workers: int = 1
    timings_s: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class DeviceResult:
    device_id: str
    cleaning: CleaningReport
    extraction: ExtractionReport
    trips: list[TripTrajectory]
    features: list[TripFeatureRow]
    events: dict[str, list[StopEvent]]
    runs: list[SegmentRun]
    summaries: list[TripSummary]


@contextlib.contextmanager
def _stage(name: str, summary: RunSummary):
    started = time.perf_counter()
    try:
        yield
    except PipelineError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    finally:
        elapsed = time.perf_counter() - started
        summary.timings_s[name] = round(summary.timings_s.get(name, 0.0) + elapsed, 6)
        log.info("stage=%s seconds=%.3f", name, elapsed)


def process_device(
    device_id: str,
    records: list[GpsRecord],
    route: RouteDefinition,
    config: PipelineConfig,
    match: bool,
) -> DeviceResult:
    """Everything that depends on a single vehicle's records."""
    cleaned, cleaning = clean(records, config)
    if cleaned:
        series = partition(cleaned, config)[0]
        trips, extraction = extract_trips(series, route, config)
    else:
        trips, extraction = [], ExtractionReport(no_departure=1)
    features = [trip_features(t) for t in trips]
    events: dict[str, list[StopEvent]] = {}
    runs: list[SegmentRun] = []
    summaries: list[TripSummary] = []
    if match:
        for trip in trips:
            evs = match_stops(trip, route.stops_for(trip.direction_id), config)
            trip_runs, trip_summary = derive(trip, evs)
            events[trip.trip_id] = evs
            runs.extend(trip_runs)
            summaries.append(trip_summary)
    return DeviceResult(device_id, cleaning, extraction, trips, features, events, runs, summaries)


def _process_chunk(args) -> list[DeviceResult]:
    chunk, route, config, match = args
    return [process_device(dev, list(recs), route, config, match) for dev, recs in chunk]


@contextlib.contextmanager
def worker_pool(workers: int):
    """A process pool for ``workers`` > 1, else None (run inline)."""
    if workers <= 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool


def _chunks(groups: list[tuple[str, list]], n: int) -> list[list[tuple[str, list]]]:
    """Contiguous chunks balanced by record count, in device order."""
    if not groups:
        return []
    n = max(1, min(n, len(groups)))
    total = sum(len(recs) for _, recs in groups)
    target = total / n
    chunks, current, size = [], [], 0
    for item in groups:
        current.append(item)
        size += len(item[1])
        if size >= target * (len(chunks) + 1) and len(chunks) < n - 1:
            chunks.append(current)
            current = []
    if current:
        chunks.append(current)
    return chunks


def run_devices(
    records,
    route: RouteDefinition,
    config: PipelineConfig,
    match: bool = True,
    pool: ProcessPoolExecutor | None = None,
) -> list[DeviceResult]:
    """Fan per-device work out to a process pool; results come back in device order.

    ``records`` is a list of GpsRecord or a RecordColumns. An existing
    ``pool`` is reused, otherwise one is started when more than one worker
    is configured.
    """
    if isinstance(records, RecordColumns):
        groups = records.by_device()
    else:
        by_device: dict[str, list[GpsRecord]] = {}
        for rec in records:
            by_device.setdefault(rec.device_id, []).append(rec)
        groups = sorted(by_device.items())
    workers = config.resolved_workers()
    if workers == 1 or len(groups) <= 1:
        return _process_chunk((groups, route, config, match))
    # columns pickle far faster than record objects
    groups = [(dev, RecordColumns.from_records(recs)) for dev, recs in groups]
    # several chunks per worker smooths out uneven device sizes
    chunks = _chunks(groups, workers * 4)
    with contextlib.ExitStack() as stack:
        if pool is None:
            pool = stack.enter_context(ProcessPoolExecutor(max_workers=workers))
        parts = pool.map(_process_chunk, [(c, route, config, match) for c in chunks])
        return [r for part in parts for r in part]


# -- output writers -------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_trip_tables(out: Path, results: list[DeviceResult]) -> list[str]:
    trips = [t for r in results for t in r.trips]
    _write_csv(
        out / "trips.csv",
        TRIP_COLUMNS,
        (
            (
                t.trip_id, t.device_id, int(t.direction_id), t.origin_terminal_id,
                t.destination_terminal_id, t.start_time, t.end_time, t.end_fallback, len(t.points),
            )
            for t in trips
        ),
    )
    _write_csv(
        out / "trip_features.csv",
        TRIP_FEATURE_COLUMNS,
        (
            (f.trip_id, f.duration_s, f.point_count, f.path_length_m, f.mean_speed_kmh)
            for r in results
            for f in r.features
        ),
    )
    return ["trips.csv", "trip_features.csv"]


def _write_stop_tables(out: Path, results: list[DeviceResult]) -> list[str]:
    def event_rows():
        for r in results:
            for t in r.trips:
                for e in r.events[t.trip_id]:
                    yield (
                        e.trip_id, e.stop_id, e.sequence_index,
                        "" if e.arrival_time is None else e.arrival_time,
                        "" if e.departure_time is None else e.departure_time,
                        "" if e.dwell_s is None else e.dwell_s,
                        e.scenario.value,
                        "" if e.match_distance_m is None else e.match_distance_m,
                    )

    _write_csv(out / "stop_events.csv", STOP_EVENT_COLUMNS, event_rows())
    _write_csv(
        out / "segment_runs.csv",
        ("trip_id", "segment_index", "from_stop_id", "to_stop_id", "run_time_s"),
        (
            (s.trip_id, s.segment_index, s.from_stop_id, s.to_stop_id, s.run_time_s)
            for r in results
            for s in r.runs
        ),
    )
    return ["stop_events.csv", "segment_runs.csv"]


@contextlib.contextmanager
def _atomic_dir(out_dir: Path):
    """Yield a scratch directory that replaces ``out_dir`` only on success."""
    out_dir = Path(out_dir)
    parent = out_dir.parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=parent))
    except OSError as exc:
        raise IoError(f"cannot create output directory near {out_dir}: {exc}", path=out_dir) from exc
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    old = None
    if out_dir.exists():
        old = parent / f"{tmp.name}.old"
        os.replace(out_dir, old)
    os.replace(tmp, out_dir)
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)


def _summarize_ingest(summary: RunSummary, records, rejects) -> None:
    summary.rows_read = len(records) + len(rejects)
    summary.rows_rejected = len(rejects)
    summary.rejects_by_reason = dict(sorted(Counter(r.reason for r in rejects).items()))


def _summarize_devices(summary: RunSummary, results: list[DeviceResult]) -> None:
    cleaning = CleaningReport()
    extraction = ExtractionReport()
    for r in results:
        cleaning = cleaning.merge(r.cleaning)
        extraction = extraction.merge(r.extraction)
    summary.cleaning = cleaning.to_dict()
    summary.devices = len(results)
    summary.trips = extraction.trips
    summary.trips_discarded = {
        k: v for k, v in extraction.to_dict().items() if k not in ("trips", "end_fallback")
    }
    summary.trips_discarded["end_fallback_kept"] = extraction.end_fallback


def _check_paths(*paths) -> None:
    for p in paths:
        if not Path(p).is_file():
            raise IoError(f"input file not found: {p}", path=p)


def run_trip_pipeline(
    gps_path,
    terminals_path,
    config: PipelineConfig | None = None,
    out_dir="out",
    mapping: FieldMapping | None = None,
) -> RunSummary:
    """Trip extraction only: writes trips.csv, trip_features.csv and summary.json."""
    config = config or PipelineConfig()
    summary = RunSummary()
    with _stage("config", summary):
        validate_config(config)
        summary.workers = config.resolved_workers()
    with worker_pool(summary.workers) as pool:
        with _stage("ingest", summary):
            _check_paths(gps_path, terminals_path)
            terminal_a, terminal_b = load_terminals(terminals_path, config.terminals_buffer_radius_m)
            route = _trip_only_route(terminal_a, terminal_b, config.route_id)
            records, rejects = load_gps_columns(
                gps_path, mapping, max_reject_ratio=config.max_reject_ratio, pool=pool
            )
            _summarize_ingest(summary, records, rejects)
        with _stage("extract", summary):
            results = run_devices(records, route, config, match=False, pool=pool)
            _summarize_devices(summary, results)
    with _stage("report", summary):
        out_dir = Path(out_dir)
        with _atomic_dir(out_dir) as tmp:
            summary.files_written = _write_trip_tables(tmp, results)
            summary.files_written.append("summary.json")
            (tmp / "summary.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    return summary


def _trip_only_route(terminal_a, terminal_b, route_id: str) -> RouteDefinition:
    # extraction only looks at terminals; placeholder stops satisfy the type
    out = StopPoint("_a", "", terminal_a.latitude, terminal_a.longitude, Direction.OUTBOUND, 1)
    inb = StopPoint("_b", "", terminal_b.latitude, terminal_b.longitude, Direction.INBOUND, 1)
    return RouteDefinition(route_id, terminal_a, terminal_b, (out,), (inb,))


def run_full_pipeline(
    gps_path,
    terminals_path,
    stops_path,
    config: PipelineConfig | None = None,
    out_dir="out",
    mapping: FieldMapping | None = None,
) -> RunSummary:
    """Full chain through GTFS emission.

    Output layout under ``out_dir``: ``gtfs/`` (static tables),
    ``trip_updates.jsonl``, the trip/stop CSV tables, ``geojson/`` when
    enabled, and ``summary.json``. The directory appears only after every
    stage succeeded.
    """
    config = config or PipelineConfig()
    summary = RunSummary()
    with _stage("config", summary):
        validate_config(config)
        summary.workers = config.resolved_workers()
    with worker_pool(summary.workers) as pool:
        with _stage("ingest", summary):
            _check_paths(gps_path, terminals_path, stops_path)
            route = load_route(
                terminals_path,
                stops_path,
                route_id=config.route_id,
                terminal_radius_m=config.terminals_buffer_radius_m,
            )
            records, rejects = load_gps_columns(
                gps_path, mapping, max_reject_ratio=config.max_reject_ratio, pool=pool
            )
            _summarize_ingest(summary, records, rejects)
        with _stage("process", summary):
            results = run_devices(records, route, config, match=True, pool=pool)
            _summarize_devices(summary, results)
            scenarios = Counter(
                e.scenario.value for r in results for evs in r.events.values() for e in evs
            )
            summary.stop_events = {s.value: scenarios.get(s.value, 0) for s in Scenario}
            summary.segment_runs = sum(len(r.runs) for r in results)

    trips = [t for r in results for t in r.trips]
    events = {k: v for r in results for k, v in r.events.items()}
    with _stage("report", summary):
        out_dir = Path(out_dir)
        with _atomic_dir(out_dir) as tmp:
            files = _write_trip_tables(tmp, results) + _write_stop_tables(tmp, results)
            bundle = emit_static(route, trips, events, tmp / "gtfs", config)
            if bundle.rows["trips.txt"] != summary.trips:
                raise IntegrityError(
                    f"{summary.trips} trips extracted but {bundle.rows['trips.txt']} in trips.txt"
                )
            files += [f"gtfs/{name}" for name in bundle.files]
            emit_trip_updates(trips, events, tmp / "trip_updates.jsonl", route.route_id, config.timezone)
            files.append("trip_updates.jsonl")
            if config.emit_geojson:
                export_geojson(trips, events, route, config, tmp / "geojson")
                files += sorted(f"geojson/{p.name}" for p in (tmp / "geojson").iterdir())
            files.append("summary.json")
            summary.files_written = files
            (tmp / "summary.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    return summary
