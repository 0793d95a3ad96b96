"""GTFS static tables and a line-delimited trip-updates feed."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Mapping, Sequence
from zoneinfo import ZoneInfo

from .errors import IntegrityError, IoError
from .model import PipelineConfig, RouteDefinition
from .stops import Scenario, StopEvent
from .trips import TripTrajectory

GTFS_FIELDS = {
    "agency.txt": ("agency_id", "agency_name", "agency_url", "agency_timezone"),
    "routes.txt": ("route_id", "agency_id", "route_short_name", "route_long_name", "route_type"),
    "stops.txt": ("stop_id", "stop_name", "stop_lat", "stop_lon"),
    "trips.txt": ("route_id", "service_id", "trip_id", "direction_id"),
    "stop_times.txt": (
        "trip_id",
        "arrival_time",
        "departure_time",
        "stop_id",
        "stop_sequence",
        "timepoint",
    ),
    "calendar.txt": (
        "service_id",
        "monday",
        "tuesday",
        "wednesday",
        "thursday",
        "friday",
        "saturday",
        "sunday",
        "start_date",
        "end_date",
    ),
}
ROUTE_TYPE_BUS = 3
AGENCY_ID = "agency"


@dataclass
class GtfsBundle:
    """Manifest of a written feed: file name -> data row count."""

    out_dir: Path
    rows: dict[str, int] = field(default_factory=dict)
    trip_updates_path: Path | None = None
    trip_update_entities: int = 0

    @property
    def files(self) -> list[str]:
        return sorted(self.rows)


# -- service-day clock -------------------------------------------------------

def service_date(epoch: float, tz: ZoneInfo) -> date:
    return datetime.fromtimestamp(epoch, tz).date()


def service_day_origin(day: date, tz: ZoneInfo) -> float:
    """Epoch of "noon minus 12h" on ``day``, the zero point of GTFS times."""
    noon = datetime.combine(day, time(12), tzinfo=tz)
    return noon.timestamp() - 12 * 3600


def format_gtfs_time(seconds: int) -> str:
    hours, rem = divmod(int(seconds), 3600)
    minutes, secs = divmod(rem, 60)
    return f"{hours:02d}:{minutes:02d}:{secs:02d}"


def parse_gtfs_time(text: str) -> int:
    hours, minutes, secs = (int(part) for part in text.split(":"))
    return hours * 3600 + minutes * 60 + secs


def to_gtfs_time(epoch: float, day: date, tz: ZoneInfo) -> str:
    """Clock string on the service day; hours run past 24 after midnight."""
    return format_gtfs_time(math.floor(epoch - service_day_origin(day, tz)))


def from_gtfs_time(text: str, day: date, tz: ZoneInfo) -> float:
    return service_day_origin(day, tz) + parse_gtfs_time(text)


# -- static feed ----------------------------------------------------------------

def _ordered_trips(trips: Sequence[TripTrajectory]) -> list[TripTrajectory]:
    return sorted(trips, key=lambda t: (t.device_id, t.start_time, t.trip_id))


def _check_integrity(route, trips, events) -> None:
    trip_ids = [t.trip_id for t in trips]
    if len(set(trip_ids)) != len(trip_ids):
        raise IntegrityError("duplicate trip_id among trips")
    known_trips = set(trip_ids)
    known_stops = {s.stop_id for s in route.all_stops()}
    for trip_id, evs in events.items():
        if trip_id not in known_trips:
            raise IntegrityError(f"stop events reference unknown trip {trip_id}")
        seqs = [e.sequence_index for e in evs]
        if seqs != sorted(seqs) or len(set(seqs)) != len(seqs):
            raise IntegrityError(f"stop events of {trip_id} are not in sequence order")
        for e in evs:
            if e.stop_id not in known_stops:
                raise IntegrityError(f"trip {trip_id} references unknown stop {e.stop_id}")


def _write_table(path: Path, header, rows) -> int:
    count = 0
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(row)
                count += 1
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}", path=path) from exc
    return count


def _coord(value: float) -> str:
    return repr(float(value))


def emit_static(
    route: RouteDefinition,
    trips: Sequence[TripTrajectory],
    events: Mapping[str, Sequence[StopEvent]],
    out_dir,
    config: PipelineConfig | None = None,
) -> GtfsBundle:
    """Write the six GTFS tables to ``out_dir`` and verify them by re-reading."""
    config = config or PipelineConfig()
    tz = ZoneInfo(config.timezone)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}", path=out_dir) from exc
    trips = _ordered_trips(trips)
    _check_integrity(route, trips, events)

    bundle = GtfsBundle(out_dir)
    bundle.rows["agency.txt"] = _write_table(
        out_dir / "agency.txt",
        GTFS_FIELDS["agency.txt"],
        [(AGENCY_ID, config.agency_name, config.agency_url, config.timezone)],
    )
    long_name = f"{route.terminal_a.name} - {route.terminal_b.name}"
    bundle.rows["routes.txt"] = _write_table(
        out_dir / "routes.txt",
        GTFS_FIELDS["routes.txt"],
        [(route.route_id, AGENCY_ID, route.route_id, long_name, ROUTE_TYPE_BUS)],
    )
    bundle.rows["stops.txt"] = _write_table(
        out_dir / "stops.txt",
        GTFS_FIELDS["stops.txt"],
        [(s.stop_id, s.name, _coord(s.latitude), _coord(s.longitude)) for s in route.all_stops()],
    )

    days = {t.trip_id: service_date(t.start_time, tz) for t in trips}
    bundle.rows["trips.txt"] = _write_table(
        out_dir / "trips.txt",
        GTFS_FIELDS["trips.txt"],
        [
            (route.route_id, days[t.trip_id].strftime("%Y%m%d"), t.trip_id, int(t.direction_id))
            for t in trips
        ],
    )

    def stop_time_rows():
        for t in trips:
            day = days[t.trip_id]
            for e in events.get(t.trip_id, ()):
                if e.matched:
                    arr = to_gtfs_time(e.arrival_time, day, tz)
                    dep = to_gtfs_time(e.departure_time, day, tz)
                    yield (t.trip_id, arr, dep, e.stop_id, e.sequence_index, 1)
                else:
                    yield (t.trip_id, "", "", e.stop_id, e.sequence_index, 0)

    bundle.rows["stop_times.txt"] = _write_table(
        out_dir / "stop_times.txt", GTFS_FIELDS["stop_times.txt"], stop_time_rows()
    )

    def calendar_rows():
        for day in sorted(set(days.values())):
            flags = [1 if day.weekday() == k else 0 for k in range(7)]
            stamp = day.strftime("%Y%m%d")
            yield (stamp, *flags, stamp, stamp)

    bundle.rows["calendar.txt"] = _write_table(
        out_dir / "calendar.txt", GTFS_FIELDS["calendar.txt"], calendar_rows()
    )
    validate_static(out_dir)
    return bundle


def read_static(out_dir) -> dict[str, list[dict[str, str]]]:
    """Load every GTFS table in ``out_dir`` as lists of row dicts."""
    out_dir = Path(out_dir)
    tables = {}
    for name, expected in GTFS_FIELDS.items():
        path = out_dir / name
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                if tuple(reader.fieldnames or ()) != expected:
                    raise IntegrityError(f"{name}: unexpected header {reader.fieldnames}")
                tables[name] = list(reader)
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}", path=path) from exc
    return tables


def validate_static(out_dir) -> dict[str, list[dict[str, str]]]:
    """Re-read a written feed and check references, ordering and time order."""
    tables = read_static(out_dir)
    route_ids = {r["route_id"] for r in tables["routes.txt"]}
    stop_ids = {s["stop_id"] for s in tables["stops.txt"]}
    service_ids = {c["service_id"] for c in tables["calendar.txt"]}
    trip_ids = set()
    for t in tables["trips.txt"]:
        if t["route_id"] not in route_ids:
            raise IntegrityError(f"trip {t['trip_id']} references unknown route {t['route_id']}")
        if t["service_id"] not in service_ids:
            raise IntegrityError(f"trip {t['trip_id']} references unknown service {t['service_id']}")
        if t["trip_id"] in trip_ids:
            raise IntegrityError(f"duplicate trip_id {t['trip_id']}")
        trip_ids.add(t["trip_id"])

    finished: set[str] = set()
    current = None
    last_seq = 0
    for row in tables["stop_times.txt"]:
        trip_id = row["trip_id"]
        if trip_id not in trip_ids:
            raise IntegrityError(f"stop_times references unknown trip {trip_id}")
        if row["stop_id"] not in stop_ids:
            raise IntegrityError(f"stop_times references unknown stop {row['stop_id']}")
        seq = int(row["stop_sequence"])
        if trip_id != current:
            if trip_id in finished:
                raise IntegrityError(f"stop_times rows of {trip_id} are not contiguous")
            if current is not None:
                finished.add(current)
            current, last_seq = trip_id, 0
        if seq <= last_seq:
            raise IntegrityError(f"stop_sequence not increasing in {trip_id}")
        last_seq = seq
        arr, dep = row["arrival_time"], row["departure_time"]
        if bool(arr) != bool(dep):
            raise IntegrityError(f"half-filled times in {trip_id} seq {seq}")
        if arr and parse_gtfs_time(arr) > parse_gtfs_time(dep):
            raise IntegrityError(f"arrival after departure in {trip_id} seq {seq}")
    return tables


def stop_events_from_static(out_dir, timezone: str = "UTC") -> dict[str, list[tuple]]:
    """Per trip: (stop_id, sequence, arrival epoch, departure epoch) from stop_times.

    Unmatched rows come back with ``None`` times.
    """
    tz = ZoneInfo(timezone)
    tables = read_static(out_dir)
    days = {
        t["trip_id"]: datetime.strptime(t["service_id"], "%Y%m%d").date()
        for t in tables["trips.txt"]
    }
    out: dict[str, list[tuple]] = {}
    for row in tables["stop_times.txt"]:
        day = days[row["trip_id"]]
        arr = from_gtfs_time(row["arrival_time"], day, tz) if row["arrival_time"] else None
        dep = from_gtfs_time(row["departure_time"], day, tz) if row["departure_time"] else None
        out.setdefault(row["trip_id"], []).append(
            (row["stop_id"], int(row["stop_sequence"]), arr, dep)
        )
    return out


# -- realtime feed ----------------------------------------------------------------

def trip_update_entity(trip: TripTrajectory, events: Sequence[StopEvent], route_id: str, tz) -> dict:
    updates = []
    for e in events:
        if not e.matched:
            continue
        updates.append(
            {
                "stop_sequence": e.sequence_index,
                "stop_id": e.stop_id,
                "arrival": {"time": math.floor(e.arrival_time)},
                "departure": {"time": math.floor(e.departure_time)},
                "scenario": e.scenario.value,
                "match_distance_m": e.match_distance_m,
            }
        )
    return {
        "id": trip.trip_id,
        "trip_update": {
            "trip_descriptor": {
                "trip_id": trip.trip_id,
                "route_id": route_id,
                "direction_id": int(trip.direction_id),
                "start_date": service_date(trip.start_time, tz).strftime("%Y%m%d"),
            },
            "vehicle": {"id": trip.device_id},
            "timestamp": math.floor(trip.end_time),
            "stop_time_update": updates,
        },
    }


def emit_trip_updates(
    trips: Sequence[TripTrajectory],
    events: Mapping[str, Sequence[StopEvent]],
    out_path,
    route_id: str = "route",
    timezone: str = "UTC",
) -> int:
    """Write one JSON trip-update entity per line; returns the entity count."""
    tz = ZoneInfo(timezone)
    out_path = Path(out_path)
    count = 0
    try:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            for trip in _ordered_trips(trips):
                entity = trip_update_entity(trip, events.get(trip.trip_id, ()), route_id, tz)
                fh.write(json.dumps(entity, separators=(",", ":"), ensure_ascii=False))
                fh.write("\n")
                count += 1
    except OSError as exc:
        raise IoError(f"cannot write {out_path}: {exc}", path=out_path) from exc
    return count


def read_trip_updates(path) -> dict[str, list[StopEvent]]:
    """Parse a trip-updates file back into matched StopEvents per trip."""
    out: dict[str, list[StopEvent]] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entity = json.loads(line)
                trip_id = entity["trip_update"]["trip_descriptor"]["trip_id"]
                out[trip_id] = [
                    StopEvent(
                        trip_id=trip_id,
                        stop_id=u["stop_id"],
                        sequence_index=u["stop_sequence"],
                        scenario=Scenario(u["scenario"]),
                        arrival_time=float(u["arrival"]["time"]),
                        departure_time=float(u["departure"]["time"]),
                        match_distance_m=u["match_distance_m"],
                    )
                    for u in entity["trip_update"]["stop_time_update"]
                ]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}", path=path) from exc
    return out
