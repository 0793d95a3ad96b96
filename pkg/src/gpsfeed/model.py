"""Domain types, input field mapping and the pipeline configuration."""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

from .errors import ConfigError, ValidationError


class Direction(enum.IntEnum):
    """Travel direction; values double as GTFS ``direction_id``."""

    OUTBOUND = 0  # terminal A -> terminal B
    INBOUND = 1

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, Direction):
            return value
        text = str(value).strip().lower()
        if text in ("0", "outbound", "out"):
            return cls.OUTBOUND
        if text in ("1", "inbound", "in"):
            return cls.INBOUND
        raise ValidationError(f"unknown direction {value!r}")


def _check_coordinates(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise ValidationError(f"coordinates out of range: ({lat}, {lon})")


def check_record_fields(device_id: str, timestamp: float, lat: float, lon: float, speed: float) -> None:
    if not device_id:
        raise ValidationError("device_id must be non-empty")
    _check_coordinates(lat, lon)  # NaN fails both comparisons
    if not speed >= 0.0:
        raise ValidationError(f"speed must be >= 0, got {speed}")
    if not math.isfinite(timestamp):
        raise ValidationError("timestamp must be finite")


@dataclass(frozen=True, slots=True)
class GpsRecord:
    """One vehicle position fix.

    ``timestamp`` is UTC epoch seconds and ``speed`` is km/h.
    """

    device_id: str
    timestamp: float
    latitude: float
    longitude: float
    speed: float
    route_id: str | None = None

    def __post_init__(self):
        check_record_fields(self.device_id, self.timestamp, self.latitude, self.longitude, self.speed)

    def __reduce__(self):
        # the default slots pickling goes through a per-field state dict,
        # which dominates worker transfer cost
        return (GpsRecord, (self.device_id, self.timestamp, self.latitude, self.longitude, self.speed, self.route_id))


@dataclass(frozen=True)
class TerminalPoint:
    terminal_id: str
    name: str
    latitude: float
    longitude: float
    buffer_radius_m: float = 100.0

    def __post_init__(self):
        _check_coordinates(self.latitude, self.longitude)
        if not self.buffer_radius_m > 0:
            raise ValidationError("terminal buffer radius must be > 0")


@dataclass(frozen=True)
class StopPoint:
    stop_id: str
    name: str
    latitude: float
    longitude: float
    direction_id: Direction
    sequence_index: int

    def __post_init__(self):
        _check_coordinates(self.latitude, self.longitude)
        object.__setattr__(self, "direction_id", Direction.parse(self.direction_id))
        if self.sequence_index < 1:
            raise ValidationError(f"sequence_index must be >= 1 (stop {self.stop_id})")


def _check_stop_list(stops: tuple[StopPoint, ...], direction: Direction) -> None:
    if not stops:
        raise ValidationError(f"{direction.name.lower()} stop list is empty")
    for expected, stop in enumerate(stops, start=1):
        if stop.direction_id is not direction:
            raise ValidationError(f"stop {stop.stop_id} listed under the wrong direction")
        if stop.sequence_index != expected:
            raise ValidationError(
                f"{direction.name.lower()} sequence must run 1..n without gaps or "
                f"duplicates; stop {stop.stop_id} has {stop.sequence_index}, expected {expected}"
            )


@dataclass(frozen=True)
class RouteDefinition:
    """Two terminals plus the ordered stop lists for each direction."""

    route_id: str
    terminal_a: TerminalPoint
    terminal_b: TerminalPoint
    stops_outbound: tuple[StopPoint, ...]
    stops_inbound: tuple[StopPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "stops_outbound", tuple(self.stops_outbound))
        object.__setattr__(self, "stops_inbound", tuple(self.stops_inbound))
        if self.terminal_a.terminal_id == self.terminal_b.terminal_id:
            raise ValidationError("terminal_a and terminal_b must differ")
        _check_stop_list(self.stops_outbound, Direction.OUTBOUND)
        _check_stop_list(self.stops_inbound, Direction.INBOUND)

    def stops_for(self, direction: Direction) -> tuple[StopPoint, ...]:
        return self.stops_outbound if direction is Direction.OUTBOUND else self.stops_inbound

    def terminals_for(self, direction: Direction) -> tuple[TerminalPoint, TerminalPoint]:
        """(origin, destination) for a direction."""
        if direction is Direction.OUTBOUND:
            return self.terminal_a, self.terminal_b
        return self.terminal_b, self.terminal_a

    def all_stops(self) -> list[StopPoint]:
        """Distinct stops, outbound first, first occurrence wins."""
        seen: dict[str, StopPoint] = {}
        for stop in self.stops_outbound + self.stops_inbound:
            seen.setdefault(stop.stop_id, stop)
        return list(seen.values())

    def with_terminal_radius(self, radius_m: float) -> "RouteDefinition":
        return replace(
            self,
            terminal_a=replace(self.terminal_a, buffer_radius_m=radius_m),
            terminal_b=replace(self.terminal_b, buffer_radius_m=radius_m),
        )


GPS_ROLES = ("device_id", "timestamp", "latitude", "longitude", "speed", "route_id")
MANDATORY_ROLES = GPS_ROLES[:-1]

TIMESTAMP_FORMATS = ("iso8601", "epoch_s", "epoch_ms")

# km/h per source unit
SPEED_UNITS = {"kmh": 1.0, "ms": 3.6, "mph": 1.609344, "knots": 1.852}


@dataclass(frozen=True)
class FieldMapping:
    """Maps canonical GPS roles to the column names used by a source file.

    ``timestamp_format`` is one of ``iso8601``, ``epoch_s``, ``epoch_ms`` or an
    explicit ``strptime`` pattern. Zone-less timestamps are shifted by
    ``utc_offset_hours`` to get UTC.
    """

    columns: Mapping[str, str] = field(
        default_factory=lambda: {role: role for role in GPS_ROLES}
    )
    timestamp_format: str = "iso8601"
    speed_unit: str = "kmh"
    utc_offset_hours: float = 0.0

    def __post_init__(self):
        columns = dict(self.columns)
        unknown = set(columns) - set(GPS_ROLES)
        if unknown:
            raise ConfigError(f"unknown field roles: {sorted(unknown)}")
        missing = [role for role in MANDATORY_ROLES if not columns.get(role)]
        if missing:
            raise ConfigError(f"field mapping lacks mandatory roles: {missing}")
        if columns.get("route_id") in (None, ""):
            columns.pop("route_id", None)
        if len(set(columns.values())) != len(columns):
            raise ConfigError("field mapping source columns must be distinct")
        if self.speed_unit not in SPEED_UNITS:
            raise ConfigError(f"unknown speed unit {self.speed_unit!r}")
        if self.timestamp_format not in TIMESTAMP_FORMATS and "%" not in self.timestamp_format:
            raise ConfigError(f"unknown timestamp format {self.timestamp_format!r}")
        object.__setattr__(self, "columns", columns)

    def to_canonical(self, header) -> list[str]:
        """Rename source columns to role names; unmapped columns pass through."""
        inverse = {src: role for role, src in self.columns.items()}
        return [inverse.get(name, name) for name in header]

    def to_source(self, header) -> list[str]:
        return [self.columns.get(name, name) for name in header]


@dataclass(frozen=True)
class PipelineConfig:
    terminals_buffer_radius_m: float = 100.0
    stops_buffer_radius_m: float = 50.0
    stops_extended_buffer_radius_m: float = 100.0
    zero_speed_threshold: float = 0.0
    max_gap_seconds: float = 900.0
    min_trip_points: int = 10
    min_trip_duration_seconds: float = 300.0
    worker_count: int | str = "auto"
    teleport_speed_kmh: float = 150.0
    max_reject_ratio: float = 0.10
    timezone: str = "UTC"
    agency_name: str = "Transit Agency"
    agency_url: str = "https://example.invalid"
    route_id: str = "route"
    emit_geojson: bool = False

    def resolved_workers(self) -> int:
        if self.worker_count == "auto":
            return os.cpu_count() or 1
        return int(self.worker_count)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def validate_config(config: PipelineConfig) -> PipelineConfig:
    """Return ``config`` unchanged, or raise ConfigError on the first violation."""
    for name in (
        "terminals_buffer_radius_m",
        "stops_buffer_radius_m",
        "stops_extended_buffer_radius_m",
    ):
        value = getattr(config, name)
        if not isinstance(value, (int, float)) or not value > 0:
            raise ConfigError(f"{name} must be > 0, got {value!r}")
    if config.stops_extended_buffer_radius_m < config.stops_buffer_radius_m:
        raise ConfigError(
            "stops_extended_buffer_radius_m must be >= stops_buffer_radius_m "
            f"({config.stops_extended_buffer_radius_m} < {config.stops_buffer_radius_m})"
        )
    if not config.zero_speed_threshold >= 0:
        raise ConfigError(f"zero_speed_threshold must be >= 0, got {config.zero_speed_threshold}")
    if not config.max_gap_seconds > 0:
        raise ConfigError("max_gap_seconds must be > 0")
    if not (isinstance(config.min_trip_points, int) and config.min_trip_points >= 2):
        raise ConfigError("min_trip_points must be an integer >= 2")
    if not config.min_trip_duration_seconds >= 0:
        raise ConfigError("min_trip_duration_seconds must be >= 0")
    workers = config.worker_count
    if workers != "auto" and not (isinstance(workers, int) and workers >= 1):
        raise ConfigError(f"worker_count must be a positive integer or 'auto', got {workers!r}")
    if not config.teleport_speed_kmh > 0:
        raise ConfigError("teleport_speed_kmh must be > 0")
    if not 0 <= config.max_reject_ratio <= 1:
        raise ConfigError("max_reject_ratio must lie in [0, 1]")
    try:
        from zoneinfo import ZoneInfo

        ZoneInfo(config.timezone)
    except Exception as exc:
        raise ConfigError(f"unknown timezone {config.timezone!r}") from exc
    return config


# Output schema of the trip-level tables written by the pipeline.
TRIP_COLUMNS = (
    "trip_id",
    "device_id",
    "direction_id",
    "origin_terminal_id",
    "destination_terminal_id",
    "start_time",
    "end_time",
    "end_fallback",
    "point_count",
)
TRIP_FEATURE_COLUMNS = (
    "trip_id",
    "duration_s",
    "point_count",
    "path_length_m",
    "mean_speed_kmh",
)
STOP_EVENT_COLUMNS = (
    "trip_id",
    "stop_id",
    "sequence_index",
    "arrival_time",
    "departure_time",
    "dwell_s",
    "scenario",
    "match_distance_m",
)
