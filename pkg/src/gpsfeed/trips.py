"""Terminal-to-terminal trip extraction from per-device series."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .columns import RecordColumns
from .geo import consecutive_distances, haversine_array
from .model import Direction, GpsRecord, PipelineConfig, RouteDefinition
from .preprocessing import DeviceSeries

_A, _B = 0, 1


@dataclass(frozen=True)
class TripTrajectory:
    trip_id: str
    device_id: str
    direction_id: Direction
    origin_terminal_id: str
    destination_terminal_id: str
    start_time: float
    end_time: float
    points: Sequence[GpsRecord]  # a tuple, or RecordColumns after crossing a process boundary
    end_fallback: bool = False

    def __post_init__(self):
        if not self.start_time < self.end_time:
            raise ValueError(f"trip {self.trip_id}: start_time must precede end_time")
        if self.origin_terminal_id == self.destination_terminal_id:
            raise ValueError(f"trip {self.trip_id}: origin equals destination")
        if self.points[0].timestamp != self.start_time or self.points[-1].timestamp != self.end_time:
            raise ValueError(f"trip {self.trip_id}: points do not span [start, end]")

    @property
    def duration_s(self) -> float:
        return self.end_time - self.start_time

    def __reduce__(self):
        # points travel between processes column-wise and come back as a lazy sequence
        return (
            TripTrajectory,
            (
                self.trip_id, self.device_id, self.direction_id, self.origin_terminal_id,
                self.destination_terminal_id, self.start_time, self.end_time,
                RecordColumns.from_records(self.points), self.end_fallback,
            ),
        )


@dataclass
class ExtractionReport:
    trips: int = 0
    no_departure: int = 0
    incomplete: int = 0
    gap: int = 0
    too_few_points: int = 0
    too_short: int = 0
    end_fallback: int = 0

    @property
    def discarded(self) -> int:
        return (
            self.incomplete + self.gap + self.too_few_points + self.too_short
        )

    def merge(self, other: "ExtractionReport") -> "ExtractionReport":
        return ExtractionReport(**{k: v + getattr(other, k) for k, v in asdict(self).items()})

    def to_dict(self) -> dict:
        return asdict(self)


def make_trip_id(device_id: str, start_time: float) -> str:
    return f"{device_id}:{int(start_time)}"


def terminal_membership(series: DeviceSeries, route: RouteDefinition, radius_m: float) -> np.ndarray:
    """Per record: 0 inside terminal A, 1 inside terminal B, -1 elsewhere.

    A record inside both buffers goes to the nearer terminal.
    """
    n = len(series.records)
    if n == 0:
        return np.empty(0, dtype=np.int8)
    lats = np.fromiter((r.latitude for r in series.records), float, n)
    lons = np.fromiter((r.longitude for r in series.records), float, n)
    ta, tb = route.terminal_a, route.terminal_b
    da = haversine_array(lats, lons, (ta.latitude, ta.longitude))
    db = haversine_array(lats, lons, (tb.latitude, tb.longitude))
    in_a = da <= radius_m
    in_b = db <= radius_m
    out = np.full(n, -1, dtype=np.int8)
    out[in_a] = _A
    out[in_b & (~in_a | (db < da))] = _B
    return out


def extract_trips(
    series: DeviceSeries, route: RouteDefinition, config: PipelineConfig
) -> tuple[list[TripTrajectory], ExtractionReport]:
    """Split one device's series into terminal-to-terminal trips.

    A trip opens when the vehicle leaves a terminal buffer; its start is the
    last record inside that buffer. It closes at the first record inside the
    opposite buffer with speed at or below the zero-speed threshold. A vehicle
    that crosses the destination buffer without such a record gets its last
    in-buffer record as the end and the trip is flagged ``end_fallback``.
    """
    report = ExtractionReport()
    records = series.records
    member = terminal_membership(series, route, config.terminals_buffer_radius_m).tolist()
    gaps = set(series.gap_indices)
    zero = config.zero_speed_threshold
    terminals = (route.terminal_a, route.terminal_b)

    trips: list[TripTrajectory] = []
    opened_any = False
    origin = None        # terminal whose buffer we are in / last left
    origin_last = None   # index of latest record inside ``origin``
    start = None         # index of the open trip's first record
    dest_last = None     # latest in-destination index of the open trip

    def close(end_idx: int, fallback: bool) -> None:
        pts = records[start : end_idx + 1]
        if len(pts) < config.min_trip_points:
            report.too_few_points += 1
            return
        duration = pts[-1].timestamp - pts[0].timestamp
        if duration <= 0 or duration < config.min_trip_duration_seconds:
            report.too_short += 1
            return
        o, d = terminals[origin], terminals[1 - origin]
        trips.append(
            TripTrajectory(
                trip_id=make_trip_id(series.device_id, pts[0].timestamp),
                device_id=series.device_id,
                direction_id=Direction.OUTBOUND if origin == _A else Direction.INBOUND,
                origin_terminal_id=o.terminal_id,
                destination_terminal_id=d.terminal_id,
                start_time=pts[0].timestamp,
                end_time=pts[-1].timestamp,
                points=tuple(pts),
                end_fallback=fallback,
            )
        )
        report.trips += 1
        report.end_fallback += fallback

    for i, rec in enumerate(records):
        term = member[i]
        if i in gaps:
            # continuity lost: nothing spans the gap
            if start is not None:
                if dest_last is not None:
                    close(dest_last, fallback=True)
                else:
                    report.gap += 1
                start = dest_last = None
            origin, origin_last = (term, i) if term >= 0 else (None, None)
            continue

        if start is None:
            if term >= 0:
                origin, origin_last = term, i
            elif origin is not None:
                start, dest_last = origin_last, None
                opened_any = True
            continue

        dest = 1 - origin
        if term == dest:
            if rec.speed <= zero:
                close(i, fallback=False)
                start = dest_last = None
                origin, origin_last = dest, i
            else:
                dest_last = i
        elif dest_last is not None:
            # left the destination buffer without a zero-speed record
            close(dest_last, fallback=True)
            start = None
            origin, origin_last = dest, dest_last
            if term >= 0:
                origin, origin_last, dest_last = term, i, None
            else:
                # the exit itself opens the next trip
                start, dest_last = origin_last, None
        elif term == origin:
            # back at the origin without reaching the destination
            report.incomplete += 1
            start = None
            origin_last = i

    if start is not None:
        if dest_last is not None:
            close(dest_last, fallback=True)
        else:
            report.incomplete += 1
    if not opened_any:
        report.no_departure += 1

    trips.sort(key=lambda t: t.start_time)
    return trips, report


@dataclass(frozen=True)
class TripFeatureRow:
    trip_id: str
    duration_s: float
    point_count: int
    path_length_m: float
    mean_speed_kmh: float


def trip_features(trip: TripTrajectory) -> TripFeatureRow:
    n = len(trip.points)
    lats = np.fromiter((p.latitude for p in trip.points), float, n)
    lons = np.fromiter((p.longitude for p in trip.points), float, n)
    length = float(consecutive_distances(lats, lons).sum())
    duration = trip.end_time - trip.start_time
    return TripFeatureRow(
        trip_id=trip.trip_id,
        duration_s=duration,
        point_count=n,
        path_length_m=length,
        mean_speed_kmh=3.6 * length / duration,
    )
