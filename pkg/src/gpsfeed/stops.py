"""Matching trip trajectories to stop arrival and departure events."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geo import haversine_array
from .model import PipelineConfig, StopPoint
from .trips import TripTrajectory


class Scenario(str, enum.Enum):
    ZERO_SPEED_IN_BUFFER = "ZeroSpeedInBuffer"
    PROXIMITY_NO_STOP = "ProximityNoStop"
    EXTENDED_BUFFER = "ExtendedBuffer"
    UNMATCHED = "Unmatched"


@dataclass(frozen=True)
class StopEvent:
    trip_id: str
    stop_id: str
    sequence_index: int
    scenario: Scenario
    arrival_time: float | None = None
    departure_time: float | None = None
    match_distance_m: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.scenario is Scenario.UNMATCHED:
            if self.arrival_time is not None or self.departure_time is not None:
                raise ValueError("an unmatched event carries no times")
            return
        if self.arrival_time is None or self.departure_time is None:
            raise ValueError("a matched event needs arrival and departure times")
        if self.arrival_time > self.departure_time:
            raise ValueError("arrival_time after departure_time")
        if self.scenario is not Scenario.ZERO_SPEED_IN_BUFFER and self.arrival_time != self.departure_time:
            raise ValueError(f"{self.scenario.value} events have zero dwell")

    @property
    def matched(self) -> bool:
        return self.scenario is not Scenario.UNMATCHED

    @property
    def dwell_s(self) -> float | None:
        if not self.matched:
            return None
        return self.departure_time - self.arrival_time


def match_stops(
    trip: TripTrajectory, stops: Sequence[StopPoint], config: PipelineConfig
) -> list[StopEvent]:
    """One event per stop, in sequence order.

    Points before the previous stop's departure are invisible to later stops.
    Within the stop buffer, the first zero-speed point is the arrival and the
    next moving point inside the same buffer visit is the departure. Without a
    zero-speed point the nearest in-buffer point gives a zero-dwell event. With
    no point in the buffer at all, the extended buffer is searched for the
    nearest point; failing that the stop is Unmatched and the cursor stays put.
    """
    points = trip.points
    n = len(points)
    lats = np.fromiter((p.latitude for p in points), float, n)
    lons = np.fromiter((p.longitude for p in points), float, n)
    times = np.fromiter((p.timestamp for p in points), float, n)
    speeds = np.fromiter((p.speed for p in points), float, n)
    zero = config.zero_speed_threshold
    radius = config.stops_buffer_radius_m
    extended = config.stops_extended_buffer_radius_m

    events: list[StopEvent] = []
    cursor = 0  # first visible index; times are strictly ascending
    for stop in stops:
        dist = haversine_array(lats[cursor:], lons[cursor:], (stop.latitude, stop.longitude))
        inside = dist <= radius
        base = dict(trip_id=trip.trip_id, stop_id=stop.stop_id, sequence_index=stop.sequence_index)

        if inside.any():
            stopped = np.flatnonzero(inside & (speeds[cursor:] <= zero))
            if stopped.size:
                arr = int(stopped[0])
                dep = arr
                j = arr + 1
                # walk the contiguous in-buffer run that follows the arrival
                while j < dist.size and inside[j]:
                    dep = j
                    if speeds[cursor + j] > zero:
                        break
                    j += 1
                event = StopEvent(
                    **base,
                    scenario=Scenario.ZERO_SPEED_IN_BUFFER,
                    arrival_time=float(times[cursor + arr]),
                    departure_time=float(times[cursor + dep]),
                    match_distance_m=float(dist[arr]),
                )
                cursor += dep
            else:
                k = int(np.argmin(np.where(inside, dist, np.inf)))
                event = StopEvent(
                    **base,
                    scenario=Scenario.PROXIMITY_NO_STOP,
                    arrival_time=float(times[cursor + k]),
                    departure_time=float(times[cursor + k]),
                    match_distance_m=float(dist[k]),
                )
                cursor += k
        else:
            wide = dist <= extended
            if wide.any():
                k = int(np.argmin(np.where(wide, dist, np.inf)))
                event = StopEvent(
                    **base,
                    scenario=Scenario.EXTENDED_BUFFER,
                    arrival_time=float(times[cursor + k]),
                    departure_time=float(times[cursor + k]),
                    match_distance_m=float(dist[k]),
                )
                cursor += k
            else:
                event = StopEvent(**base, scenario=Scenario.UNMATCHED)
        events.append(event)
    return events
