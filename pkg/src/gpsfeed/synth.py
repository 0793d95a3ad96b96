"""Synthetic GPS traces with exact ground truth for trips and stop visits.

Vehicles move in straight lines between consecutive route points (origin
terminal, stops, destination terminal) at a per-segment cruise speed, stand
still for the planned dwell at each stop, and lay over at terminals between
trips. Positions are sampled on a fixed grid, optionally jittered and with
dropout windows removed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ScenarioError
from .geo import EARTH_RADIUS_M, destination_point, haversine_m
from .model import Direction, GpsRecord, RouteDefinition, StopPoint, TerminalPoint


@dataclass(frozen=True)
class TripPlan:
    """One planned run. ``departure`` is when the vehicle leaves the origin
    terminal point; ``speeds_kmh`` has one entry per segment (stops + 1) or a
    single value used for every segment."""

    device_id: str
    direction: Direction
    departure: float
    dwell_s: Sequence[float]
    speeds_kmh: Sequence[float]


@dataclass(frozen=True)
class Dropout:
    start: float
    end: float
    device_id: str | None = None  # None: all devices

    def covers(self, device_id: str, t: np.ndarray) -> np.ndarray:
        if self.device_id is not None and self.device_id != device_id:
            return np.zeros(t.shape, dtype=bool)
        return (t >= self.start) & (t < self.end)


@dataclass(frozen=True)
class SyntheticScenario:
    route: RouteDefinition
    trips: Sequence[TripPlan]
    sampling_interval_s: float = 5.0
    dropouts: Sequence[Dropout] = ()
    jitter_std_m: float = 0.0
    seed: int = 0
    layover_s: float = 120.0
    route_id: str | None = None


@dataclass(frozen=True)
class StopTruth:
    stop_id: str
    sequence_index: int
    arrival: float
    departure: float


@dataclass(frozen=True)
class TripTruth:
    device_id: str
    direction: Direction
    t_start: float   # instant the vehicle leaves the origin terminal buffer
    t_end: float     # instant it comes to rest at the destination terminal
    departure: float
    stops: tuple[StopTruth, ...]


@dataclass
class GroundTruth:
    trips: list[TripTruth] = field(default_factory=list)

    def for_device(self, device_id: str) -> list[TripTruth]:
        return [t for t in self.trips if t.device_id == device_id]


@dataclass
class _Phase:
    start: float
    end: float
    a: tuple[float, float]
    b: tuple[float, float]
    speed: float


def _speeds(plan: TripPlan, segments: int) -> list[float]:
    speeds = list(plan.speeds_kmh)
    if len(speeds) == 1:
        speeds *= segments
    if len(speeds) != segments:
        raise ScenarioError(f"{plan.device_id}: expected {segments} segment speeds, got {len(speeds)}")
    if any(not s > 0 for s in speeds):
        raise ScenarioError(f"{plan.device_id}: cruise speeds must be > 0")
    return speeds


def _plan_phases(plan: TripPlan, route: RouteDefinition) -> tuple[list[_Phase], TripTruth]:
    origin, dest = route.terminals_for(plan.direction)
    stops = route.stops_for(plan.direction)
    if len(plan.dwell_s) != len(stops):
        raise ScenarioError(f"{plan.device_id}: expected {len(stops)} dwell values")
    if any(d < 0 for d in plan.dwell_s):
        raise ScenarioError(f"{plan.device_id}: dwell must be >= 0")
    nodes = [(origin.latitude, origin.longitude)]
    nodes += [(s.latitude, s.longitude) for s in stops]
    nodes.append((dest.latitude, dest.longitude))
    speeds = _speeds(plan, len(nodes) - 1)

    phases: list[_Phase] = []
    truths: list[StopTruth] = []
    t = plan.departure
    for k in range(len(nodes) - 1):
        a, b = nodes[k], nodes[k + 1]
        duration = haversine_m(a, b) / (speeds[k] / 3.6)
        if duration > 0:
            phases.append(_Phase(t, t + duration, a, b, speeds[k]))
        t += duration
        if k < len(stops):
            dwell = float(plan.dwell_s[k])
            truths.append(StopTruth(stops[k].stop_id, stops[k].sequence_index, t, t + dwell))
            if dwell > 0:
                phases.append(_Phase(t, t + dwell, b, b, 0.0))
            t += dwell
    t_start = _buffer_exit(phases, nodes[0], origin.buffer_radius_m, plan.departure)
    truth = TripTruth(plan.device_id, plan.direction, t_start, t, plan.departure, tuple(truths))
    return phases, truth


def _position(phase: _Phase, t: float) -> tuple[float, float]:
    span = phase.end - phase.start
    frac = 0.0 if span <= 0 else (t - phase.start) / span
    return (
        phase.a[0] + frac * (phase.b[0] - phase.a[0]),
        phase.a[1] + frac * (phase.b[1] - phase.a[1]),
    )


def _buffer_exit(phases: list[_Phase], center, radius_m: float, default: float) -> float:
    """First instant the path is farther than ``radius_m`` from ``center``."""
    for ph in phases:
        if haversine_m(_position(ph, ph.end), center) <= radius_m:
            continue
        lo, hi = ph.start, ph.end
        if haversine_m(_position(ph, lo), center) > radius_m:
            return lo
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if haversine_m(_position(ph, mid), center) <= radius_m:
                lo = mid
            else:
                hi = mid
        return lo
    return default


def _device_timeline(plans: list[TripPlan], route: RouteDefinition, layover: float):
    plans = sorted(plans, key=lambda p: p.departure)
    phases: list[_Phase] = []
    truths: list[TripTruth] = []
    prev_end = None
    prev_dest = None
    for plan in plans:
        origin, dest = route.terminals_for(plan.direction)
        trip_phases, truth = _plan_phases(plan, route)
        o = (origin.latitude, origin.longitude)
        if prev_end is None:
            phases.append(_Phase(plan.departure - layover, plan.departure, o, o, 0.0))
        else:
            if plan.departure <= prev_end:
                raise ScenarioError(
                    f"{plan.device_id}: trip departing {plan.departure} overlaps the previous "
                    f"trip ending {prev_end}"
                )
            if origin.terminal_id != prev_dest:
                raise ScenarioError(
                    f"{plan.device_id}: trip departing {plan.departure} starts at "
                    f"{origin.terminal_id} but the vehicle is at {prev_dest}"
                )
            phases.append(_Phase(prev_end, plan.departure, o, o, 0.0))
        phases.extend(trip_phases)
        truths.append(truth)
        prev_end = truth.t_end
        prev_dest = dest.terminal_id
        last = (dest.latitude, dest.longitude)
    phases.append(_Phase(prev_end, prev_end + layover, last, last, 0.0))
    return phases, truths


def synthesize(scenario: SyntheticScenario) -> tuple[list[GpsRecord], GroundTruth]:
    """Generate records (ordered by time, then device) and their ground truth."""
    if not scenario.sampling_interval_s > 0:
        raise ScenarioError("sampling_interval_s must be > 0")
    if scenario.jitter_std_m < 0:
        raise ScenarioError("jitter_std_m must be >= 0")
    route = scenario.route
    route_id = scenario.route_id or route.route_id
    rng = np.random.default_rng(scenario.seed)
    step = scenario.sampling_interval_s

    by_device: dict[str, list[TripPlan]] = {}
    for plan in scenario.trips:
        by_device.setdefault(plan.device_id, []).append(plan)

    truth = GroundTruth()
    columns = []
    for device_id in sorted(by_device):
        phases, truths = _device_timeline(by_device[device_id], route, scenario.layover_s)
        truth.trips.extend(truths)
        t0, t1 = phases[0].start, phases[-1].end
        times = t0 + step * np.arange(int(math.floor((t1 - t0) / step)) + 1)

        starts = np.array([p.start for p in phases])
        spans = np.array([p.end - p.start for p in phases])
        idx = np.searchsorted(starts, times, side="right") - 1
        frac = np.where(spans[idx] > 0, (times - starts[idx]) / np.where(spans[idx] > 0, spans[idx], 1.0), 0.0)
        frac = np.clip(frac, 0.0, 1.0)
        a = np.array([p.a for p in phases])[idx]
        b = np.array([p.b for p in phases])[idx]
        lat = a[:, 0] + frac * (b[:, 0] - a[:, 0])
        lon = a[:, 1] + frac * (b[:, 1] - a[:, 1])
        speed = np.array([p.speed for p in phases])[idx]

        if scenario.jitter_std_m > 0:
            north = rng.normal(0.0, scenario.jitter_std_m, times.size)
            east = rng.normal(0.0, scenario.jitter_std_m, times.size)
            lat = lat + np.degrees(north / EARTH_RADIUS_M)
            lon = lon + np.degrees(east / (EARTH_RADIUS_M * np.cos(np.radians(lat))))

        keep = np.ones(times.size, dtype=bool)
        for dropout in scenario.dropouts:
            keep &= ~dropout.covers(device_id, times)
        columns.append((device_id, times[keep], lat[keep], lon[keep], speed[keep]))

    records = [
        GpsRecord(device_id, float(t), float(la), float(lo), float(s), route_id)
        for device_id, times, lat, lon, speed in columns
        for t, la, lo, s in zip(times.tolist(), lat.tolist(), lon.tolist(), speed.tolist())
    ]
    records.sort(key=lambda r: (r.timestamp, r.device_id))
    truth.trips.sort(key=lambda t: (t.device_id, t.departure))
    return records, truth


# -- fixture builders ---------------------------------------------------------------

def straight_route(
    n_stops: int = 12,
    spacing_m: float = 600.0,
    origin: tuple[float, float] = (7.2906, 80.6337),
    bearing_deg: float = 60.0,
    terminal_gap_m: float = 500.0,
    inbound_offset_m: float = 20.0,
    terminal_radius_m: float = 100.0,
    route_id: str = "R1",
) -> RouteDefinition:
    """A straight two-terminal route with evenly spaced stops.

    Inbound stops sit ``inbound_offset_m`` to the side of the outbound ones.
    """
    length = 2 * terminal_gap_m + (n_stops - 1) * spacing_m
    a = origin
    b = destination_point(a, bearing_deg, length)
    ta = TerminalPoint("TA", "Terminal A", a[0], a[1], terminal_radius_m)
    tb = TerminalPoint("TB", "Terminal B", b[0], b[1], terminal_radius_m)
    outbound, inbound = [], []
    for k in range(n_stops):
        p = destination_point(a, bearing_deg, terminal_gap_m + k * spacing_m)
        outbound.append(StopPoint(f"S{k + 1:02d}", f"Stop {k + 1}", p[0], p[1], Direction.OUTBOUND, k + 1))
    for k in range(n_stops):
        base = outbound[n_stops - 1 - k]
        q = destination_point((base.latitude, base.longitude), bearing_deg + 90.0, inbound_offset_m)
        inbound.append(
            StopPoint(f"S{n_stops - k:02d}R", f"Stop {n_stops - k} (return)", q[0], q[1], Direction.INBOUND, k + 1)
        )
    return RouteDefinition(route_id, ta, tb, outbound, inbound)


def trip_duration(route: RouteDefinition, plan: TripPlan) -> float:
    _, truth = _plan_phases(plan, route)
    return truth.t_end - plan.departure


def random_schedule(
    route: RouteDefinition,
    devices: Sequence[str],
    trips_per_device: int,
    start: float,
    rng: np.random.Generator,
    dwell_range: tuple[float, float] = (10.0, 60.0),
    speed_range: tuple[float, float] = (15.0, 40.0),
    layover_range: tuple[float, float] = (120.0, 600.0),
    align: float = 1.0,
) -> list[TripPlan]:
    """Alternating back-and-forth plans for each device.

    Departures are rounded up to multiples of ``align`` seconds.
    """
    plans = []
    for n, device_id in enumerate(devices):
        t = start + n * 37.0
        direction = Direction.OUTBOUND if n % 2 == 0 else Direction.INBOUND
        for _ in range(trips_per_device):
            t = math.ceil(t / align) * align
            stops = route.stops_for(direction)
            plan = TripPlan(
                device_id=device_id,
                direction=direction,
                departure=t,
                dwell_s=[round(float(rng.uniform(*dwell_range))) for _ in stops],
                speeds_kmh=[round(float(rng.uniform(*speed_range)), 1) for _ in range(len(stops) + 1)],
            )
            plans.append(plan)
            t += trip_duration(route, plan) + float(rng.uniform(*layover_range))
            direction = Direction(1 - direction)
    return plans


def _format_time(t: float, timestamp_format: str) -> str:
    if timestamp_format == "epoch_s":
        return str(int(t)) if float(t).is_integer() else repr(t)
    dt = datetime.fromtimestamp(t, timezone.utc)
    return dt.isoformat(timespec="seconds" if float(t).is_integer() else "microseconds")


def write_gps_csv(records: Sequence[GpsRecord], path, timestamp_format: str = "iso8601") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["device_id", "timestamp", "latitude", "longitude", "speed", "route_id"])
        for r in records:
            writer.writerow(
                [
                    r.device_id,
                    _format_time(r.timestamp, timestamp_format),
                    repr(r.latitude),
                    repr(r.longitude),
                    repr(r.speed),
                    r.route_id or "",
                ]
            )


def write_route_csv(route: RouteDefinition, terminals_path, stops_path) -> None:
    with open(terminals_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["terminal_id", "name", "latitude", "longitude"])
        for t in (route.terminal_a, route.terminal_b):
            writer.writerow([t.terminal_id, t.name, repr(t.latitude), repr(t.longitude)])
    with open(stops_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stop_id", "name", "latitude", "longitude", "direction_id", "sequence_index"])
        for s in route.stops_outbound + route.stops_inbound:
            writer.writerow(
                [s.stop_id, s.name, repr(s.latitude), repr(s.longitude), int(s.direction_id), s.sequence_index]
            )


def write_fixture(scenario: SyntheticScenario, out_dir, timestamp_format: str = "iso8601"):
    """Synthesize and write gps.csv, terminals.csv and stops.csv.

    Returns (paths dict, records, ground truth).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, truth = synthesize(scenario)
    paths = {
        "gps": out_dir / "gps.csv",
        "terminals": out_dir / "terminals.csv",
        "stops": out_dir / "stops.csv",
    }
    write_gps_csv(records, paths["gps"], timestamp_format)
    write_route_csv(scenario.route, paths["terminals"], paths["stops"])
    return paths, records, truth
