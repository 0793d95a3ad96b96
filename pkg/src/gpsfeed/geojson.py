"""GeoJSON layers for inspecting trips, buffers and matched stop events."""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Mapping, Sequence

from .errors import IoError
from .geo import circle_ring
from .model import PipelineConfig, RouteDefinition
from .stops import StopEvent
from .trips import TripTrajectory

RING_VERTICES = 64


def _feature(geometry: dict, properties: dict) -> dict:
    return {"type": "Feature", "geometry": geometry, "properties": properties}


def _point(lat: float, lon: float) -> dict:
    return {"type": "Point", "coordinates": [lon, lat]}


def _buffer(lat: float, lon: float, radius_m: float) -> dict:
    ring = circle_ring((lat, lon), radius_m, RING_VERTICES)
    return {"type": "Polygon", "coordinates": [[[p.longitude, p.latitude] for p in ring]]}


def _collection(features: list, **properties) -> dict:
    doc = {"type": "FeatureCollection", "features": features}
    if properties:
        doc["properties"] = properties
    return doc


def _stop_features(stops, radius_m: float) -> tuple[list, list]:
    points, buffers = [], []
    for s in stops:
        props = {
            "kind": "stop",
            "stop_id": s.stop_id,
            "name": s.name,
            "direction_id": int(s.direction_id),
            "sequence_index": s.sequence_index,
        }
        points.append(_feature(_point(s.latitude, s.longitude), props))
        buffers.append(
            _feature(
                _buffer(s.latitude, s.longitude, radius_m),
                {"kind": "stop_buffer", "stop_id": s.stop_id, "radius_m": radius_m},
            )
        )
    return points, buffers


def route_collection(route: RouteDefinition, config: PipelineConfig) -> dict:
    features = []
    for t in (route.terminal_a, route.terminal_b):
        features.append(
            _feature(
                _point(t.latitude, t.longitude),
                {"kind": "terminal", "stop_id": t.terminal_id, "name": t.name},
            )
        )
        features.append(
            _feature(
                _buffer(t.latitude, t.longitude, config.terminals_buffer_radius_m),
                {
                    "kind": "terminal_buffer",
                    "stop_id": t.terminal_id,
                    "radius_m": config.terminals_buffer_radius_m,
                },
            )
        )
    for direction_stops in (route.stops_outbound, route.stops_inbound):
        points, buffers = _stop_features(direction_stops, config.stops_buffer_radius_m)
        features.extend(points)
        features.extend(buffers)
    return _collection(features, route_id=route.route_id)


def trip_collection(
    trip: TripTrajectory,
    events: Sequence[StopEvent],
    route: RouteDefinition,
    config: PipelineConfig,
) -> dict:
    line = {
        "type": "LineString",
        "coordinates": [[p.longitude, p.latitude] for p in trip.points],
    }
    features = [
        _feature(
            line,
            {
                "kind": "trajectory",
                "trip_id": trip.trip_id,
                "device_id": trip.device_id,
                "direction_id": int(trip.direction_id),
                "start_time": trip.start_time,
                "end_time": trip.end_time,
            },
        )
    ]
    stops = route.stops_for(trip.direction_id)
    points, buffers = _stop_features(stops, config.stops_buffer_radius_m)
    features.extend(points)
    features.extend(buffers)

    by_time = {p.timestamp: p for p in trip.points}
    for e in events:
        if not e.matched:
            continue
        p = by_time[e.arrival_time]
        features.append(
            _feature(
                _point(p.latitude, p.longitude),
                {
                    "kind": "stop_event",
                    "trip_id": trip.trip_id,
                    "stop_id": e.stop_id,
                    "scenario": e.scenario.value,
                    "arrival_time": e.arrival_time,
                    "departure_time": e.departure_time,
                    "dwell_s": e.dwell_s,
                },
            )
        )
    return _collection(features, trip_id=trip.trip_id)


def _safe_name(trip_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", trip_id)


def _dump(doc: dict, path: Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, separators=(",", ":"), ensure_ascii=False)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}", path=path) from exc


def export_geojson(
    trips: Sequence[TripTrajectory],
    events: Mapping[str, Sequence[StopEvent]],
    route: RouteDefinition,
    config: PipelineConfig,
    out_path,
) -> int:
    """Write ``route.geojson`` plus one ``trip_<id>.geojson`` per trip.

    Returns the total number of features written.
    """
    out_dir = Path(out_path)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}", path=out_dir) from exc

    doc = route_collection(route, config)
    _dump(doc, out_dir / "route.geojson")
    total = len(doc["features"])
    for trip in sorted(trips, key=lambda t: (t.device_id, t.start_time)):
        doc = trip_collection(trip, events.get(trip.trip_id, ()), route, config)
        _dump(doc, out_dir / f"trip_{_safe_name(trip.trip_id)}.geojson")
        total += len(doc["features"])
    return total
