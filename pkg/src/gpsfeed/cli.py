"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 integrity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .errors import ConfigError, PipelineError
from .model import FieldMapping, PipelineConfig
from .pipeline import run_full_pipeline, run_trip_pipeline

# flag dest -> PipelineConfig field
FLAG_FIELDS = {
    "terminal_radius": "terminals_buffer_radius_m",
    "stop_radius": "stops_buffer_radius_m",
    "stop_extended_radius": "stops_extended_buffer_radius_m",
    "zero_speed_threshold": "zero_speed_threshold",
    "max_gap": "max_gap_seconds",
    "min_trip_points": "min_trip_points",
    "min_trip_duration": "min_trip_duration_seconds",
    "workers": "worker_count",
    "timezone": "timezone",
    "emit_geojson": "emit_geojson",
    "max_reject_ratio": "max_reject_ratio",
    "route_id": "route_id",
}


def _workers(text: str):
    return text if text == "auto" else int(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gpsfeed",
        description="Turn raw transit GPS traces into trips, stop events and a GTFS feed.",
    )
    p.add_argument("--gps", required=True, help="raw GPS CSV")
    p.add_argument("--terminals", required=True, help="terminals CSV (exactly two rows)")
    p.add_argument("--stops", help="stops CSV; without it only trips are extracted")
    p.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    p.add_argument("--config", help="JSON file with config values; flags take precedence")
    p.add_argument("--mapping", help="JSON file with a field mapping for the GPS columns")
    p.add_argument("--terminal-radius", type=float)
    p.add_argument("--stop-radius", type=float)
    p.add_argument("--stop-extended-radius", type=float)
    p.add_argument("--zero-speed-threshold", type=float)
    p.add_argument("--max-gap", type=float)
    p.add_argument("--min-trip-points", type=int)
    p.add_argument("--min-trip-duration", type=float)
    p.add_argument("--max-reject-ratio", type=float)
    p.add_argument("--workers", type=_workers, help="worker processes or 'auto'")
    p.add_argument("--timezone", help="IANA zone of the service-day clock")
    p.add_argument("--route-id")
    p.add_argument("--emit-geojson", action="store_true", default=None)
    p.add_argument("--summary", help="write the run summary here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_json(path: str, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc}") from exc


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    values = _load_json(args.config, "config") if args.config else {}
    for flag, name in FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            values[name] = value
    try:
        return PipelineConfig.from_mapping(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_mapping(args: argparse.Namespace) -> FieldMapping | None:
    if not args.mapping:
        return None
    data = _load_json(args.mapping, "mapping")
    known = {f.name for f in fields(FieldMapping)}
    if set(data) - known:
        raise ConfigError(f"unknown mapping keys: {sorted(set(data) - known)}")
    return FieldMapping(**data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        config = resolve_config(args)
        mapping = resolve_mapping(args)
        if args.stops:
            summary = run_full_pipeline(
                args.gps, args.terminals, args.stops, config, args.out, mapping
            )
        else:
            summary = run_trip_pipeline(args.gps, args.terminals, config, args.out, mapping)
    except PipelineError as exc:
        logging.getLogger("gpsfeed").error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code

    text = summary.to_json() + "\n"
    if args.summary:
        Path(args.summary).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
