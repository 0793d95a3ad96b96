"""Loading raw GPS, terminal and stop files into domain types."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import Executor
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .columns import RecordColumns
from .errors import IoError, RejectRatioError, SchemaError, ValidationError
from .model import (
    SPEED_UNITS,
    Direction,
    FieldMapping,
    GpsRecord,
    RouteDefinition,
    StopPoint,
    TerminalPoint,
    check_record_fields,
)

log = logging.getLogger(__name__)

TERMINAL_COLUMNS = ("terminal_id", "name", "latitude", "longitude")
STOP_COLUMNS = ("stop_id", "name", "latitude", "longitude", "direction_id", "sequence_index")


@dataclass(frozen=True)
class RawTable:
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        width = len(self.header)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaError(f"row {i} has {len(row)} cells, header has {width}")


@dataclass(frozen=True)
class RejectedRow:
    """A data row that could not become a GpsRecord.

    ``row_index`` counts data rows from 0 (the header is not counted).
    """

    row_index: int
    reason: str
    detail: str = ""


def _open_reader(path, delimiter: str):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}", path=path) from exc
    return fh, csv.reader(fh, delimiter=delimiter)


def read_table(path, delimiter: str = ",") -> RawTable:
    """Read a small delimited file fully; ragged rows are a SchemaError."""
    fh, reader = _open_reader(path, delimiter)
    with fh:
        try:
            header = next(reader, None)
            rows = [tuple(r) for r in reader if r]
        except (csv.Error, UnicodeDecodeError) as exc:
            raise SchemaError(f"{path}: {exc}") from exc
    if header is None:
        raise SchemaError(f"{path}: missing header row")
    return RawTable(tuple(h.strip() for h in header), tuple(rows))


def make_timestamp_parser(mapping: FieldMapping):
    """Build a str -> UTC epoch seconds function for the mapping's format."""
    fmt = mapping.timestamp_format
    offset = timezone(timedelta(hours=mapping.utc_offset_hours))

    if fmt == "epoch_s":
        return float
    if fmt == "epoch_ms":
        return lambda text: float(text) / 1000.0

    if fmt == "iso8601":
        def parse(text: str) -> float:
            text = text.strip()
            if text.endswith(("Z", "z")):
                text = text[:-1] + "+00:00"
            dt = datetime.fromisoformat(text)
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=offset)
            return dt.timestamp()
    else:
        def parse(text: str) -> float:
            dt = datetime.strptime(text.strip(), fmt)
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=offset)
            return dt.timestamp()

    return parse


def _float(text: str) -> float:
    value = float(text)
    if value != value:
        raise ValueError("NaN")
    return value


@dataclass(frozen=True)
class _Layout:
    """Where each role lives in a GPS file, plus the value converters."""

    width: int
    device: int
    timestamp: int
    latitude: int
    longitude: int
    speed: int
    route: int | None
    mapping: FieldMapping


def _gps_layout(header: list[str], mapping: FieldMapping, path) -> _Layout:
    header = [h.strip() for h in header]
    missing = [src for src in mapping.columns.values() if src not in header]
    if missing:
        raise SchemaError(f"{path}: header lacks mapped columns {missing}")
    pos = {role: header.index(src) for role, src in mapping.columns.items()}
    return _Layout(
        len(header), pos["device_id"], pos["timestamp"], pos["latitude"],
        pos["longitude"], pos["speed"], pos.get("route_id"), mapping,
    )


def _parse_rows(rows, layout: _Layout, first_index: int = 0):
    """Parse data rows into columns; returns (columns, rejects, rows seen)."""
    parse_ts = make_timestamp_parser(layout.mapping)
    speed_factor = SPEED_UNITS[layout.mapping.speed_unit]
    width, i_dev, i_ts = layout.width, layout.device, layout.timestamp
    i_lat, i_lon, i_spd, i_route = layout.latitude, layout.longitude, layout.speed, layout.route
    devices: dict[str, int] = {}
    routes: dict[str | None, int] = {}
    dev, ts_col, lat_col, lon_col, spd_col, route_col = [], [], [], [], [], []
    rejects: list[RejectedRow] = []
    index = first_index - 1
    for index, row in enumerate(rows, first_index):
        if len(row) != width:
            rejects.append(RejectedRow(index, "column-count", f"{len(row)} cells"))
            continue
        device = row[i_dev].strip()
        if not device:
            rejects.append(RejectedRow(index, "missing-field", "device_id"))
            continue
        try:
            ts = parse_ts(row[i_ts])
        except (ValueError, OverflowError, OSError) as exc:
            rejects.append(RejectedRow(index, "timestamp", str(exc)))
            continue
        try:
            lat = _float(row[i_lat])
            lon = _float(row[i_lon])
        except ValueError as exc:
            rejects.append(RejectedRow(index, "coordinate-parse", str(exc)))
            continue
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            rejects.append(RejectedRow(index, "coordinate-range", f"({lat}, {lon})"))
            continue
        try:
            speed = _float(row[i_spd]) * speed_factor
        except ValueError as exc:
            rejects.append(RejectedRow(index, "speed-parse", str(exc)))
            continue
        try:
            check_record_fields(device, ts, lat, lon, speed)
        except ValidationError as exc:
            rejects.append(RejectedRow(index, "invalid", str(exc)))
            continue
        route = row[i_route].strip() or None if i_route is not None else None
        dev.append(devices.setdefault(device, len(devices)))
        route_col.append(routes.setdefault(route, len(routes)))
        ts_col.append(ts)
        lat_col.append(lat)
        lon_col.append(lon)
        spd_col.append(speed)
    columns = RecordColumns(
        tuple(devices),
        np.array(dev, np.int32),
        np.array(ts_col, float),
        np.array(lat_col, float),
        np.array(lon_col, float),
        np.array(spd_col, float),
        tuple(routes),
        np.array(route_col, np.int32),
    )
    return columns, rejects, index + 1 - first_index


def _parse_block(args):
    """Worker entry: parse bytes [start, end) of a file, which begin and end on line breaks."""
    path, start, end, layout, delimiter = args
    with open(path, "rb") as fh:
        fh.seek(start)
        data = fh.read(end - start)
    try:
        text = data.decode("utf-8")
        return _parse_rows(csv.reader(io.StringIO(text, newline=""), delimiter=delimiter), layout)
    except (csv.Error, UnicodeDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _block_bounds(path: Path, body_start: int, size: int, blocks: int) -> list[tuple[int, int]]:
    """Split [body_start, size) into about ``blocks`` ranges cut just after a newline."""
    cuts = [body_start]
    with open(path, "rb") as fh:
        for k in range(1, blocks):
            target = body_start + (size - body_start) * k // blocks
            if target <= cuts[-1]:
                continue
            fh.seek(target)
            fh.readline()
            pos = fh.tell()
            if pos >= size:
                break
            if pos > cuts[-1]:
                cuts.append(pos)
    cuts.append(size)
    return list(zip(cuts[:-1], cuts[1:]))


# below this size a file is parsed in-process even when a pool is available
PARALLEL_INGEST_MIN_BYTES = 1 << 20


def load_gps_columns(
    path,
    mapping: FieldMapping | None = None,
    *,
    delimiter: str = ",",
    max_reject_ratio: float | None = None,
    pool: Executor | None = None,
    blocks: int | None = None,
) -> tuple[RecordColumns, list[RejectedRow]]:
    """Column-wise variant of ``load_gps``; the two accept and reject the same rows.

    With a process ``pool`` large files are cut into line-aligned byte blocks
    parsed concurrently. Files containing quote characters are always parsed
    in one pass because a quoted cell may span lines.
    """
    mapping = mapping or FieldMapping()
    path = Path(path)
    fh, reader = _open_reader(path, delimiter)
    with fh:
        try:
            header = next(reader, None)
            if header is None:
                # zero-byte file: nothing to load
                return RecordColumns.empty(), []
            layout = _gps_layout(header, mapping, path)
            size = path.stat().st_size
            parallel = pool is not None and size >= PARALLEL_INGEST_MIN_BYTES
            if parallel:
                body_start, parallel = _splittable(path)
            if not parallel:
                columns, rejects, total = _parse_rows(reader, layout)
        except (csv.Error, UnicodeDecodeError) as exc:
            raise SchemaError(f"{path}: {exc}") from exc

    if parallel:
        n = blocks or 4 * getattr(pool, "_max_workers", 1)
        bounds = _block_bounds(path, body_start, size, n)
        parts = list(pool.map(_parse_block, [(path, a, b, layout, delimiter) for a, b in bounds]))
        rejects, offset = [], 0
        for _, part_rejects, count in parts:
            rejects.extend(replace(r, row_index=r.row_index + offset) for r in part_rejects)
            offset += count
        columns = RecordColumns.concat([p[0] for p in parts])
        total = offset

    if rejects:
        log.info("ingest path=%s rows=%d rejected=%d", path, total, len(rejects))
    if max_reject_ratio is not None and total and len(rejects) / total > max_reject_ratio:
        raise RejectRatioError(
            f"{path}: {len(rejects)} of {total} rows rejected, above the "
            f"{max_reject_ratio:.0%} ceiling; check the field mapping"
        )
    return columns, rejects


def _splittable(path: Path, chunk: int = 1 << 24) -> tuple[int, bool]:
    """(byte offset of the first data row, whether rows can be cut at newlines)."""
    with open(path, "rb") as fh:
        first = fh.readline()
        # a header ending in a bare CR means the file does not use LF line breaks
        if b'"' in first or b"\r" in first.rstrip(b"\r\n") or not first.endswith(b"\n"):
            return len(first), False
        while block := fh.read(chunk):
            if b'"' in block:
                return len(first), False
    return len(first), True


def load_gps(
    path,
    mapping: FieldMapping | None = None,
    *,
    delimiter: str = ",",
    max_reject_ratio: float | None = None,
) -> tuple[list[GpsRecord], list[RejectedRow]]:
    """Parse a GPS file into records, reporting every row that fails.

    Args:
        path: delimited text file with a header row.
        mapping: column mapping; defaults to canonical column names.
        delimiter: cell separator.
        max_reject_ratio: if given, raise RejectRatioError when the share of
            rejected rows exceeds it.

    Returns:
        (records in file order, rejected rows in file order)
    """
    columns, rejects = load_gps_columns(
        path, mapping, delimiter=delimiter, max_reject_ratio=max_reject_ratio
    )
    return list(columns), rejects


def _require_columns(table: RawTable, columns, path) -> dict[str, int]:
    missing = [c for c in columns if c not in table.header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    return {c: table.header.index(c) for c in columns}


def load_terminals(path, radius_m: float = 100.0) -> tuple[TerminalPoint, TerminalPoint]:
    table = read_table(path)
    idx = _require_columns(table, TERMINAL_COLUMNS, path)
    if len(table.rows) != 2:
        raise ValidationError(f"{path}: expected exactly 2 terminals, found {len(table.rows)}")
    terminals = []
    for row in table.rows:
        try:
            terminals.append(
                TerminalPoint(
                    terminal_id=row[idx["terminal_id"]].strip(),
                    name=row[idx["name"]].strip(),
                    latitude=float(row[idx["latitude"]]),
                    longitude=float(row[idx["longitude"]]),
                    buffer_radius_m=radius_m,
                )
            )
        except ValueError as exc:
            raise ValidationError(f"{path}: bad terminal row {row}: {exc}") from exc
    return terminals[0], terminals[1]


def load_stops(path) -> tuple[list[StopPoint], list[StopPoint]]:
    """Read stops and return (outbound, inbound), each sorted by sequence."""
    table = read_table(path)
    idx = _require_columns(table, STOP_COLUMNS, path)
    by_direction: dict[Direction, list[StopPoint]] = {Direction.OUTBOUND: [], Direction.INBOUND: []}
    for row in table.rows:
        try:
            stop = StopPoint(
                stop_id=row[idx["stop_id"]].strip(),
                name=row[idx["name"]].strip(),
                latitude=float(row[idx["latitude"]]),
                longitude=float(row[idx["longitude"]]),
                direction_id=Direction.parse(row[idx["direction_id"]]),
                sequence_index=int(row[idx["sequence_index"]]),
            )
        except ValueError as exc:
            raise ValidationError(f"{path}: bad stop row {row}: {exc}") from exc
        by_direction[stop.direction_id].append(stop)

    for direction, stops in by_direction.items():
        stops.sort(key=lambda s: s.sequence_index)
        seqs = [s.sequence_index for s in stops]
        dupes = sorted({q for q in seqs if seqs.count(q) > 1})
        if dupes:
            raise ValidationError(
                f"{path}: duplicate-sequence {dupes} in {direction.name.lower()} stops"
            )
    return by_direction[Direction.OUTBOUND], by_direction[Direction.INBOUND]


def load_route(
    terminals_path, stops_path, *, route_id: str = "route", terminal_radius_m: float = 100.0
) -> RouteDefinition:
    terminal_a, terminal_b = load_terminals(terminals_path, terminal_radius_m)
    outbound, inbound = load_stops(stops_path)
    return RouteDefinition(route_id, terminal_a, terminal_b, outbound, inbound)
