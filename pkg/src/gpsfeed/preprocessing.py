"""Record cleaning and per-device partitioning."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .geo import consecutive_distances, haversine_m
from .model import GpsRecord, PipelineConfig


@dataclass
class CleaningReport:
    input_records: int = 0
    duplicates: int = 0
    invalid_coordinates: int = 0
    teleports: int = 0
    output_records: int = 0

    @property
    def removed(self) -> int:
        return self.duplicates + self.invalid_coordinates + self.teleports

    def merge(self, other: "CleaningReport") -> "CleaningReport":
        return CleaningReport(**{k: v + getattr(other, k) for k, v in asdict(self).items()})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DeviceSeries:
    """Time-sorted records of one device.

    ``gap_indices`` holds every position ``i`` where the time since record
    ``i - 1`` exceeds the configured maximum gap.
    """

    device_id: str
    records: tuple[GpsRecord, ...]
    gap_indices: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.records)


def _is_null_island(rec: GpsRecord) -> bool:
    # receivers without a fix commonly report exactly (0, 0)
    return rec.latitude == 0.0 and rec.longitude == 0.0


def _teleport_mask(records: list[GpsRecord], max_kmh: float) -> list[bool]:
    """Keep-flags for a time-sorted single-device list.

    Each record is compared with the last kept one, so a dropped outlier
    never becomes the reference for its successor.
    """
    n = len(records)
    keep = [True] * n
    if n < 2:
        return keep
    lats = np.fromiter((r.latitude for r in records), float, n)
    lons = np.fromiter((r.longitude for r in records), float, n)
    times = np.fromiter((r.timestamp for r in records), float, n)
    implied = 3.6 * consecutive_distances(lats, lons) / np.diff(times)
    if not (implied > max_kmh).any():
        return keep
    # slow path only for devices that actually contain a jump
    last = records[0]
    for i in range(1, n):
        rec = records[i]
        dist = haversine_m((last.latitude, last.longitude), (rec.latitude, rec.longitude))
        if 3.6 * dist / (rec.timestamp - last.timestamp) > max_kmh:
            keep[i] = False
        else:
            last = rec
    return keep


def clean(
    records: list[GpsRecord], config: PipelineConfig
) -> tuple[list[GpsRecord], CleaningReport]:
    """Drop duplicates, invalid fixes and physically impossible jumps.

    Survivors keep their input order. Duplicates share (device_id, timestamp);
    the first occurrence wins.
    """
    report = CleaningReport(input_records=len(records))
    seen: set[tuple[str, float]] = set()
    by_device: dict[str, list[int]] = defaultdict(list)
    survivors: list[int] = []
    for i, rec in enumerate(records):
        key = (rec.device_id, rec.timestamp)
        if key in seen:
            report.duplicates += 1
            continue
        seen.add(key)
        if _is_null_island(rec):
            report.invalid_coordinates += 1
            continue
        by_device[rec.device_id].append(i)
        survivors.append(i)

    dropped: set[int] = set()
    for indices in by_device.values():
        indices.sort(key=lambda i: records[i].timestamp)
        keep = _teleport_mask([records[i] for i in indices], config.teleport_speed_kmh)
        dropped.update(i for i, k in zip(indices, keep) if not k)
    report.teleports = len(dropped)

    out = [records[i] for i in survivors if i not in dropped]
    report.output_records = len(out)
    return out, report


def partition(records: list[GpsRecord], config: PipelineConfig) -> list[DeviceSeries]:
    """Group by device, sort by time, and flag gaps longer than max_gap_seconds."""
    groups: dict[str, list[GpsRecord]] = defaultdict(list)
    for rec in records:
        groups[rec.device_id].append(rec)

    series = []
    for device_id in sorted(groups):
        # full-record sort key keeps the result independent of input order
        recs = sorted(groups[device_id], key=lambda r: (r.timestamp, r.latitude, r.longitude, r.speed))
        unique = [recs[0]]
        for rec in recs[1:]:
            if rec.timestamp != unique[-1].timestamp:
                unique.append(rec)
        gaps = tuple(
            i
            for i in range(1, len(unique))
            if unique[i].timestamp - unique[i - 1].timestamp > config.max_gap_seconds
        )
        series.append(DeviceSeries(device_id, tuple(unique), gaps))
    return series
