"""Column-wise storage for GPS records.

Worker processes exchange records in this form: a handful of numpy arrays
pickles in a fraction of the time a list of record objects takes, and records
are only materialised where they are used.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .model import GpsRecord


def _encode(values: list) -> tuple[tuple, np.ndarray]:
    """Dictionary-encode values in first-seen order."""
    lookup: dict = {}
    codes = np.fromiter((lookup.setdefault(v, len(lookup)) for v in values), np.int32, len(values))
    return tuple(lookup), codes


@dataclass(frozen=True, eq=False)
class RecordColumns(Sequence):
    """Read-only sequence of GpsRecord backed by parallel arrays.

    Device and route ids are dictionary-encoded: ``device_codes[i]`` indexes
    ``device_names``.
    """

    device_names: tuple[str, ...]
    device_codes: np.ndarray
    timestamps: np.ndarray
    latitudes: np.ndarray
    longitudes: np.ndarray
    speeds: np.ndarray
    route_names: tuple[str | None, ...]
    route_codes: np.ndarray

    __hash__ = None

    @classmethod
    def empty(cls) -> "RecordColumns":
        f = np.empty(0, float)
        i = np.empty(0, np.int32)
        return cls((), i, f, f, f, f, (), i)

    @classmethod
    def from_records(cls, records) -> "RecordColumns":
        if isinstance(records, RecordColumns):
            return records
        n = len(records)
        devices, dev = _encode([r.device_id for r in records])
        routes, rte = _encode([r.route_id for r in records])
        return cls(
            devices,
            dev,
            np.fromiter((r.timestamp for r in records), float, n),
            np.fromiter((r.latitude for r in records), float, n),
            np.fromiter((r.longitude for r in records), float, n),
            np.fromiter((r.speed for r in records), float, n),
            routes,
            rte,
        )

    @classmethod
    def concat(cls, parts: Sequence["RecordColumns"]) -> "RecordColumns":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        if len(parts) == 1:
            return parts[0]
        devices: dict[str, int] = {}
        routes: dict[str | None, int] = {}
        dev_codes, route_codes = [], []
        for p in parts:
            remap = np.array([devices.setdefault(d, len(devices)) for d in p.device_names], np.int32)
            dev_codes.append(remap[p.device_codes])
            remap = np.array([routes.setdefault(r, len(routes)) for r in p.route_names], np.int32)
            route_codes.append(remap[p.route_codes])
        return cls(
            tuple(devices),
            np.concatenate(dev_codes),
            np.concatenate([p.timestamps for p in parts]),
            np.concatenate([p.latitudes for p in parts]),
            np.concatenate([p.longitudes for p in parts]),
            np.concatenate([p.speeds for p in parts]),
            tuple(routes),
            np.concatenate(route_codes),
        )

    def take(self, index) -> "RecordColumns":
        return RecordColumns(
            self.device_names,
            self.device_codes[index],
            self.timestamps[index],
            self.latitudes[index],
            self.longitudes[index],
            self.speeds[index],
            self.route_names,
            self.route_codes[index],
        )

    def by_device(self) -> list[tuple[str, "RecordColumns"]]:
        """Per-device columns, devices sorted by id, rows kept in their original order."""
        order = np.argsort(self.device_codes, kind="stable")
        codes = self.device_codes[order]
        bounds = np.flatnonzero(np.diff(codes)) + 1
        groups = []
        for chunk in np.split(order, bounds) if len(order) else []:
            name = self.device_names[self.device_codes[chunk[0]]]
            groups.append((name, self.take(chunk)))
        groups.sort(key=lambda g: g[0])
        return groups

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.take(i)
        return GpsRecord(
            self.device_names[self.device_codes[i]],
            float(self.timestamps[i]),
            float(self.latitudes[i]),
            float(self.longitudes[i]),
            float(self.speeds[i]),
            self.route_names[self.route_codes[i]],
        )

    def __iter__(self):
        devices, routes = self.device_names, self.route_names
        for d, t, la, lo, s, r in zip(
            self.device_codes.tolist(),
            self.timestamps.tolist(),
            self.latitudes.tolist(),
            self.longitudes.tolist(),
            self.speeds.tolist(),
            self.route_codes.tolist(),
        ):
            yield GpsRecord(devices[d], t, la, lo, s, routes[r])

    def __eq__(self, other):
        if not isinstance(other, Sequence) or isinstance(other, str):
            return NotImplemented
        return len(self) == len(other) and all(a == b for a, b in zip(self, other))
