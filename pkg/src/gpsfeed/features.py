"""Segment run times and trip-level aggregates derived from stop events."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .stops import StopEvent
from .trips import TripTrajectory


@dataclass(frozen=True)
class SegmentRun:
    trip_id: str
    from_stop_id: str
    to_stop_id: str
    run_time_s: float
    segment_index: int

    def __post_init__(self):
        if self.run_time_s < 0:
            raise ValueError(f"negative run time on {self.trip_id} segment {self.segment_index}")


@dataclass(frozen=True)
class TripSummary:
    trip_id: str
    duration_s: float
    lead_in_s: float | None
    lead_out_s: float | None
    total_dwell_s: float
    total_run_s: float
    matched: int
    unmatched: int
    skipped_segments: int

    @property
    def fully_matched(self) -> bool:
        return self.unmatched == 0


def derive(
    trip: TripTrajectory, events: Sequence[StopEvent]
) -> tuple[list[SegmentRun], TripSummary]:
    """Run times between consecutive matched stops plus a trip summary.

    ``segment_index`` is the sequence index of the segment's first stop. Pairs
    touching an Unmatched stop produce no run and count as skipped.
    """
    runs: list[SegmentRun] = []
    skipped = 0
    for prev, nxt in zip(events, events[1:]):
        if not (prev.matched and nxt.matched):
            skipped += 1
            continue
        runs.append(
            SegmentRun(
                trip_id=trip.trip_id,
                from_stop_id=prev.stop_id,
                to_stop_id=nxt.stop_id,
                run_time_s=nxt.arrival_time - prev.departure_time,
                segment_index=prev.sequence_index,
            )
        )

    matched = [e for e in events if e.matched]
    for e in matched:
        if e.dwell_s < 0:
            raise ValueError(f"negative dwell at {e.stop_id} on {trip.trip_id}")
    summary = TripSummary(
        trip_id=trip.trip_id,
        duration_s=trip.end_time - trip.start_time,
        lead_in_s=matched[0].arrival_time - trip.start_time if matched else None,
        lead_out_s=trip.end_time - matched[-1].departure_time if matched else None,
        total_dwell_s=sum(e.dwell_s for e in matched),
        total_run_s=sum(r.run_time_s for r in runs),
        matched=len(matched),
        unmatched=len(events) - len(matched),
        skipped_segments=skipped,
    )
    return runs, summary
