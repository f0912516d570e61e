"""Render schedules: turning a distorted PTS track back into display events.

A player that honors a distorted track literally would just show each frame at
its PTS. For subjective viewing we instead materialize what a stalled stream
looks like: any inter-frame gap larger than nominal is a stall, and the stall
frame is re-displayed every nominal interval until the next frame's PTS is
reached (floor semantics, so a remainder leaves the final hold slightly long).
Sub-nominal gaps pass through and are flagged accelerated. Every source frame
appears at least once; nothing is ever dropped at this layer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Union

from .timeline import (
    FrameTimeline,
    Timebase,
    _meta_from_preamble,
    _parse_preamble,
    validate,
)

FLAG_NORMAL = "normal"
FLAG_STALL_REPEAT = "stall_repeat"
FLAG_ACCELERATED = "accelerated"

SCHEDULE_HEADER = "entry_index,source_frame_index,render_pts,flag"

# One tick of slack so rounding of compressed intervals never marks uniform
# playback as accelerated.
ACCEL_SLACK_TICKS = 1


@dataclass(frozen=True)
class ScheduleEntry:
    source_frame_index: int
    render_pts: int
    flag: str


@dataclass(frozen=True)
class RenderSchedule:
    entries: tuple[ScheduleEntry, ...]
    timebase: Timebase
    framerate: Fraction
    nominal_duration: int
    resolution: tuple[int, int]

    @property
    def entry_count(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class DetectedStall:
    """A stall at 1-based frame_index: its PTS gap and Eq-style repeat count floor(gap/nominal)."""

    frame_index: int
    gap_ticks: int
    repeat_count: int


@dataclass(frozen=True)
class StallReport:
    stalls: tuple[DetectedStall, ...]

    @property
    def stall_count(self) -> int:
        return len(self.stalls)


def _require_valid(timeline: FrameTimeline) -> None:
    problems = validate(timeline)
    if problems:
        raise ValueError(f"timeline invalid: {problems[0].invariant}: {problems[0].message}")


def detect_stalls(timeline: FrameTimeline) -> StallReport:
    """Find frames whose forward PTS gap exceeds nominal.

    repeat_count = floor(gap / nominal) counts total displays of the stall
    frame including its natural one, so it is always >= 1 for a detected
    stall and the schedule holds repeat_count - 1 extra stall_repeat entries.
    """
    _require_valid(timeline)
    nominal = timeline.nominal_duration
    found = []
    for i, gap in enumerate(timeline.gaps(), start=1):
        if gap > nominal:
            found.append(DetectedStall(frame_index=i, gap_ticks=gap, repeat_count=gap // nominal))
    return StallReport(tuple(found))


def restructure(timeline: FrameTimeline) -> RenderSchedule:
    """Expand a PTS track into an explicit display-event schedule."""
    _require_valid(timeline)
    nominal = timeline.nominal_duration
    pts = timeline.pts
    entries: list[ScheduleEntry] = []
    for i in range(1, timeline.frame_count):
        gap = pts[i] - pts[i - 1]
        if gap > nominal:
            entries.append(ScheduleEntry(i, pts[i - 1], FLAG_NORMAL))
            for j in range(1, gap // nominal):
                entries.append(ScheduleEntry(i, pts[i - 1] + j * nominal, FLAG_STALL_REPEAT))
        elif gap < nominal - ACCEL_SLACK_TICKS:
            entries.append(ScheduleEntry(i, pts[i - 1], FLAG_ACCELERATED))
        else:
            entries.append(ScheduleEntry(i, pts[i - 1], FLAG_NORMAL))
    entries.append(ScheduleEntry(timeline.frame_count, pts[-1], FLAG_NORMAL))
    return RenderSchedule(
        entries=tuple(entries),
        timebase=timeline.timebase,
        framerate=timeline.framerate,
        nominal_duration=nominal,
        resolution=timeline.resolution,
    )


def _schedule_preamble(schedule: RenderSchedule) -> list[str]:
    w, h = schedule.resolution
    return [
        f"# timebase={schedule.timebase}",
        f"# framerate={schedule.framerate.numerator}/{schedule.framerate.denominator}",
        f"# resolution={w}x{h}",
        f"# nominal_duration={schedule.nominal_duration}",
        "# frame_index_base=1",
    ]


def write_schedule(schedule: RenderSchedule, path: Union[str, Path]) -> None:
    rows = [
        f"{i + 1},{e.source_frame_index},{e.render_pts},{e.flag}" for i, e in enumerate(schedule.entries)
    ]
    Path(path).write_text("\n".join(_schedule_preamble(schedule) + [SCHEDULE_HEADER] + rows) + "\n")


def read_schedule(path: Union[str, Path]) -> RenderSchedule:
    path = Path(path)
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    data = [ln for ln in lines if ln and not ln.startswith("#")]
    meta = _parse_preamble(comments, path)
    timebase, framerate, resolution, nominal = _meta_from_preamble(meta, path)
    if not data or data[0] != SCHEDULE_HEADER:
        raise ValueError(f"{path}: expected header '{SCHEDULE_HEADER}'")
    entries: list[ScheduleEntry] = []
    for lineno, row in enumerate(csv.reader(data[1:]), start=1):
        if len(row) != 4:
            raise ValueError(f"{path}: row {lineno} has {len(row)} fields, want 4")
        try:
            idx = int(row[0])
            entry = ScheduleEntry(int(row[1]), int(row[2]), row[3])
        except ValueError as exc:
            raise ValueError(f"{path}: row {lineno} malformed") from exc
        if idx != lineno:
            raise ValueError(f"{path}: row {lineno} has entry_index {idx}; indices must be 1..n in order")
        if entry.flag not in (FLAG_NORMAL, FLAG_STALL_REPEAT, FLAG_ACCELERATED):
            raise ValueError(f"{path}: row {lineno} has unknown flag {entry.flag!r}")
        entries.append(entry)
    return RenderSchedule(tuple(entries), timebase, framerate, nominal, resolution)
