"""Frame-timing primitives.

A video here is nothing but its presentation-timestamp track: integer PTS
values in a rational timebase, plus the metadata needed to interpret them
(framerate, nominal frame duration, pixel geometry). Pixel data never enters
this package; everything downstream (stall synthesis, render schedules)
operates on these tracks and their CSV sidecar files.

Conventions, also stated in the sidecar preamble:
  - frame indices are 1-based,
  - pts are integer ticks, timebase numerator/denominator gives seconds/tick,
  - nominal_duration is the ideal per-frame tick count,
    round(den / (framerate * num)).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

FramerateLike = Union[int, float, str, Fraction]

SIDECAR_HEADER = "frame_index,pts,duration_flag"


def round_half_up(value: Fraction) -> int:
    """Round to nearest integer, halves away from zero toward +inf."""
    return (2 * value.numerator + value.denominator) // (2 * value.denominator)


def as_framerate(value: FramerateLike) -> Fraction:
    """Coerce a framerate to an exact Fraction (floats go via str, so 29.97 -> 2997/100)."""
    if isinstance(value, Fraction):
        fr = value
    elif isinstance(value, int):
        fr = Fraction(value)
    else:
        fr = Fraction(str(value))
    if fr <= 0:
        raise ValueError(f"framerate must be positive, got {value!r}")
    return fr


@dataclass(frozen=True)
class Timebase:
    """Seconds per tick as the ratio numerator/denominator (1/1000 = millisecond ticks)."""

    numerator: int
    denominator: int

    def __post_init__(self) -> None:
        if self.numerator <= 0 or self.denominator <= 0:
            raise ValueError(f"timebase must be positive, got {self.numerator}/{self.denominator}")

    @property
    def seconds_per_tick(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def ticks(self, seconds: Union[float, Fraction, str]) -> int:
        """Convert a duration in seconds to integer ticks, rounding half up."""
        s = seconds if isinstance(seconds, Fraction) else Fraction(str(seconds))
        return round_half_up(s * self.denominator / self.numerator)

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"

    @classmethod
    def parse(cls, text: str) -> "Timebase":
        num, _, den = text.partition("/")
        try:
            return cls(int(num), int(den))
        except ValueError as exc:
            raise ValueError(f"bad timebase {text!r}") from exc


@dataclass(frozen=True)
class Violation:
    """One failed timeline invariant; index is the first offending 1-based frame, if any."""

    invariant: str
    index: int | None
    message: str


@dataclass(frozen=True)
class FrameTimeline:
    """An immutable PTS track. Construction does not validate; see validate()."""

    pts: tuple[int, ...]
    timebase: Timebase
    framerate: Fraction
    nominal_duration: int
    resolution: tuple[int, int]

    @property
    def frame_count(self) -> int:
        return len(self.pts)

    @property
    def duration_seconds(self) -> Fraction:
        """Ideal source duration, frame_count / framerate."""
        return Fraction(self.frame_count) / self.framerate

    def gaps(self) -> list[int]:
        return [b - a for a, b in zip(self.pts, self.pts[1:])]

    def is_uniform(self) -> bool:
        return all(g == self.nominal_duration for g in self.gaps())


def expected_nominal_duration(timebase: Timebase, framerate: Fraction) -> int:
    """Ticks per ideal frame interval: round(den / (framerate * num))."""
    return round_half_up(Fraction(timebase.denominator) / (framerate * timebase.numerator))


def validate(timeline: FrameTimeline) -> list[Violation]:
    """Check timeline invariants, returning all violations rather than raising.

    Checks: frame_count >= 2, pts strictly increasing, positive nominal
    duration, and nominal_duration consistent with framerate and timebase.
    Per-gap uniformity is deliberately not an invariant; distorted tracks are
    valid timelines.
    """
    out: list[Violation] = []
    if timeline.frame_count < 2:
        out.append(Violation("frame_count", None, f"need >= 2 frames, got {timeline.frame_count}"))
    for i, (a, b) in enumerate(zip(timeline.pts, timeline.pts[1:]), start=1):
        if b <= a:
            out.append(Violation("pts_strictly_increasing", i + 1, f"pts[{i + 1}]={b} <= pts[{i}]={a}"))
            break
    if timeline.nominal_duration <= 0:
        out.append(Violation("nominal_duration_positive", None, f"nominal_duration={timeline.nominal_duration}"))
    else:
        want = expected_nominal_duration(timeline.timebase, timeline.framerate)
        if timeline.nominal_duration != want:
            out.append(
                Violation(
                    "nominal_duration_consistent",
                    None,
                    f"nominal_duration={timeline.nominal_duration}, framerate/timebase imply {want}",
                )
            )
    w, h = timeline.resolution
    if w <= 0 or h <= 0:
        out.append(Violation("resolution_positive", None, f"resolution={timeline.resolution}"))
    return out


def uniform_timeline(
    frame_count: int,
    framerate: FramerateLike,
    timebase: Timebase = Timebase(1, 1000),
    resolution: tuple[int, int] = (1920, 1080),
) -> FrameTimeline:
    """Ideal evenly spaced track: pts[i] = (i-1) * nominal_duration."""
    if frame_count < 2:
        raise ValueError(f"frame_count must be >= 2, got {frame_count}")
    fr = as_framerate(framerate)
    nominal = expected_nominal_duration(timebase, fr)
    if nominal <= 0:
        raise ValueError(f"timebase {timebase} too coarse for framerate {fr}")
    pts = tuple(i * nominal for i in range(frame_count))
    return FrameTimeline(pts, timebase, fr, nominal, resolution)


def _preamble_lines(timeline: FrameTimeline) -> list[str]:
    w, h = timeline.resolution
    return [
        f"# timebase={timeline.timebase}",
        f"# framerate={timeline.framerate.numerator}/{timeline.framerate.denominator}",
        f"# resolution={w}x{h}",
        f"# nominal_duration={timeline.nominal_duration}",
        "# frame_index_base=1",
    ]


def _parse_preamble(lines: Iterable[str], path: Path) -> dict[str, str]:
    meta: dict[str, str] = {}
    for line in lines:
        body = line[1:].strip()
        key, sep, value = body.partition("=")
        if sep:
            meta[key.strip()] = value.strip()
    for key in ("timebase", "framerate", "resolution", "nominal_duration"):
        if key not in meta:
            raise ValueError(f"{path}: missing '# {key}=' preamble line")
    if meta.get("frame_index_base", "1") != "1":
        raise ValueError(f"{path}: unsupported frame_index_base={meta['frame_index_base']}")
    return meta


def _meta_from_preamble(meta: dict[str, str], path: Path) -> tuple[Timebase, Fraction, tuple[int, int], int]:
    timebase = Timebase.parse(meta["timebase"])
    framerate = as_framerate(meta["framerate"])
    try:
        w_s, _, h_s = meta["resolution"].partition("x")
        resolution = (int(w_s), int(h_s))
        nominal = int(meta["nominal_duration"])
    except ValueError as exc:
        raise ValueError(f"{path}: bad preamble value ({exc})") from exc
    return timebase, framerate, resolution, nominal


def write_sidecar(timeline: FrameTimeline, path: Union[str, Path]) -> None:
    """Write the timing sidecar CSV.

    duration_flag is 1 when the forward PTS gap matches nominal within one
    tick, 0 otherwise; the last frame has no forward gap and is flagged 1.
    """
    path = Path(path)
    nominal = timeline.nominal_duration
    rows = []
    for i, p in enumerate(timeline.pts):
        if i + 1 < timeline.frame_count:
            flag = 1 if abs(timeline.pts[i + 1] - p - nominal) <= 1 else 0
        else:
            flag = 1
        rows.append(f"{i + 1},{p},{flag}")
    content = "\n".join(_preamble_lines(timeline) + [SIDECAR_HEADER] + rows) + "\n"
    path.write_text(content)


def read_sidecar(path: Union[str, Path]) -> FrameTimeline:
    """Parse a timing sidecar CSV back into a FrameTimeline.

    duration_flag values are format-checked but otherwise ignored; they are
    derivable from pts and nominal_duration.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    data = [ln for ln in lines if ln and not ln.startswith("#")]
    meta = _parse_preamble(comments, path)
    timebase, framerate, resolution, nominal = _meta_from_preamble(meta, path)
    if not data or data[0] != SIDECAR_HEADER:
        raise ValueError(f"{path}: expected header '{SIDECAR_HEADER}'")
    pts: list[int] = []
    for lineno, row in enumerate(csv.reader(data[1:]), start=1):
        if len(row) != 3:
            raise ValueError(f"{path}: row {lineno} has {len(row)} fields, want 3")
        try:
            idx, p, flag = int(row[0]), int(row[1]), int(row[2])
        except ValueError as exc:
            raise ValueError(f"{path}: row {lineno} not integer-valued") from exc
        if idx != lineno:
            raise ValueError(f"{path}: row {lineno} has frame_index {idx}; indices must be 1..n in order")
        if flag not in (0, 1):
            raise ValueError(f"{path}: row {lineno} duration_flag must be 0 or 1")
        pts.append(p)
    return FrameTimeline(tuple(pts), timebase, framerate, nominal, resolution)
