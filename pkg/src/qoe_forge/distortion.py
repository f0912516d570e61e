"""Stall synthesis on PTS tracks.

Playback stalls are injected into a uniform timeline purely by editing
timestamps: each stall delays every later frame's PTS by the stall length, and
an optional accelerated catch-up phase compresses the following frame
intervals by the acceleration rate (AR) until the accumulated delay is played
out. All arithmetic is exact: stall delays are integer ticks, the compressed
interval nominal/AR is accumulated as a rational and rounded once per frame on
output, and AR itself is snapped to an exact fraction (1.1 means 11/10).

The catch-up length for a stall of t seconds is

    qn = round(t * AR * framerate / (AR - 1))    frames,

truncated at the next stall (or the second-to-last frame). A compressed
interval is one whose bounding frames both lie in the catch-up frame set, so
an untruncated stall compresses exactly qn intervals and recovers
qn * nominal * (AR - 1) / AR ticks, which equals the injected delay when the
pre-rounding qn is integral. AR = 1 disables catch-up (qn = 0) and the delay
persists to the end of the track.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .timeline import (
    FrameTimeline,
    FramerateLike,
    Timebase,
    as_framerate,
    round_half_up,
    validate,
)


class InvalidRecipeError(ValueError):
    """Recipe violates its structural rules or does not fit the target timeline."""


class SynthesisDegenerateError(RuntimeError):
    """Synthesized PTS would not be strictly increasing."""


DURATION_CATEGORIES: dict[str, tuple[float, ...]] = {
    "short": (0.5, 1.0),
    "medium": (1.5, 2.0, 2.5),
    "long": (3.0, 3.5, 4.0, 4.5),
    "extra_long": (5.0, 5.5, 6.0),
}

ACCELERATION_RATES = (1.0, 1.1, 1.25, 1.5, 1.75, 2.25)

CRF_LEVELS = (15, 22, 27, 32, 37)

# Batch id -> (AR value, probability), in draw order.
AR_DISTRIBUTIONS: dict[str, tuple[tuple[float, float], ...]] = {
    "1080p_batch1": ((1.0, 1.0),),
    "1080p_batch2": ((1.1, 0.30), (1.25, 0.30), (1.5, 0.15), (1.75, 0.15), (2.25, 0.15)),
    "720p_batch1": ((1.0, 0.25), (1.1, 0.25), (1.25, 0.20), (1.5, 0.15), (1.75, 0.10), (2.25, 0.05)),
}

BATCHES = tuple(AR_DISTRIBUTIONS)

# Stalling-mode templates: category composition per mode id. The single-stall
# modes A1-A4 each occupy two slots of the 21-template roster.
MODE_COMPOSITIONS: dict[str, tuple[str, ...]] = {
    "A1": ("short",),
    "A2": ("medium",),
    "A3": ("long",),
    "A4": ("extra_long",),
    "B1": ("short", "short"),
    "B2": ("short", "medium"),
    "B3": ("short", "long"),
    "B4": ("short", "extra_long"),
    "B5": ("medium", "medium"),
    "B6": ("medium", "long"),
    "B7": ("medium", "extra_long"),
    "B8": ("long", "long"),
    "C1": ("short", "short", "short"),
    "C2": ("short", "short", "medium"),
    "C3": ("short", "short", "long"),
    "C4": ("short", "long", "long"),
    "C5": ("short", "medium", "long"),
}


@dataclass(frozen=True)
class ModeTemplate:
    mode_id: str
    slot: int
    categories: tuple[str, ...]


def enumerate_stall_modes() -> tuple[ModeTemplate, ...]:
    """The 21 stalling-mode templates in roster order (A1-A4 twice, B1-B8, C1-C5)."""
    out: list[ModeTemplate] = []
    for mode_id in ("A1", "A2", "A3", "A4"):
        for slot in (1, 2):
            out.append(ModeTemplate(mode_id, slot, MODE_COMPOSITIONS[mode_id]))
    for mode_id in ("B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "C1", "C2", "C3", "C4", "C5"):
        out.append(ModeTemplate(mode_id, 1, MODE_COMPOSITIONS[mode_id]))
    return tuple(out)


@dataclass(frozen=True)
class StallEvent:
    """One stall: onset (seconds from track start) and length (seconds)."""

    onset_s: float
    duration_s: float
    category: str


@dataclass(frozen=True)
class DistortionRecipe:
    stalls: tuple[StallEvent, ...]
    mode_id: str
    acceleration_rate: float
    crf: int
    seed: int | None = None
    source_id: str | None = None
    batch: str | None = None

    @property
    def stall_count(self) -> int:
        return len(self.stalls)


def validate_recipe(recipe: DistortionRecipe) -> None:
    """Raise InvalidRecipeError unless the recipe is structurally sound.

    Rules: 1..3 stalls, onsets strictly increasing, each stall's duration a
    member of its category, the category multiset matching the mode's
    composition, AR >= 1, crf a known level.
    """
    m = recipe.stall_count
    if not 1 <= m <= 3:
        raise InvalidRecipeError(f"stall count must be 1..3, got {m}")
    comp = MODE_COMPOSITIONS.get(recipe.mode_id)
    if comp is None:
        raise InvalidRecipeError(f"unknown mode_id {recipe.mode_id!r}")
    if sorted(s.category for s in recipe.stalls) != sorted(comp):
        raise InvalidRecipeError(
            f"stall categories {[s.category for s in recipe.stalls]} do not match mode {recipe.mode_id} {comp}"
        )
    for a, b in zip(recipe.stalls, recipe.stalls[1:]):
        if b.onset_s <= a.onset_s:
            raise InvalidRecipeError(f"onsets must be strictly increasing, got {a.onset_s} then {b.onset_s}")
    for s in recipe.stalls:
        levels = DURATION_CATEGORIES.get(s.category)
        if levels is None:
            raise InvalidRecipeError(f"unknown duration category {s.category!r}")
        if s.duration_s not in levels:
            raise InvalidRecipeError(f"duration {s.duration_s}s is not a {s.category} level {levels}")
        if s.onset_s < 0:
            raise InvalidRecipeError(f"onset {s.onset_s}s is negative")
    if recipe.acceleration_rate < 1:
        raise InvalidRecipeError(f"acceleration_rate must be >= 1, got {recipe.acceleration_rate}")
    if recipe.crf not in CRF_LEVELS:
        raise InvalidRecipeError(f"crf {recipe.crf} not in {CRF_LEVELS}")


def stall_frame_indices(recipe: DistortionRecipe, framerate: FramerateLike, frame_count: int) -> list[int]:
    """Map stall onsets to 1-based frame indices, sf = round(onset * framerate).

    Indices are clamped to [1, frame_count]; two stalls landing on the same
    frame after clamping is an InvalidRecipeError.
    """
    fr = as_framerate(framerate)
    out: list[int] = []
    for s in recipe.stalls:
        sf = round_half_up(Fraction(str(s.onset_s)) * fr)
        out.append(min(max(sf, 1), frame_count))
    for a, b in zip(out, out[1:]):
        if b <= a:
            raise InvalidRecipeError(f"stall onsets collide on frame {b} at framerate {fr}")
    return out


def pts_delays(recipe: DistortionRecipe, timebase: Timebase) -> list[int]:
    """Per-stall PTS delay in ticks, d = round(duration_s / seconds_per_tick)."""
    return [timebase.ticks(s.duration_s) for s in recipe.stalls]


def cumulative_delays(sf: Sequence[int], delays: Sequence[int], frame_count: int) -> list[int]:
    """Accumulated delay ad[i] applied to frame i: the sum of d_k over stalls with sf_k < i.

    Returned list is 1-based frame indexed at [i-1]. Frames at or before the
    first stall frame carry zero delay; the stall frame itself still renders
    on time, only later frames shift.
    """
    if len(sf) != len(delays):
        raise ValueError("sf and delays length mismatch")
    out = [0] * frame_count
    for i in range(1, frame_count + 1):
        acc = 0
        for k, frame in enumerate(sf):
            if frame < i:
                acc += delays[k]
        out[i - 1] = acc
    return out


def catchup_frame_count(duration_s: float, acceleration_rate: Union[float, Fraction], framerate: FramerateLike) -> int:
    """Frames needed to play out a stall's delay at the given rate.

    qn = round(t * AR * framerate / (AR - 1)); AR = 1 means no catch-up and
    returns 0. Computed in exact rational arithmetic, rounded half up.
    """
    ar = acceleration_rate if isinstance(acceleration_rate, Fraction) else Fraction(str(acceleration_rate))
    if ar < 1:
        raise ValueError(f"acceleration_rate must be >= 1, got {acceleration_rate}")
    if ar == 1:
        return 0
    fr = as_framerate(framerate)
    t = Fraction(str(duration_s))
    return round_half_up(t * ar * fr / (ar - 1))


@dataclass(frozen=True)
class DistortionPlan:
    """Intermediate quantities behind one synthesis, kept for audit and tests."""

    stall_frame_indices: tuple[int, ...]
    pts_delays_ticks: tuple[int, ...]
    cumulative_delays_ticks: tuple[int, ...]
    catchup_counts: tuple[int, ...]
    catchup_end_indices: tuple[int, ...]
    accelerated_frames: frozenset[int]
    pre_delay_pts: tuple[int, ...]


def synthesize_output_pts(timeline: FrameTimeline, recipe: DistortionRecipe) -> tuple[FrameTimeline, DistortionPlan]:
    """Apply a stall recipe to a uniform timeline, returning the distorted track.

    The input must be a valid uniform timeline. Output pts are
    round(sp_i) + ad_i where sp accumulates nominal intervals, compressed to
    nominal/AR on intervals whose bounding frames both lie in a catch-up
    window [sf_j, qne_j], and ad is the cumulative delay of earlier stalls.
    """
    problems = validate(timeline)
    if problems:
        raise ValueError(f"timeline invalid: {problems[0].invariant}: {problems[0].message}")
    if not timeline.is_uniform():
        raise ValueError("synthesis requires a uniform input timeline")
    validate_recipe(recipe)

    n = timeline.frame_count
    nominal = timeline.nominal_duration
    duration_s = timeline.duration_seconds
    for s in recipe.stalls:
        if Fraction(str(s.onset_s)) > duration_s:
            raise InvalidRecipeError(f"onset {s.onset_s}s beyond track duration {float(duration_s):.3f}s")

    sf = stall_frame_indices(recipe, timeline.framerate, n)
    delays = pts_delays(recipe, timeline.timebase)
    ad = cumulative_delays(sf, delays, n)
    ar = Fraction(str(recipe.acceleration_rate))
    qn = [catchup_frame_count(s.duration_s, ar, timeline.framerate) for s in recipe.stalls]

    qne: list[int] = []
    for j in range(len(sf)):
        cap = sf[j + 1] - 1 if j + 1 < len(sf) else n - 1
        qne.append(min(cap, sf[j] + qn[j]))

    accelerated: set[int] = set()
    for j in range(len(sf)):
        accelerated.update(range(sf[j], qne[j] + 1))

    # sp accumulated in ticks/ar.numerator so both interval kinds stay integral:
    # nominal is nominal*num units, nominal/AR is nominal*den units.
    unit = ar.numerator
    step_normal = nominal * ar.numerator
    step_fast = nominal * ar.denominator
    sp_units = timeline.pts[0] * unit
    rounded_sp = [timeline.pts[0]]
    out = [timeline.pts[0] + ad[0]]
    for i in range(2, n + 1):
        fast = (i - 1) in accelerated and i in accelerated
        sp_units += step_fast if fast else step_normal
        sp_i = (2 * sp_units + unit) // (2 * unit)
        rounded_sp.append(sp_i)
        out.append(sp_i + ad[i - 1])

    for a, b in zip(out, out[1:]):
        if b <= a:
            raise SynthesisDegenerateError(
                f"output pts not strictly increasing (AR {recipe.acceleration_rate} too aggressive for nominal {nominal})"
            )

    distorted = FrameTimeline(
        tuple(out), timeline.timebase, timeline.framerate, nominal, timeline.resolution
    )
    plan = DistortionPlan(
        stall_frame_indices=tuple(sf),
        pts_delays_ticks=tuple(delays),
        cumulative_delays_ticks=tuple(ad),
        catchup_counts=tuple(qn),
        catchup_end_indices=tuple(qne),
        accelerated_frames=frozenset(accelerated),
        pre_delay_pts=tuple(rounded_sp),
    )
    return distorted, plan


def sample_acceleration_rate(batch: str, rng: random.Random) -> float:
    """Draw one AR by inverse CDF over the batch's weights in table order.

    Weights are taken literally, not renormalized. 1080p_batch2's weights sum
    to 1.05, so its tail bucket is truncated: AR=2.25 realizes probability
    0.10 there, not the stated 0.15. Rows that sum to 1 realize exactly.
    """
    dist = AR_DISTRIBUTIONS.get(batch)
    if dist is None:
        raise ValueError(f"unknown batch {batch!r}, expected one of {BATCHES}")
    r = rng.random()
    acc = 0.0
    for value, prob in dist:
        acc += prob
        if r < acc:
            return value
    return dist[-1][0]


ONSET_EDGE_MARGIN_S = 0.5
# Keeps round(onset*fr) distinct for every corpus framerate (>= 20 fps needs >= 0.1 s).
ONSET_MIN_SEPARATION_S = 0.25


def sample_recipe(
    mode: Union[ModeTemplate, str],
    batch: str,
    seed: int,
    video_duration_s: float,
    *,
    crf: int = 22,
    source_id: str | None = None,
) -> DistortionRecipe:
    """Draw a concrete recipe for a stalling mode, deterministically from seed.

    Draw order is fixed (AR, then durations in template order, then onsets) so
    the AR marginal over seeds matches the batch distribution exactly. Onsets
    are uniform in [0.5, duration - 0.5] and redrawn until pairwise separation
    is at least 0.25 s; sorted onsets pair with the template's categories in
    template order.
    """
    mode_id = mode.mode_id if isinstance(mode, ModeTemplate) else mode
    comp = MODE_COMPOSITIONS.get(mode_id)
    if comp is None:
        raise ValueError(f"unknown mode_id {mode_id!r}")
    lo = ONSET_EDGE_MARGIN_S
    hi = video_duration_s - ONSET_EDGE_MARGIN_S
    if hi <= lo + (len(comp) - 1) * ONSET_MIN_SEPARATION_S:
        raise ValueError(f"video of {video_duration_s}s too short to place {len(comp)} stalls")

    rng = random.Random(seed)
    ar = sample_acceleration_rate(batch, rng)
    durations = [rng.choice(DURATION_CATEGORIES[c]) for c in comp]
    for _ in range(1000):
        onsets = sorted(rng.uniform(lo, hi) for _ in comp)
        if all(b - a >= ONSET_MIN_SEPARATION_S for a, b in zip(onsets, onsets[1:])):
            break
    else:
        raise ValueError("could not place non-colliding stall onsets")

    stalls = tuple(
        StallEvent(onset_s=onsets[k], duration_s=durations[k], category=comp[k]) for k in range(len(comp))
    )
    return DistortionRecipe(
        stalls=stalls,
        mode_id=mode_id,
        acceleration_rate=ar,
        crf=crf,
        seed=seed,
        source_id=source_id,
        batch=batch,
    )


RESOLUTION_BATCHES: tuple[tuple[str, tuple[int, int], tuple[str, ...]], ...] = (
    ("1080p", (1920, 1080), ("1080p_batch1", "1080p_batch2")),
    ("720p", (1280, 720), ("720p_batch1",)),
)

CORPUS_FRAMERATES = (20, 25, 30)


@dataclass(frozen=True)
class PlanEntry:
    video_id: str
    source_id: str
    kind: str  # "stalled" | "clean"
    resolution: tuple[int, int]
    framerate: int
    crf: int
    batch: str | None = None
    mode_id: str | None = None
    mode_slot: int | None = None


@dataclass(frozen=True)
class CorpusPlan:
    entries: tuple[PlanEntry, ...]

    @property
    def stalled_count(self) -> int:
        return sum(1 for e in self.entries if e.kind == "stalled")

    @property
    def clean_count(self) -> int:
        return sum(1 for e in self.entries if e.kind == "clean")

    @property
    def total(self) -> int:
        return len(self.entries)


def corpus_plan(
    source_count_per_cell: int = 7,
    crf_set: Sequence[int] = CRF_LEVELS,
    modes_per_video: int = 3,
) -> CorpusPlan:
    """Enumerate the full corpus layout.

    Sources are laid out per (resolution, framerate) cell. Each source yields
    one clean entry per crf, plus modes_per_video stalled entries per crf and
    batch; source k takes templates (k * modes_per_video + j) mod 21, so a
    7-source cell at 3 modes each covers all 21 templates exactly once. For
    the default parameters this reproduces 945 stalled + 210 clean = 1155.
    """
    templates = enumerate_stall_modes()
    entries: list[PlanEntry] = []
    for res_name, wh, batches in RESOLUTION_BATCHES:
        for fr in CORPUS_FRAMERATES:
            for k in range(source_count_per_cell):
                source_id = f"src-{res_name}-{fr}fps-{k + 1:02d}"
                for crf in crf_set:
                    entries.append(
                        PlanEntry(
                            video_id=f"{source_id}-crf{crf}-clean",
                            source_id=source_id,
                            kind="clean",
                            resolution=wh,
                            framerate=fr,
                            crf=crf,
                        )
                    )
                    for batch in batches:
                        for j in range(modes_per_video):
                            tpl = templates[(k * modes_per_video + j) % len(templates)]
                            entries.append(
                                PlanEntry(
                                    video_id=f"{source_id}-crf{crf}-{batch}-{tpl.mode_id}s{tpl.slot}",
                                    source_id=source_id,
                                    kind="stalled",
                                    resolution=wh,
                                    framerate=fr,
                                    crf=crf,
                                    batch=batch,
                                    mode_id=tpl.mode_id,
                                    mode_slot=tpl.slot,
                                )
                            )
    return CorpusPlan(tuple(entries))


def recipe_to_dict(recipe: DistortionRecipe) -> dict:
    return {
        "mode_id": recipe.mode_id,
        "stalls": [
            {"onset_s": s.onset_s, "duration_s": s.duration_s, "category": s.category} for s in recipe.stalls
        ],
        "ar": recipe.acceleration_rate,
        "crf": recipe.crf,
        "seed": recipe.seed,
        "source_id": recipe.source_id,
        "batch": recipe.batch,
    }


def recipe_from_dict(data: Mapping) -> DistortionRecipe:
    try:
        stalls = tuple(
            StallEvent(onset_s=float(s["onset_s"]), duration_s=float(s["duration_s"]), category=str(s["category"]))
            for s in data["stalls"]
        )
        recipe = DistortionRecipe(
            stalls=stalls,
            mode_id=str(data["mode_id"]),
            acceleration_rate=float(data["ar"]),
            crf=int(data["crf"]),
            seed=None if data.get("seed") is None else int(data["seed"]),
            source_id=data.get("source_id"),
            batch=data.get("batch"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRecipeError(f"malformed recipe record: {exc}") from exc
    validate_recipe(recipe)
    return recipe


def write_recipe(recipe: DistortionRecipe, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(recipe_to_dict(recipe), indent=2, sort_keys=True) + "\n")


def read_recipe(path: Union[str, Path]) -> DistortionRecipe:
    return recipe_from_dict(json.loads(Path(path).read_text()))
