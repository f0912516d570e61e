"""Subjective-score processing: per-rater normalization, outlier rejection, MOS.

The pipeline mirrors standard single-stimulus practice. Raw 1..5 ratings are
z-scored per subject (sample std, N-1), outlier subjects are rejected by the
classic two-threshold counting rule (per-video bounds of 2 sigma when the
video's kurtosis sits in [2,4], sqrt(20) sigma otherwise; a subject falls when
more than 5% of their ratings are outliers AND the outliers are two-sided),
the surviving z-scores are rescaled onto [1,5] via z'' = (2z + 9)/3, and per
video the rescaled scores average into a MOS.

Scores live in a subjects x videos matrix with NaN for missing entries; every
statistic here is computed over present ratings only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy import stats as sstats

RATINGS_HEADER = ("subject_id", "video_id", "score", "timestamp_iso8601")
MOS_HEADER = ("video_id", "mos", "rater_count", "stddev")


class DegenerateRatingsError(ValueError):
    """Ratings exist but carry no usable signal after screening/normalization."""

# Rejection rule constants: normal-shape kurtosis window and bound widths.
KURTOSIS_LO, KURTOSIS_HI = 2.0, 4.0
BOUND_NORMAL = 2.0
BOUND_FREE = math.sqrt(20.0)
OUTLIER_FRACTION = 0.05
ONE_SIDEDNESS = 0.3


@dataclass
class RatingsMatrix:
    """Subjects x videos score matrix, NaN where a subject skipped a video."""

    subjects: tuple[str, ...]
    videos: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self) -> None:
        s, v = self.scores.shape
        if s != len(self.subjects) or v != len(self.videos):
            raise ValueError(
                f"scores shape {self.scores.shape} does not match {len(self.subjects)} subjects x {len(self.videos)} videos"
            )
        present = self.scores[~np.isnan(self.scores)]
        if present.size and (present.min() < 1.0 or present.max() > 5.0):
            raise ValueError("scores must lie in [1, 5]")

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, float]]) -> "RatingsMatrix":
        """Build from (subject_id, video_id, score) triples, first-seen order."""
        subjects: list[str] = []
        videos: list[str] = []
        cells: dict[tuple[str, str], float] = {}
        for subject, video, score in rows:
            if (subject, video) in cells:
                raise ValueError(f"duplicate rating for subject {subject!r} video {video!r}")
            if subject not in subjects:
                subjects.append(subject)
            if video not in videos:
                videos.append(video)
            cells[(subject, video)] = float(score)
        if not cells:
            raise ValueError("no ratings")
        scores = np.full((len(subjects), len(videos)), np.nan)
        vid_index = {v: j for j, v in enumerate(videos)}
        sub_index = {s: i for i, s in enumerate(subjects)}
        for (subject, video), score in cells.items():
            scores[sub_index[subject], vid_index[video]] = score
        return cls(tuple(subjects), tuple(videos), scores)

    def subset(self, subject_ids: Sequence[str]) -> "RatingsMatrix":
        keep = [self.subjects.index(s) for s in subject_ids]
        return RatingsMatrix(tuple(self.subjects[i] for i in keep), self.videos, self.scores[keep, :].copy())

    def per_subject_counts(self) -> np.ndarray:
        return (~np.isnan(self.scores)).sum(axis=1)

    def per_video_counts(self) -> np.ndarray:
        return (~np.isnan(self.scores)).sum(axis=0)


def read_ratings_csv(path: Union[str, Path]) -> RatingsMatrix:
    """Read a ratings CSV (subject_id,video_id,score,timestamp_iso8601); timestamps ignored."""
    path = Path(path)
    rows: list[tuple[str, str, float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header[:3]) != RATINGS_HEADER[:3]:
            raise ValueError(f"{path}: expected header starting 'subject_id,video_id,score'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) < 3:
                raise ValueError(f"{path}: line {lineno} has {len(row)} fields, want >= 3")
            try:
                rows.append((row[0].strip(), row[1].strip(), float(row[2])))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno} has non-numeric score {row[2]!r}") from exc
    if not rows:
        raise ValueError(f"{path}: no rating rows")
    return RatingsMatrix.from_rows(rows)


def append_rating_row(
    path: Union[str, Path], subject_id: str, video_id: str, score: int, timestamp: str = ""
) -> None:
    """Append one rating, creating the file with its header when absent."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(RATINGS_HEADER)
        writer.writerow([subject_id, video_id, score, timestamp])
        fh.flush()


def zscore_normalize(ratings: RatingsMatrix) -> tuple[np.ndarray, list[str]]:
    """Per-subject z-scores over present ratings (mean, sample std with N-1).

    Subjects with fewer than two ratings or zero variance cannot be normalized;
    their rows come back all-NaN and their ids in the second return value.
    """
    z = np.full_like(ratings.scores, np.nan)
    degenerate: list[str] = []
    for i, subject in enumerate(ratings.subjects):
        row = ratings.scores[i]
        present = row[~np.isnan(row)]
        if present.size < 2:
            degenerate.append(subject)
            continue
        std = present.std(ddof=1)
        if std == 0.0:
            degenerate.append(subject)
            continue
        z[i] = (row - present.mean()) / std
    return z, degenerate


@dataclass(frozen=True)
class SubjectScreen:
    subject_id: str
    outlier_high: int
    outlier_low: int
    ratings_count: int
    rejected: bool


def reject_subjects(ratings: RatingsMatrix) -> tuple[tuple[str, ...], tuple[SubjectScreen, ...]]:
    """Two-threshold outlier-subject rejection on the raw score matrix.

    Per video: bounds are mean +/- 2*std when the population-moment kurtosis
    m4/m2^2 lies in [2, 4], else mean +/- sqrt(20)*std (std sample, N-1).
    Strict comparisons, so a zero-variance video counts nobody. Subject i is
    rejected iff (P+Q)/N > 0.05 and |P-Q|/(P+Q) < 0.3.
    """
    if len(ratings.subjects) < 3:
        raise ValueError(f"need >= 3 subjects to screen, got {len(ratings.subjects)}")
    scores = ratings.scores
    n_sub, n_vid = scores.shape
    upper = np.full(n_vid, np.nan)
    lower = np.full(n_vid, np.nan)
    for j in range(n_vid):
        col = scores[:, j]
        present = col[~np.isnan(col)]
        if present.size < 2:
            continue
        mean = present.mean()
        std = present.std(ddof=1)
        m2 = ((present - mean) ** 2).mean()
        if m2 > 0:
            beta2 = ((present - mean) ** 4).mean() / (m2 * m2)
            width = BOUND_NORMAL if KURTOSIS_LO <= beta2 <= KURTOSIS_HI else BOUND_FREE
        else:
            width = BOUND_NORMAL
        upper[j] = mean + width * std
        lower[j] = mean - width * std

    screens: list[SubjectScreen] = []
    retained: list[str] = []
    for i, subject in enumerate(ratings.subjects):
        row = scores[i]
        present_mask = ~np.isnan(row)
        usable = present_mask & ~np.isnan(upper)
        p = int((row[usable] > upper[usable]).sum())
        q = int((row[usable] < lower[usable]).sum())
        n = int(present_mask.sum())
        rejected = False
        if n > 0 and (p + q) / n > OUTLIER_FRACTION:
            if (p + q) > 0 and abs(p - q) / (p + q) < ONE_SIDEDNESS:
                rejected = True
        screens.append(SubjectScreen(subject, p, q, n, rejected))
        if not rejected:
            retained.append(subject)
    return tuple(retained), tuple(screens)


def rescale_zscores(z: np.ndarray) -> np.ndarray:
    """Map z onto the rating scale: z'' = (2z + 9) / 3, clamped to [1, 5]."""
    return np.clip((2.0 * z + 9.0) / 3.0, 1.0, 5.0)


@dataclass
class MosTable:
    videos: tuple[str, ...]
    mos: np.ndarray
    rater_count: np.ndarray
    stddev: np.ndarray
    subjects: tuple[str, ...]
    rescaled: np.ndarray  # subjects x videos, post-rescale, NaN missing
    degenerate_subjects: tuple[str, ...] = ()
    excluded_videos: tuple[str, ...] = ()

    def as_mapping(self) -> dict[str, float]:
        return {v: float(m) for v, m in zip(self.videos, self.mos)}


def compute_mos(ratings: RatingsMatrix) -> MosTable:
    """Normalize, rescale and average an (already screened) ratings matrix.

    Videos left with zero usable ratings are dropped from the table and listed
    in excluded_videos. stddev is the sample std of the rescaled scores (0.0
    when only one rater).
    """
    z, degenerate = zscore_normalize(ratings)
    usable_rows = [i for i, s in enumerate(ratings.subjects) if s not in degenerate]
    if not usable_rows:
        raise DegenerateRatingsError("no subject has enough ratings to normalize")
    rescaled = rescale_zscores(z)

    videos: list[str] = []
    mos: list[float] = []
    counts: list[int] = []
    stds: list[float] = []
    excluded: list[str] = []
    for j, video in enumerate(ratings.videos):
        col = rescaled[:, j]
        present = col[~np.isnan(col)]
        if present.size == 0:
            excluded.append(video)
            continue
        videos.append(video)
        mos.append(float(present.mean()))
        counts.append(int(present.size))
        stds.append(float(present.std(ddof=1)) if present.size > 1 else 0.0)
    if not videos:
        raise DegenerateRatingsError("no video has any usable rating")
    return MosTable(
        videos=tuple(videos),
        mos=np.array(mos),
        rater_count=np.array(counts, dtype=int),
        stddev=np.array(stds),
        subjects=tuple(ratings.subjects[i] for i in usable_rows),
        rescaled=rescaled,
        degenerate_subjects=tuple(degenerate),
        excluded_videos=tuple(excluded),
    )


def mos_pipeline(ratings: RatingsMatrix) -> tuple[MosTable, tuple[SubjectScreen, ...]]:
    """Rejection followed by MOS computation on the retained subjects."""
    retained, screens = reject_subjects(ratings)
    if not retained:
        raise DegenerateRatingsError("rejection removed every subject")
    return compute_mos(ratings.subset(retained)), screens


def screen_raters(training: RatingsMatrix, k: int) -> list[str]:
    """Pick the k candidates most consistent with the pooled opinion.

    MOS is computed over all candidates; each candidate is scored by the
    Spearman correlation of their raw scores against that MOS over the videos
    they rated. Ties break lexicographically by subject id.
    """
    if not 1 <= k <= len(training.subjects):
        raise ValueError(f"k must be in [1, {len(training.subjects)}], got {k}")
    table = compute_mos(training)
    mos_by_video = table.as_mapping()
    ranked: list[tuple[float, str]] = []
    for i, subject in enumerate(training.subjects):
        row = training.scores[i]
        pairs = [
            (row[j], mos_by_video[v])
            for j, v in enumerate(training.videos)
            if not np.isnan(row[j]) and v in mos_by_video
        ]
        if len(pairs) < 2:
            rho = -1.0
        else:
            own, consensus = zip(*pairs)
            rho = sstats.spearmanr(own, consensus).statistic
            if np.isnan(rho):
                rho = -1.0
        ranked.append((float(rho), subject))
    ranked.sort(key=lambda t: (-t[0], t[1]))
    return [subject for _, subject in ranked[:k]]


def write_mos_csv(table: MosTable, path: Union[str, Path]) -> None:
    lines = [",".join(MOS_HEADER)]
    for v, m, n, s in zip(table.videos, table.mos, table.rater_count, table.stddev):
        lines.append(f"{v},{m:.6f},{n},{s:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mos_csv(path: Union[str, Path]) -> MosTable:
    path = Path(path)
    videos: list[str] = []
    mos: list[float] = []
    counts: list[int] = []
    stds: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MOS_HEADER:
            raise ValueError(f"{path}: expected header '{','.join(MOS_HEADER)}'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: line {lineno} has {len(row)} fields, want 4")
            videos.append(row[0])
            mos.append(float(row[1]))
            counts.append(int(row[2]))
            stds.append(float(row[3]))
    if not videos:
        raise ValueError(f"{path}: no rows")
    return MosTable(
        videos=tuple(videos),
        mos=np.array(mos),
        rater_count=np.array(counts, dtype=int),
        stddev=np.array(stds),
        subjects=(),
        rescaled=np.empty((0, len(videos))),
    )


@dataclass(frozen=True)
class VideoFactors:
    """Grouping facets for one corpus entry, as recorded in manifest + recipe."""

    resolution: tuple[int, int]
    framerate: str
    crf: int
    stall_count: int
    acceleration_rate: float
    mode_id: str  # "clean" for undistorted entries
    total_stall_s: float


@dataclass(frozen=True)
class GroupAggregate:
    dimension: str
    group: str
    count: int
    mean_mos: float
    std_mos: float
    min_mos: float
    max_mos: float


def factor_summary(table: MosTable, factors: Mapping[str, VideoFactors]) -> list[GroupAggregate]:
    """MOS aggregates per grouping dimension (resolution, framerate, crf,
    stall_count, ar_mode, total_stall_s). Every table video must have factors."""
    missing = [v for v in table.videos if v not in factors]
    if missing:
        raise ValueError(f"no factors for video(s): {missing[:3]}{'...' if len(missing) > 3 else ''}")

    def key_of(dim: str, f: VideoFactors) -> str:
        if dim == "resolution":
            return f"{f.resolution[0]}x{f.resolution[1]}"
        if dim == "framerate":
            return f.framerate
        if dim == "crf":
            return str(f.crf)
        if dim == "stall_count":
            return str(f.stall_count)
        if dim == "ar_mode":
            return f"{f.mode_id}@AR{f.acceleration_rate:g}"
        return f"{f.total_stall_s:g}"

    dims = ("resolution", "framerate", "crf", "stall_count", "ar_mode", "total_stall_s")
    out: list[GroupAggregate] = []
    for dim in dims:
        buckets: dict[str, list[float]] = {}
        for v, m in zip(table.videos, table.mos):
            buckets.setdefault(key_of(dim, factors[v]), []).append(float(m))
        for group in sorted(buckets):
            vals = np.array(buckets[group])
            out.append(
                GroupAggregate(
                    dimension=dim,
                    group=group,
                    count=len(vals),
                    mean_mos=float(vals.mean()),
                    std_mos=float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                    min_mos=float(vals.min()),
                    max_mos=float(vals.max()),
                )
            )
    return out


def write_summary_csv(aggregates: Sequence[GroupAggregate], path: Union[str, Path]) -> None:
    lines = ["dimension,group,count,mean_mos,std_mos,min_mos,max_mos"]
    for a in aggregates:
        lines.append(
            f"{a.dimension},{a.group},{a.count},{a.mean_mos:.6f},{a.std_mos:.6f},{a.min_mos:.6f},{a.max_mos:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
