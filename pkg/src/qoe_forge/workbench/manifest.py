"""Corpus manifests: newline-delimited JSON records tying ids to artifact files.

A manifest row names one video (source, clean, or stalled) and the relative
paths of its timing sidecar, recipe, schedule, and optional frame directory.
Paths are relative to the manifest file's directory so a corpus tree can be
moved wholesale.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

from ..distortion import RESOLUTION_BATCHES, enumerate_stall_modes
from ..timeline import as_framerate

KINDS = ("source", "clean", "stalled")


def derive_seed(master_seed: int, video_id: str) -> int:
    """Stable per-video seed from the master seed (first 8 digest bytes)."""
    digest = hashlib.sha256(f"{master_seed}:{video_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class ManifestEntry:
    video_id: str
    source_id: str
    kind: str
    resolution: tuple[int, int]
    framerate: Fraction
    crf: int | None = None
    batch: str | None = None
    mode_id: str | None = None
    mode_slot: int | None = None
    seed: int | None = None
    sidecar: str | None = None
    recipe: str | None = None
    schedule: str | None = None
    frames_dir: str | None = None

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "source_id": self.source_id,
            "kind": self.kind,
            "resolution": list(self.resolution),
            "framerate": f"{self.framerate.numerator}/{self.framerate.denominator}",
            "crf": self.crf,
            "batch": self.batch,
            "mode_id": self.mode_id,
            "mode_slot": self.mode_slot,
            "seed": self.seed,
            "sidecar": self.sidecar,
            "recipe": self.recipe,
            "schedule": self.schedule,
            "frames_dir": self.frames_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ManifestEntry":
        try:
            kind = data["kind"]
            if kind not in KINDS:
                raise ValueError(f"unknown kind {kind!r}")
            return cls(
                video_id=str(data["video_id"]),
                source_id=str(data["source_id"]),
                kind=kind,
                resolution=(int(data["resolution"][0]), int(data["resolution"][1])),
                framerate=as_framerate(data["framerate"]),
                crf=None if data.get("crf") is None else int(data["crf"]),
                batch=data.get("batch"),
                mode_id=data.get("mode_id"),
                mode_slot=None if data.get("mode_slot") is None else int(data["mode_slot"]),
                seed=None if data.get("seed") is None else int(data["seed"]),
                sidecar=data.get("sidecar"),
                recipe=data.get("recipe"),
                schedule=data.get("schedule"),
                frames_dir=data.get("frames_dir"),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ValueError(f"malformed manifest record: {exc}") from exc


@dataclass
class CorpusManifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.video_id: e for e in self.entries}

    def resolve(self, relative: str) -> Path:
        return self.root / relative

    def validate(self, require: Sequence[str] = ()) -> list[str]:
        """Return problems: duplicate ids, and for each field name in `require`
        ("sidecar"/"recipe"/"schedule") entries whose file is missing."""
        problems: list[str] = []
        seen: set[str] = set()
        for e in self.entries:
            if e.video_id in seen:
                problems.append(f"duplicate video_id {e.video_id}")
            seen.add(e.video_id)
            for fieldname in require:
                rel = getattr(e, fieldname)
                if rel is None:
                    problems.append(f"{e.video_id}: no {fieldname} recorded")
                elif not self.resolve(rel).exists():
                    problems.append(f"{e.video_id}: missing {fieldname} file {rel}")
        return problems


def load_manifest(path: Union[str, Path]) -> CorpusManifest:
    path = Path(path)
    entries: list[ManifestEntry] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entries.append(ManifestEntry.from_dict(json.loads(line)))
        except (json.JSONDecodeError, ValueError) as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    if not entries:
        raise ValueError(f"{path}: empty manifest")
    return CorpusManifest(root=path.parent, entries=entries)


def save_manifest(manifest: CorpusManifest, path: Union[str, Path]) -> None:
    lines = [json.dumps(e.to_dict(), sort_keys=True) for e in manifest.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def batches_for_resolution(resolution: tuple[int, int]) -> tuple[str, ...]:
    # Height >= 1080 takes the two 1080p batches, anything smaller the 720p one.
    for _, wh, batches in RESOLUTION_BATCHES:
        if wh[1] == resolution[1]:
            return batches
    return RESOLUTION_BATCHES[0][2] if resolution[1] >= 1080 else RESOLUTION_BATCHES[1][2]


def plan_from_sources(
    sources: Sequence[ManifestEntry],
    crf_set: Sequence[int],
    modes_per_video: int,
) -> list[ManifestEntry]:
    """Expand source entries into clean + stalled output entries.

    Mirrors the corpus layout: sources group into (resolution, framerate)
    cells in manifest order; source k of a cell takes mode templates
    (k * modes_per_video + j) mod 21. Output paths are filled in relative to
    the output root (sidecars/, recipes/, schedules/).
    """
    templates = enumerate_stall_modes()
    cell_counter: dict[tuple[tuple[int, int], Fraction], int] = {}
    out: list[ManifestEntry] = []
    for src in sources:
        if src.kind != "source":
            raise ValueError(f"{src.video_id}: distortion input must be source entries, got kind={src.kind}")
        cell = (src.resolution, src.framerate)
        k = cell_counter.get(cell, 0)
        cell_counter[cell] = k + 1
        for crf in crf_set:
            clean_id = f"{src.source_id}-crf{crf}-clean"
            out.append(
                ManifestEntry(
                    video_id=clean_id,
                    source_id=src.source_id,
                    kind="clean",
                    resolution=src.resolution,
                    framerate=src.framerate,
                    crf=crf,
                    sidecar=f"sidecars/{clean_id}.csv",
                    schedule=f"schedules/{clean_id}.csv",
                    frames_dir=src.frames_dir,
                )
            )
            for batch in batches_for_resolution(src.resolution):
                for j in range(modes_per_video):
                    tpl = templates[(k * modes_per_video + j) % len(templates)]
                    video_id = f"{src.source_id}-crf{crf}-{batch}-{tpl.mode_id}s{tpl.slot}"
                    out.append(
                        ManifestEntry(
                            video_id=video_id,
                            source_id=src.source_id,
                            kind="stalled",
                            resolution=src.resolution,
                            framerate=src.framerate,
                            crf=crf,
                            batch=batch,
                            mode_id=tpl.mode_id,
                            mode_slot=tpl.slot,
                            sidecar=f"sidecars/{video_id}.csv",
                            recipe=f"recipes/{video_id}.json",
                            schedule=f"schedules/{video_id}.csv",
                            frames_dir=src.frames_dir,
                        )
                    )
    return out
