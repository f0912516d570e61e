"""qoe-forge command line.

Subcommands cover the whole bench: make-sources (synthetic source tracks),
distort (recipe sampling + stall synthesis over a source manifest),
restructure (render schedules), mos (ratings -> MOS table), summarize
(MOS grouped by corpus facets), evaluate (predictor criteria report), serve
(rating session HTTP service).

Exit codes: 0 success, 2 input/configuration error, 3 degenerate computation.
Batch outputs are byte-deterministic for a fixed seed.
"""

from __future__ import annotations

import argparse
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

from .. import distortion, restructure, subjective, timeline
from ..criteria import (
    DegenerateFitError,
    UndefinedAucError,
    auc_analysis,
    correlations,
    partition_pairs,
)
from .config import ToolConfig
from .manifest import (
    CorpusManifest,
    ManifestEntry,
    derive_seed,
    load_manifest,
    plan_from_sources,
    save_manifest,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3


class InputError(Exception):
    pass


def _read_scores_csv(path: Path) -> dict[str, float]:
    import csv

    scores: dict[str, float] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["video_id", "score"]:
            raise InputError(f"{path}: expected header 'video_id,score'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise InputError(f"{path}: line {lineno} has {len(row)} fields, want 2")
            try:
                scores[row[0]] = float(row[1])
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno} non-numeric score") from exc
    if not scores:
        raise InputError(f"{path}: no score rows")
    return scores


def cmd_make_sources(args: argparse.Namespace) -> int:
    out = Path(args.out)
    (out / "sidecars").mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []
    for res_name, wh, _ in distortion.RESOLUTION_BATCHES:
        for fr in distortion.CORPUS_FRAMERATES:
            for k in range(args.per_cell):
                source_id = f"src-{res_name}-{fr}fps-{k + 1:02d}"
                frame_count = int(round(args.duration * fr))
                track = timeline.uniform_timeline(frame_count, fr, timeline.Timebase(1, 1000), wh)
                rel = f"sidecars/{source_id}.csv"
                timeline.write_sidecar(track, out / rel)
                frames_rel = None
                if args.frames:
                    frames_rel = f"frames/{source_id}"
                    _write_demo_frames(out / frames_rel, frame_count, wh, args.frame_scale, source_id)
                entries.append(
                    ManifestEntry(
                        video_id=source_id,
                        source_id=source_id,
                        kind="source",
                        resolution=wh,
                        framerate=Fraction(fr),
                        sidecar=rel,
                        frames_dir=frames_rel,
                    )
                )
    save_manifest(CorpusManifest(out, entries), out / "sources.ndjson")
    print(f"wrote {len(entries)} source tracks under {out}")
    return EXIT_OK


def _write_demo_frames(dirpath: Path, count: int, resolution: tuple[int, int], scale: int, label: str) -> None:
    from PIL import Image, ImageDraw

    dirpath.mkdir(parents=True, exist_ok=True)
    w = max(resolution[0] // scale, 64)
    h = max(resolution[1] // scale, 36)
    for i in range(1, count + 1):
        # Hue ramp plus stamped index so stall repeats are visually checkable.
        img = Image.new("RGB", (w, h), ((i * 7) % 256, (i * 13) % 256, (i * 29) % 256))
        draw = ImageDraw.Draw(img)
        draw.text((4, 4), f"{label} #{i}", fill=(255, 255, 255))
        img.save(dirpath / f"{i:06d}.png")


def cmd_distort(args: argparse.Namespace) -> int:
    cfg = ToolConfig.load(args.config)
    workers = args.workers if args.workers is not None else cfg.workers
    modes_per_video = args.modes_per_video if args.modes_per_video is not None else cfg.modes_per_video
    crf_set = tuple(int(c) for c in args.crf_set.split(",")) if args.crf_set else cfg.crf_set

    sources = load_manifest(Path(args.manifest))
    problems = sources.validate(require=("sidecar",))
    if problems:
        raise InputError("; ".join(problems[:5]))
    out = Path(args.out)
    for sub in ("sidecars", "recipes", "schedules"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    planned = plan_from_sources(sources.entries, crf_set, modes_per_video)
    source_tracks = {
        e.source_id: timeline.read_sidecar(sources.resolve(e.sidecar)) for e in sources.entries
    }

    def produce(entry: ManifestEntry) -> ManifestEntry:
        track = source_tracks[entry.source_id]
        if entry.kind == "clean":
            timeline.write_sidecar(track, out / entry.sidecar)
            return entry
        seed = derive_seed(args.seed, entry.video_id)
        recipe = distortion.sample_recipe(
            entry.mode_id,
            entry.batch,
            seed,
            float(track.duration_seconds),
            crf=entry.crf,
            source_id=entry.source_id,
        )
        distorted, _ = distortion.synthesize_output_pts(track, recipe)
        timeline.write_sidecar(distorted, out / entry.sidecar)
        distortion.write_recipe(recipe, out / entry.recipe)
        entry.seed = seed
        return entry

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(produce, planned))
    else:
        done = [produce(e) for e in planned]

    if cfg.encoder_command:
        _run_encoder(cfg.encoder_command, sources, done, out)

    save_manifest(CorpusManifest(out, done), out / "corpus.ndjson")
    print(f"wrote {len(done)} corpus entries under {out}")
    return EXIT_OK


def _run_encoder(template: str, sources: CorpusManifest, entries: list[ManifestEntry], out: Path) -> None:
    """Run the configured pixel encoder per entry and check frame counts match."""
    for entry in entries:
        if entry.frames_dir is None:
            continue
        src_dir = sources.resolve(entry.frames_dir)
        dst_rel = f"frames/{entry.video_id}"
        dst_dir = out / dst_rel
        dst_dir.mkdir(parents=True, exist_ok=True)
        cmd = template.format(frames_dir=src_dir, out_dir=dst_dir, crf=entry.crf)
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
        if proc.returncode != 0:
            raise InputError(f"encoder failed for {entry.video_id}: {proc.stderr.strip()[:200]}")
        n_src = len(list(src_dir.glob("*.png")))
        n_dst = len(list(dst_dir.glob("*.png")))
        if n_src != n_dst:
            raise InputError(f"encoder output for {entry.video_id} has {n_dst} frames, source has {n_src}")
        entry.frames_dir = dst_rel


def cmd_restructure(args: argparse.Namespace) -> int:
    manifest = load_manifest(Path(args.manifest))
    problems = manifest.validate(require=("sidecar",))
    if problems:
        raise InputError("; ".join(problems[:5]))
    todo = [e for e in manifest.entries if e.kind != "source"]

    def produce(entry: ManifestEntry) -> None:
        track = timeline.read_sidecar(manifest.resolve(entry.sidecar))
        schedule = restructure.restructure(track)
        restructure.write_schedule(schedule, manifest.resolve(entry.schedule))

    workers = args.workers or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(produce, todo))
    else:
        for e in todo:
            produce(e)
    print(f"wrote {len(todo)} render schedules")
    return EXIT_OK


def cmd_mos(args: argparse.Namespace) -> int:
    ratings = subjective.read_ratings_csv(Path(args.ratings))
    table, screens = subjective.mos_pipeline(ratings)
    subjective.write_mos_csv(table, Path(args.out))
    rejected = [s.subject_id for s in screens if s.rejected]
    print(f"wrote MOS for {len(table.videos)} videos from {len(table.subjects)} subjects" +
          (f" (rejected: {', '.join(rejected)})" if rejected else ""))
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    table = subjective.read_mos_csv(Path(args.mos))
    manifest = load_manifest(Path(args.manifest))
    factors: dict[str, subjective.VideoFactors] = {}
    for entry in manifest.entries:
        if entry.kind == "source":
            continue
        if entry.kind == "clean":
            factors[entry.video_id] = subjective.VideoFactors(
                resolution=entry.resolution,
                framerate=f"{entry.framerate.numerator}/{entry.framerate.denominator}",
                crf=entry.crf or 0,
                stall_count=0,
                acceleration_rate=1.0,
                mode_id="clean",
                total_stall_s=0.0,
            )
            continue
        recipe = distortion.read_recipe(manifest.resolve(entry.recipe))
        factors[entry.video_id] = subjective.VideoFactors(
            resolution=entry.resolution,
            framerate=f"{entry.framerate.numerator}/{entry.framerate.denominator}",
            crf=entry.crf or 0,
            stall_count=recipe.stall_count,
            acceleration_rate=recipe.acceleration_rate,
            mode_id=recipe.mode_id,
            total_stall_s=sum(s.duration_s for s in recipe.stalls),
        )
    aggregates = subjective.factor_summary(table, factors)
    subjective.write_summary_csv(aggregates, Path(args.out))
    print(f"wrote {len(aggregates)} aggregate rows")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    import json

    scores = _read_scores_csv(Path(args.scores))
    ratings = subjective.read_ratings_csv(Path(args.ratings))
    table, screens = subjective.mos_pipeline(ratings)
    missing = [v for v in table.videos if v not in scores]
    if missing:
        raise InputError(f"scores file lacks video(s): {missing[:3]}{'...' if len(missing) > 3 else ''}")
    pred = [scores[v] for v in table.videos]
    mos = [float(m) for m in table.mos]

    report_corr = correlations(pred, mos)
    partition = partition_pairs(table, alpha=args.alpha)
    partition = partition.with_predictions(scores)
    aucs = auc_analysis(partition)

    report = {
        "correlation": {
            "plcc": report_corr.plcc,
            "srcc": report_corr.srcc,
            "krcc": report_corr.krcc,
            "rmse": report_corr.rmse,
            "logistic": {
                "xi1": report_corr.fit.params.xi1,
                "xi2": report_corr.fit.params.xi2,
                "xi3": report_corr.fit.params.xi3,
                "xi4": report_corr.fit.params.xi4,
                "xi5": report_corr.fit.params.xi5,
            },
            "fit": {
                "iterations": report_corr.fit.iterations,
                "gradient_norm": report_corr.fit.gradient_norm,
                "restarts": report_corr.fit.restarts,
            },
        },
        "classification": {
            "alpha": args.alpha,
            "significance_test": "welch",
            "auc_different_vs_similar": aucs.auc_different_vs_similar,
            "auc_better_vs_worse": aucs.auc_better_vs_worse,
            "n_different": aucs.n_different,
            "n_similar": aucs.n_similar,
        },
        "metadata": {
            "video_count": len(table.videos),
            "subject_count": len(table.subjects),
            "rejected_subjects": [s.subject_id for s in screens if s.rejected],
            "rescale_map": "z'' = (2z + 9)/3 clamped to [1,5]",
            "auc_comparison": "hanley-mcneil correlated z; r = mean of class-conditional score correlations",
        },
    }
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"wrote evaluation report to {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    cfg = ToolConfig.load(args.config)
    manifest = load_manifest(Path(args.manifest))
    problems = manifest.validate(require=("schedule",))
    if problems:
        raise InputError("; ".join(problems[:5]))
    static_dir = Path(args.static) if args.static else None
    app = create_app(
        manifest,
        Path(args.ratings),
        master_seed=args.seed,
        playlist_size=args.playlist_size or cfg.playlist_size,
        static_dir=static_dir,
    )
    port = args.port or cfg.port
    uvicorn.run(app, host=args.host, port=port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qoe-forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-sources", help="generate synthetic uniform source tracks")
    p.add_argument("--out", required=True)
    p.add_argument("--per-cell", type=int, default=7, help="sources per resolution x framerate cell")
    p.add_argument("--duration", type=float, default=10.0, help="seconds per source")
    p.add_argument("--frames", action="store_true", help="also write stamped demo frames")
    p.add_argument("--frame-scale", type=int, default=8, help="downscale factor for demo frames")
    p.set_defaults(func=cmd_make_sources)

    p = sub.add_parser("distort", help="sample recipes and synthesize stalled tracks")
    p.add_argument("--manifest", required=True, help="source manifest (ndjson)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--workers", type=int)
    p.add_argument("--modes-per-video", type=int)
    p.add_argument("--crf-set", help="comma-separated crf values")
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("restructure", help="write render schedules for every corpus entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_restructure)

    p = sub.add_parser("mos", help="ratings CSV -> MOS table")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mos)

    p = sub.add_parser("summarize", help="MOS aggregates grouped by corpus facets")
    p.add_argument("--mos", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("evaluate", help="score a predictor against ratings")
    p.add_argument("--scores", required=True, help="CSV with header video_id,score")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the rating session service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratings", required=True, help="append-only output CSV")
    p.add_argument("--port", type=int)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--playlist-size", type=int)
    p.add_argument("--static", help="directory of station assets to serve at /")
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        DegenerateFitError,
        UndefinedAucError,
        distortion.SynthesisDegenerateError,
        subjective.DegenerateRatingsError,
    ) as exc:
        print(f"degenerate computation: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InputError, distortion.InvalidRecipeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
