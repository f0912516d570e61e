"""Rating-session HTTP service.

Serves playlists, render schedules, and frame images to a rating station and
collects its 1..5 scores into an append-only ratings CSV. Sessions are held in
memory; each gets a per-session playlist shuffle whose seed derives from the
server's master seed and is recorded in a sessions log next to the ratings
file.

Playlist items walk pending -> played -> rated. A schedule fetch carrying
?session=<id> marks the item played; a rating is accepted only in state
played, so double submissions and rate-before-watch are rejected with a
reason rather than an HTTP error (malformed requests still get 4xx).
"""

from __future__ import annotations

import json
import random
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from ..restructure import read_schedule
from ..subjective import append_rating_row
from .manifest import CorpusManifest, ManifestEntry, derive_seed

PENDING, PLAYED, RATED = "pending", "played", "rated"


@dataclass
class Session:
    session_id: str
    subject: str
    seed: int
    playlist: list[str]
    states: dict[str, str] = field(default_factory=dict)


class RatingBody(BaseModel):
    session_id: str
    video_id: str
    score: int


def create_app(
    manifest: CorpusManifest,
    ratings_path: Path,
    master_seed: int = 0,
    playlist_size: int | None = None,
    static_dir: Path | None = None,
) -> FastAPI:
    app = FastAPI(title="qoe-forge rating service")
    entries = {e.video_id: e for e in manifest.entries if e.kind != "source"}
    if not entries:
        raise ValueError("manifest has no rateable entries")
    sessions: dict[str, Session] = {}
    lock = threading.Lock()
    sessions_log = ratings_path.with_name(ratings_path.name + ".sessions.ndjson")

    def _load_schedule_payload(entry: ManifestEntry) -> dict:
        if entry.schedule is None:
            raise HTTPException(status_code=404, detail=f"{entry.video_id} has no schedule")
        path = manifest.resolve(entry.schedule)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"schedule file missing for {entry.video_id}")
        schedule = read_schedule(path)
        return {
            "video_id": entry.video_id,
            "timebase": [schedule.timebase.numerator, schedule.timebase.denominator],
            "framerate": f"{schedule.framerate.numerator}/{schedule.framerate.denominator}",
            "resolution": list(schedule.resolution),
            "nominal_duration": schedule.nominal_duration,
            "entries": [
                {
                    "entry_index": i + 1,
                    "source_frame_index": e.source_frame_index,
                    "render_pts": e.render_pts,
                    "flag": e.flag,
                }
                for i, e in enumerate(schedule.entries)
            ],
        }

    @app.get("/api/session")
    def new_session(subject: str):
        if not subject.strip():
            raise HTTPException(status_code=422, detail="subject must be non-empty")
        with lock:
            session_id = f"{subject}-{uuid.uuid4().hex[:12]}"
            seed = derive_seed(master_seed, session_id)
            playlist = sorted(entries)
            random.Random(seed).shuffle(playlist)
            if playlist_size is not None:
                playlist = playlist[:playlist_size]
            session = Session(
                session_id=session_id,
                subject=subject,
                seed=seed,
                playlist=playlist,
                states={v: PENDING for v in playlist},
            )
            sessions[session_id] = session
            with sessions_log.open("a") as fh:
                fh.write(
                    json.dumps(
                        {"session_id": session_id, "subject": subject, "seed": seed, "playlist": playlist},
                        sort_keys=True,
                    )
                    + "\n"
                )
        return {"session_id": session_id, "playlist": playlist}

    @app.get("/api/video/{video_id}/schedule")
    def video_schedule(video_id: str, session: str | None = None):
        entry = entries.get(video_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown video {video_id}")
        payload = _load_schedule_payload(entry)
        if session is not None:
            with lock:
                sess = sessions.get(session)
                if sess is not None and sess.states.get(video_id) == PENDING:
                    sess.states[video_id] = PLAYED
        return payload

    @app.get("/api/video/{video_id}/frame/{frame_index}")
    def video_frame(video_id: str, frame_index: int):
        entry = entries.get(video_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown video {video_id}")
        if entry.frames_dir is None:
            raise HTTPException(status_code=404, detail=f"{video_id} has no frames")
        path = manifest.resolve(entry.frames_dir) / f"{frame_index:06d}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no frame {frame_index} for {video_id}")
        return FileResponse(path, media_type="image/png")

    @app.post("/api/rating")
    def post_rating(body: RatingBody):
        def rejected(reason: str):
            return JSONResponse({"accepted": False, "reason": reason})

        with lock:
            sess = sessions.get(body.session_id)
            if sess is None:
                return rejected("unknown_session")
            state = sess.states.get(body.video_id)
            if state is None:
                return rejected("not_in_playlist")
            if state == RATED:
                return rejected("already_rated")
            if state == PENDING:
                return rejected("not_played")
            if not 1 <= body.score <= 5:
                return rejected("score_out_of_range")
            timestamp = datetime.now(timezone.utc).isoformat()
            append_rating_row(ratings_path, sess.subject, body.video_id, body.score, timestamp)
            sess.states[body.video_id] = RATED
        return {"accepted": True}

    if static_dir is not None and static_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="station")

    return app
