"""HTTP service for the rating game and the generation studio.

Game sessions serve 30 shuffled images (15 real, 15 generated) without ever
revealing which is which; ratings append to a durable JSONL log that fully
reproduces /stats on replay. Generation requests run synchronously, one at a
time, against a loaded stage-2 checkpoint.

Rating log: one JSON object per line with exactly these fields:
  session_id   opaque id of the 30-image session
  player_id    free-text id the player gave at session start
  image_id     16-hex opaque id (sha1 of the pool-relative name; carries no
               group information)
  score        integer 0..10
  submitted_at unix timestamp (float seconds)
Group membership is never logged; /stats resolves it by rescanning the
image pools, and only sessions with all 30 images rated count.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import random
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import metrics
from .errors import ValidationError
from .images import decode_png, encode_png

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
SESSION_SIZE = 30
PER_GROUP = 15
AMBIGUOUS_BAND = (0.2, 0.8)
AMBIGUOUS_FRACTION = 0.05


@dataclass
class ServiceSettings:
    real_dir: Path
    gen_dir: Path
    log_path: Path
    checkpoint: Optional[Path] = None
    cors_origins: tuple = ("*",)
    rng_seed: Optional[int] = None
    max_batch: int = 8


@dataclass
class PoolImage:
    image_id: str
    path: Path
    group: str  # server-side only; never serialized


@dataclass
class GameSession:
    session_id: str
    player_id: str
    image_ids: list
    created_at: float
    groups: dict = field(repr=False, default_factory=dict)  # hidden map


class GameState:
    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.lock = threading.Lock()
        self.rng = random.Random(settings.rng_seed)
        self.pool: dict[str, PoolImage] = {}
        self.sessions: dict[str, GameSession] = {}
        self.ratings: list[dict] = []
        self.rated: set[tuple[str, str]] = set()
        self.jobs: dict[str, dict] = {}
        self.pipeline = None
        self._scan_pools()
        self._replay_log()
        if settings.checkpoint is not None:
            from .pipeline import Pipeline

            self.pipeline = Pipeline.load(settings.checkpoint)

    def _scan_pools(self):
        for group, root in (("real", self.settings.real_dir),
                            ("generated", self.settings.gen_dir)):
            root = Path(root)
            if not root.is_dir():
                continue
            for p in sorted(root.iterdir()):
                if p.suffix.lower() in IMAGE_EXTENSIONS:
                    image_id = hashlib.sha1(f"{group}/{p.name}".encode()).hexdigest()[:16]
                    self.pool[image_id] = PoolImage(image_id=image_id, path=p, group=group)

    def pool_by_group(self, group: str) -> list[PoolImage]:
        return [im for im in self.pool.values() if im.group == group]

    def _replay_log(self):
        path = Path(self.settings.log_path)
        if not path.exists():
            return
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            key = (rec["session_id"], rec["image_id"])
            if key in self.rated:
                continue
            self.rated.add(key)
            self.ratings.append(rec)

    def create_session(self, player_id: str) -> GameSession:
        real = self.pool_by_group("real")
        gen = self.pool_by_group("generated")
        if len(real) < PER_GROUP or len(gen) < PER_GROUP:
            raise HTTPException(status_code=409, detail=(
                f"image pools too small: need {PER_GROUP} per group, "
                f"have {len(real)} and {len(gen)}"))
        with self.lock:
            chosen = self.rng.sample(real, PER_GROUP) + self.rng.sample(gen, PER_GROUP)
            self.rng.shuffle(chosen)
            session = GameSession(
                session_id=uuid.uuid4().hex[:12],
                player_id=player_id,
                image_ids=[im.image_id for im in chosen],
                created_at=time.time(),
                groups={im.image_id: im.group for im in chosen})
            self.sessions[session.session_id] = session
        return session

    def add_rating(self, session_id: str, image_id: str, score: int):
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        if image_id not in session.groups:
            raise HTTPException(status_code=404, detail="image not in session")
        record = {
            "session_id": session_id,
            "player_id": session.player_id,
            "image_id": image_id,
            "score": int(score),
            "submitted_at": time.time(),
        }
        with self.lock:
            key = (session_id, image_id)
            if key in self.rated:
                raise HTTPException(status_code=409, detail="already rated")
            self.rated.add(key)
            self.ratings.append(record)
            path = Path(self.settings.log_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a") as fh:
                fh.write(json.dumps(record) + "\n")
                fh.flush()

    def stats(self) -> dict:
        per_session: dict[str, list[dict]] = {}
        for rec in self.ratings:
            per_session.setdefault(rec["session_id"], []).append(rec)
        complete = {sid: recs for sid, recs in per_session.items()
                    if len(recs) == SESSION_SIZE}
        pairs = []
        for recs in complete.values():
            for rec in recs:
                img = self.pool.get(rec["image_id"])
                if img is None:
                    log.warning("rating for unknown image %s ignored", rec["image_id"])
                    continue
                pairs.append((img.group, rec["score"]))
        try:
            summary = metrics.score_summary(pairs)
        except ValidationError as exc:
            raise HTTPException(status_code=409, detail=f"insufficient data: {exc}")
        return {
            "real": summary["real"].to_dict(),
            "generated": summary["generated"].to_dict(),
            "welch_t": summary["welch_t"],
            "n_sessions": len(complete),
            "n_ratings": len(pairs),
        }


class SessionRequest(BaseModel):
    player_id: str = Field(min_length=1, max_length=80)


class RatingRequest(BaseModel):
    image_id: str
    score: int = Field(ge=0, le=10)


def _prepare_mask(data: bytes, image_size: int) -> tuple[np.ndarray, list[str]]:
    warnings: list[str] = []
    try:
        arr = decode_png(data)
    except Exception:
        raise HTTPException(status_code=422, detail="mask is not a decodable image")
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    gray = arr.astype(np.float64) / 255.0
    ambiguous = np.mean((gray > AMBIGUOUS_BAND[0]) & (gray < AMBIGUOUS_BAND[1]))
    if ambiguous > AMBIGUOUS_FRACTION:
        raise HTTPException(status_code=422, detail=(
            f"mask is not binary after thresholding: {ambiguous:.1%} ambiguous pixels"))
    if gray.shape != (image_size, image_size):
        warnings.append(f"mask resized from {gray.shape} to {image_size}x{image_size}")
        idx_r = (np.arange(image_size) * gray.shape[0] / image_size).astype(int)
        idx_c = (np.arange(image_size) * gray.shape[1] / image_size).astype(int)
        gray = gray[np.ix_(idx_r, idx_c)]
    binary = (gray >= 0.5).astype(np.float32)
    if binary.sum() == 0:
        raise HTTPException(status_code=422, detail="mask has empty foreground")
    return binary, warnings


def create_app(settings: ServiceSettings) -> FastAPI:
    app = FastAPI(title="floorgen evaluation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(settings.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = GameState(settings)
    app.state.game = state

    @app.get("/health")
    def health():
        loaded = state.pipeline is not None
        return {
            "status": "ok",
            "checkpoint_loaded": loaded,
            "image_size": state.pipeline.config.image_size if loaded else None,
            "max_steps": state.pipeline.schedule.T if loaded else None,
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionRequest):
        session = state.create_session(body.player_id)
        return {"session_id": session.session_id, "image_count": len(session.image_ids)}

    @app.get("/sessions/{session_id}/images/{k}")
    def session_image(session_id: str, k: int):
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        if not 0 <= k < len(session.image_ids):
            raise HTTPException(status_code=404, detail="image index out of range")
        image = state.pool[session.image_ids[k]]
        return Response(content=image.path.read_bytes(), media_type="image/png",
                        headers={"X-Image-Id": image.image_id})

    @app.post("/sessions/{session_id}/ratings", status_code=204)
    def submit_rating(session_id: str, body: RatingRequest):
        state.add_rating(session_id, body.image_id, body.score)
        return Response(status_code=204)

    @app.get("/stats")
    def stats():
        return state.stats()

    @app.post("/generate")
    def generate(prompt: str = Form(...), steps: int = Form(...),
                 n: int = Form(1), seed: Optional[int] = Form(None),
                 mask: UploadFile = File(...)):
        if state.pipeline is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        pipe = state.pipeline
        if not 1 <= steps <= pipe.schedule.T:
            raise HTTPException(status_code=422,
                                detail=f"steps must be in [1, {pipe.schedule.T}]")
        if not 1 <= n <= settings.max_batch:
            raise HTTPException(status_code=422, detail=f"n must be in [1, {settings.max_batch}]")
        if not prompt.strip():
            raise HTTPException(status_code=422, detail="prompt must be non-empty")
        binary, warnings = _prepare_mask(mask.file.read(), pipe.config.image_size)
        if seed is None:
            seed = state.rng.randrange(2 ** 31)
        with state.lock:  # generation is single-writer, FIFO
            images = pipe.generate(prompt, binary, steps=steps, seed=seed, n=n)
        job_id = uuid.uuid4().hex[:12]
        state.jobs[job_id] = {
            "job_id": job_id,
            "status": "done",
            "images": [encode_png(img) for img in images],
            "warnings": warnings,
            "request": {"prompt": prompt, "steps": steps, "n": n, "seed": seed},
        }
        return {"job_id": job_id, "status": "done"}

    @app.get("/jobs/{job_id}")
    def job(job_id: str):
        record = state.jobs.get(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return {
            "job_id": record["job_id"],
            "status": record["status"],
            "images": [base64.b64encode(b).decode("ascii") for b in record["images"]],
            "warnings": record["warnings"],
            "request": record["request"],
        }

    return app
