"""HTTP JSON API exposing live annotation sessions.

Each session wraps an engine session: create it from a dataset file, read
its state, submit a full batch of labels to advance one round, delete it
when done.  True labels present in the dataset file are never echoed in
any response; the only labels the service knows about are the ones
submitted through the API.

Sessions live in process memory.  A per-session lock serializes label
submission with round computation; concurrent submissions see a conflict
instead of blocking.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .data import Dataset, load_dataset
from .engine import Session, SessionConfig
from .errors import FailureScoutError

PHASE_AWAITING = "awaiting_labels"
PHASE_COMPUTING = "computing"
PHASE_FINISHED = "finished"


class CreateSessionRequest(BaseModel):
    dataset_path: str
    theta: float = 0.5
    batch_size: int = Field(default=25, ge=1)
    m: int = Field(default=10, ge=1)
    knn: int = Field(default=10, ge=0)
    budget: float = Field(default=1.0, gt=0.0, le=1.0)
    seed: int = 0
    strategy: str = "DS"
    snapshot_dir: str | None = None


class LabelItem(BaseModel):
    id: int
    true_label: int


class SubmitLabelsRequest(BaseModel):
    labels: list[LabelItem]


class ManagedSession:
    def __init__(self, session_id: str, session: Session, ds: Dataset,
                 snapshot_dir: str | None):
        self.session_id = session_id
        self.session = session
        self.lock = threading.Lock()
        self.phase = PHASE_AWAITING
        self.snapshot_dir = snapshot_dir
        # descriptors for the UI; true labels deliberately left out
        self._descriptors = {
            s.id: {"id": s.id, "pseudolabel": s.pseudolabel, "display": s.display}
            for s in ds.samples
        }
        self.n_classes = ds.c

    def describe_batch(self, ids) -> list[dict]:
        return [self._descriptors[i] for i in ids]

    def state_view(self) -> dict:
        s = self.session
        return {
            "session_id": self.session_id,
            "phase": self.phase,
            "n": s.n,
            "n_classes": self.n_classes,
            "queried_count": s.queried_count,
            "max_queries": s.max_queries,
            "confirmed_patterns": [
                {"round": cp.round_index, "members": sorted(cp.members)}
                for cp in s.detection.confirmed
            ],
            "pending_batch": self.describe_batch(s.pending or []),
        }

    def snapshot(self, log) -> None:
        if self.snapshot_dir is None:
            return
        out = Path(self.snapshot_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "session_id": self.session_id,
            "round": log.round_index,
            "chosen": list(log.chosen),
            "misclassified": list(log.misclassified),
            "new_patterns": [list(p) for p in log.new_patterns],
            "queried_cum": log.queried_cum,
        }
        path = out / f"{self.session_id}-round{log.round_index:03d}.json"
        path.write_text(json.dumps(payload, indent=2) + "\n")


def create_app() -> FastAPI:
    app = FastAPI(title="failure-scout annotation API")
    # the browser frontend is served from a different origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    store: dict[str, ManagedSession] = {}
    store_lock = threading.Lock()

    def get_managed(session_id: str) -> ManagedSession:
        with store_lock:
            managed = store.get(session_id)
        if managed is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id}")
        return managed

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        path = Path(req.dataset_path)
        if not path.exists():
            raise HTTPException(status_code=400,
                                detail=f"dataset file not found: {path}")
        try:
            ds = load_dataset(path)
            cfg = SessionConfig(
                batch_size=req.batch_size, budget=req.budget, theta=req.theta,
                m_threshold=req.m, k_nn=req.knn, seed=req.seed,
                strategy=req.strategy,
            )
            session = Session(ds, cfg)
            batch = session.propose_batch()
        except FailureScoutError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        session_id = uuid.uuid4().hex[:12]
        managed = ManagedSession(session_id, session, ds, req.snapshot_dir)
        managed.phase = PHASE_AWAITING if batch else PHASE_FINISHED
        with store_lock:
            store[session_id] = managed
        return {
            "session_id": session_id,
            "phase": managed.phase,
            "n": session.n,
            "n_classes": managed.n_classes,
            "batch": managed.describe_batch(batch),
        }

    @app.get("/sessions/{session_id}")
    def read_session(session_id: str):
        return get_managed(session_id).state_view()

    @app.post("/sessions/{session_id}/labels")
    def submit_labels(session_id: str, req: SubmitLabelsRequest):
        managed = get_managed(session_id)
        if not managed.lock.acquire(blocking=False):
            raise HTTPException(status_code=409,
                                detail="session is computing; retry shortly")
        try:
            if managed.phase != PHASE_AWAITING:
                raise HTTPException(
                    status_code=409,
                    detail=f"labels not accepted in phase {managed.phase}",
                )
            session = managed.session
            pending = set(session.pending or [])
            submitted = [item.id for item in req.labels]
            if len(submitted) != len(set(submitted)):
                raise HTTPException(status_code=422,
                                    detail="duplicate ids in submission")
            missing = sorted(pending - set(submitted))
            extra = sorted(set(submitted) - pending)
            if missing or extra:
                raise HTTPException(
                    status_code=422,
                    detail=f"labels must cover exactly the pending batch; "
                           f"missing ids {missing}, unexpected ids {extra}",
                )
            bad = [item.id for item in req.labels
                   if not 0 <= item.true_label < managed.n_classes]
            if bad:
                raise HTTPException(
                    status_code=422,
                    detail=f"true_label out of range for ids {bad}",
                )
            managed.phase = PHASE_COMPUTING
            try:
                log = session.complete_round(
                    {item.id: item.true_label for item in req.labels}
                )
                managed.snapshot(log)
                next_batch = session.propose_batch()
            except Exception:
                managed.phase = PHASE_AWAITING if session.pending else PHASE_FINISHED
                raise
            managed.phase = PHASE_AWAITING if next_batch else PHASE_FINISHED
            return {
                "phase": managed.phase,
                "round": log.round_index,
                "queried_count": session.queried_count,
                "new_confirmed": [list(p) for p in log.new_patterns],
                "batch": managed.describe_batch(next_batch),
            }
        finally:
            managed.lock.release()

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        with store_lock:
            if session_id not in store:
                raise HTTPException(status_code=404,
                                    detail=f"unknown session {session_id}")
            del store[session_id]

    return app
