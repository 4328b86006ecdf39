"""HTTP annotation service for human-in-the-loop labeling.

Sessions live in memory. Each session owns an annotation pool, the
incrementally updated model, and a cached "pending" selection so that
repeated next-probe polls return the same probe and ranking until a label
for it arrives. All mutation for a session happens under its lock, so
concurrent submissions serialize and exactly one wins per offered probe.

Endpoints:

    POST /sessions                 create a session over a dataset
    GET  /sessions/{id}/next-probe current selection + ranked candidates
    POST /sessions/{id}/labels     submit a match or a no-match
    GET  /sessions/{id}/metrics    progress counters and milestone scores
    GET  /healthz                  liveness probe

Ranked candidate lists are truncated to the requested page (default top
50); offset/limit paginate through the rest. Optional snapshots write the
current model file plus an event log after every accepted label.
"""

import json
import os
import threading
import uuid
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import active as act
from .core import PROBE, FeatureMatrix
from .data import SyntheticSpec, TwoViewData, generate_synthetic, load_features, save_model
from .errors import (
    FormatError,
    HerError,
    InvalidInputError,
    InvalidParameterError,
    InvalidStateError,
    NotFoundError,
    PoolExhaustedError,
)
from .evaluation import SplitSpec, compute_cmc, make_split

DEFAULT_PAGE = 50


class DatasetRef(BaseModel):
    """Where the session's features come from.

    kind "synthetic" draws from the built-in generator; kind "files"
    reads probe and gallery feature files; kind "file" reads one merged
    feature file whose view tags separate the sides.
    """

    kind: str
    spec: Optional[dict] = None
    probe: Optional[str] = None
    gallery: Optional[str] = None
    path: Optional[str] = None


class SplitRequest(BaseModel):
    protocol: str = "half-split"
    train_fraction: float = 0.5
    single_shot: bool = True


class CreateSessionRequest(BaseModel):
    dataset: DatasetRef
    policy: str = "joint-e2"
    seed: int = 0
    ridge_weight: float = Field(default=0.1, alias="lambda")
    budget: Optional[int] = None
    budget_fraction: Optional[float] = None
    gallery_mode: str = "full"
    milestones: list = Field(default=[0.1, 0.2, 0.3, 0.4, 0.5])
    split: Optional[SplitRequest] = None
    page_size: int = DEFAULT_PAGE
    snapshot_dir: Optional[str] = None

    model_config = {"populate_by_name": True}


class LabelRequest(BaseModel):
    probe_id: int
    gallery_id: Optional[int] = None
    no_match: bool = False


def _load_dataset(ref):
    if ref.kind == "synthetic":
        if not ref.spec:
            raise InvalidInputError("synthetic dataset needs a spec object")
        return generate_synthetic(SyntheticSpec(**ref.spec))
    if ref.kind == "files":
        if not ref.probe or not ref.gallery:
            raise InvalidInputError("files dataset needs probe and gallery paths")
        for p in (ref.probe, ref.gallery):
            if not os.path.exists(p):
                raise NotFoundError(f"dataset file not found: {p}")
        return TwoViewData(load_features(ref.probe), load_features(ref.gallery))
    if ref.kind == "file":
        if not ref.path:
            raise InvalidInputError("file dataset needs a path")
        if not os.path.exists(ref.path):
            raise NotFoundError(f"dataset file not found: {ref.path}")
        return load_features(ref.path)
    raise InvalidInputError(f"unknown dataset kind {ref.kind!r}")


@dataclass
class PendingSelection:
    probe_id: int
    scores: dict
    ranked_ids: np.ndarray
    distances: np.ndarray


@dataclass
class AnnotationSession:
    """One annotation run plus its synchronization and bookkeeping."""

    session_id: str
    config: act.ActiveConfig
    pool: act.ActivePool
    model: object
    rng: np.random.Generator
    test_probe: Optional[FeatureMatrix] = None
    test_gallery: Optional[FeatureMatrix] = None
    page_size: int = DEFAULT_PAGE
    snapshot_dir: Optional[str] = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    pending: Optional[PendingSelection] = None
    events: list = field(default_factory=list)
    milestones: list = field(default_factory=list)
    milestone_plan: dict = field(default_factory=dict)
    last_report: Optional[dict] = None

    def propose(self):
        if self.pending is not None:
            return self.pending
        probe_id, scores = act.select_next_probe(
            self.pool, self.model, self.config, self.rng
        )
        ranked_ids, dists = act.rank_gallery(self.pool, self.model, probe_id)
        self.pending = PendingSelection(
            probe_id=int(probe_id),
            scores=scores.for_probe(probe_id) if scores is not None else None,
            ranked_ids=ranked_ids,
            distances=dists,
        )
        return self.pending

    def submit(self, probe_id, gallery_id):
        if self.pending is None:
            raise InvalidStateError("no probe is currently offered; fetch next-probe first")
        if int(probe_id) != self.pending.probe_id:
            raise InvalidStateError(
                f"probe {probe_id} is not the offered probe {self.pending.probe_id}"
            )
        if gallery_id is not None and int(gallery_id) not in set(
            self.pending.ranked_ids.tolist()
        ):
            raise InvalidInputError(
                f"gallery image {gallery_id} is not in the offered ranking"
            )
        self.model, event, report = act.apply_annotation(
            self.pool, self.model, probe_id, gallery_id, self.config
        )
        self.pending = None
        self.events.append(event)
        if report is not None:
            self.last_report = {
                "samples_applied": report.samples_applied,
                "classes_added": report.classes_added,
                "path": report.path,
                "elapsed": report.elapsed,
                "drift_estimate": report.drift_estimate,
            }
        recorded = []
        if event.matched and self.test_probe is not None:
            for fraction, at_step in self.milestone_plan.items():
                if self.pool.step == at_step:
                    curve = compute_cmc(self.model, self.test_probe, self.test_gallery)
                    entry = {
                        "fraction": fraction,
                        "step": at_step,
                        "rank1": curve.rank(1),
                        "rank5": curve.rank(5),
                        "rank10": curve.rank(10),
                        "rank20": curve.rank(20),
                    }
                    self.milestones.append(entry)
                    recorded.append(entry)
        self.milestones.sort(key=lambda m: m["fraction"])
        if self.snapshot_dir:
            self.snapshot(self.snapshot_dir)
        return event, report, recorded

    def snapshot(self, directory):
        os.makedirs(directory, exist_ok=True)
        if self.model is not None and self.model.class_count > 0:
            save_model(self.model, os.path.join(directory, f"{self.session_id}.herm"))
        log = {
            "session_id": self.session_id,
            "policy": self.config.policy,
            "step": self.pool.step,
            "selections": self.pool.selections,
            "events": [asdict(e) for e in self.events],
            "milestones": self.milestones,
        }
        with open(os.path.join(directory, f"{self.session_id}.events.json"), "w") as fh:
            json.dump(log, fh, indent=2)

    def metrics(self):
        return {
            "session_id": self.session_id,
            "policy": self.config.policy,
            "step": self.pool.step,
            "selections": self.pool.selections,
            "budget": self.pool.budget,
            "labeled": len(self.pool.labeled_probe_ids),
            "parked": len(self.pool.parked_probe_ids),
            "unlabeled_probes": len(self.pool.unlabeled_probe_ids),
            "unlabeled_gallery": len(self.pool.unlabeled_gallery_ids),
            "classes": int(self.model.class_count) if self.model is not None else 0,
            "exhausted": self.pool.exhausted(),
            "milestones": self.milestones,
            "last_update": self.last_report,
        }


def build_session(request, session_id=None):
    """Construct a session the same way the offline simulator does.

    The per-trial seed derivation and the pool construction are shared
    with simulate_active_run (trial 0), so a scripted client that answers
    with ground truth reproduces the offline run exactly.
    """
    dataset = _load_dataset(request.dataset)
    config = act.ActiveConfig(
        policy=request.policy,
        lam=request.ridge_weight,
        budget=request.budget,
        budget_fraction=request.budget_fraction,
        seed=request.seed,
        gallery_mode=request.gallery_mode,
        milestones=tuple(request.milestones),
    )
    split_seed, rng = act.derive_trial_streams(config.seed, 0)

    test_probe = test_gallery = None
    if request.split is not None:
        spec = SplitSpec(
            protocol=request.split.protocol,
            train_fraction=request.split.train_fraction,
            single_shot=request.split.single_shot,
            seed=split_seed,
        )
        result = make_split(dataset, spec)
        train = result.train
        test_probe, test_gallery = result.test_probe, result.test_gallery
    else:
        train = dataset if isinstance(dataset, FeatureMatrix) else dataset.merged()

    probe_count = int(np.sum(train.views == PROBE))
    budget = config.resolve_budget(probe_count)
    pool = act.build_active_pool(train, budget)
    model = act.empty_incremental_model(pool.probe.feature_dim, config.lam)
    if request.page_size < 1:
        raise InvalidParameterError("page_size must be >= 1")
    return AnnotationSession(
        session_id=session_id or uuid.uuid4().hex,
        config=config,
        pool=pool,
        model=model,
        rng=rng,
        test_probe=test_probe,
        test_gallery=test_gallery,
        page_size=request.page_size,
        snapshot_dir=request.snapshot_dir,
        milestone_plan=act.milestone_steps(config.milestones, pool.probe.sample_count)
        if test_probe is not None
        else {},
    )


_STATUS = {
    NotFoundError: 404,
    InvalidStateError: 409,
    PoolExhaustedError: 409,
    InvalidInputError: 422,
    InvalidParameterError: 422,
    FormatError: 422,
}


def create_app(static_dir=None):
    """The FastAPI application; static_dir mounts built console assets at /ui."""
    app = FastAPI(title="her annotation service", version="0.1.0")
    sessions = {}
    registry_lock = threading.Lock()

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        if not os.path.isdir(static_dir):
            raise NotFoundError(f"static asset directory not found: {static_dir}")
        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    @app.exception_handler(HerError)
    async def _her_error(_request: Request, exc: HerError):
        status = 500
        for klass, code in _STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    def _get(session_id):
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id}")
        return session

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        session = build_session(request)
        with registry_lock:
            sessions[session.session_id] = session
        return {
            "session_id": session.session_id,
            "policy": session.config.policy,
            "budget": session.pool.budget,
            "probe_count": session.pool.probe.sample_count,
            "gallery_count": session.pool.gallery.sample_count,
            "feature_dim": session.pool.probe.feature_dim,
            "step": 0,
        }

    @app.get("/sessions/{session_id}/next-probe")
    def next_probe(
        session_id: str,
        offset: int = Query(default=0, ge=0),
        limit: Optional[int] = Query(default=None, ge=1),
    ):
        session = _get(session_id)
        with session.lock:
            pending = session.propose()
            page = limit if limit is not None else session.page_size
            ids = pending.ranked_ids[offset : offset + page]
            dists = pending.distances[offset : offset + page]
            return {
                "session_id": session_id,
                "probe_id": pending.probe_id,
                "step": session.pool.step,
                "selections": session.pool.selections,
                "scores": pending.scores,
                "ranking": [
                    {"gallery_id": int(g), "distance": float(d), "rank": offset + i + 1}
                    for i, (g, d) in enumerate(zip(ids.tolist(), dists.tolist()))
                ],
                "total_candidates": int(pending.ranked_ids.size),
                "offset": offset,
                "returned": int(ids.size),
            }

    @app.post("/sessions/{session_id}/labels")
    def submit_label(session_id: str, request: LabelRequest):
        session = _get(session_id)
        with session.lock:
            if request.no_match:
                gallery_id = None
            elif request.gallery_id is None:
                raise InvalidInputError("provide gallery_id or set no_match")
            else:
                gallery_id = request.gallery_id
            event, report, recorded = session.submit(request.probe_id, gallery_id)
            return {
                "session_id": session_id,
                "step": session.pool.step,
                "selections": session.pool.selections,
                "matched": event.matched,
                "identity": event.identity,
                "probe_id": event.probe_id,
                "gallery_id": event.gallery_id,
                "report": session.last_report if event.matched else None,
                "milestones_recorded": recorded,
                "exhausted": session.pool.exhausted(),
            }

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str):
        session = _get(session_id)
        with session.lock:
            return session.metrics()

    return app


def run_server(host="127.0.0.1", port=8330, app=None, static_dir=None):
    """Blocking uvicorn runner used by the command-line entry point."""
    import uvicorn

    uvicorn.run(
        app or create_app(static_dir=static_dir),
        host=host,
        port=port,
        log_level="warning",
    )
