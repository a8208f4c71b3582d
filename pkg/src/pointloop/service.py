"""HTTP service wrapping the pipeline: runs, benchmark storage, evaluation,
and the blinded review workflow consumed by the web console.

State lives under one directory (runs, datasets, bench entries, review
queue, audit log, rendered-view cache). Run execution happens on background
threads; runs found in pending/running state at startup are resumed, and the
engine's per-object persistence plus the fingerprint response cache make
that resume idempotent (no completed backend request is ever re-issued).

Review tasks are leased to reviewers with a timeout. Caption-scoring tasks
are shuffled and blinded: payloads carry run-local aliases only, and the
alias -> model map resolves only after every task in the group has a
decision.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from random import Random
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .backends import (
    AuditLog,
    BackendClient,
    BackendDescriptor,
    HttpTransport,
    ResponseCache,
)
from .bench import BenchEntry, BenchStore, EvalRunConfig, build_bench_entry, run_eval
from .dataset import DatasetStore, HoldoutRegistry
from .engine import BootstrapConfig, CaptionRecord, annotate_3d, load_object_cloud, \
    refine_2d, run_bootstrap
from .pointcloud import RenderConfig, encode_png, normalize_to_unit_sphere, render_views
from .scripted import make_scripted_backend

__all__ = ["ServiceConfig", "ServiceState", "create_app", "load_config"]

RUN_KINDS = ("annotate", "refine", "bootstrap", "bench-build", "eval")

SCORING_ATTRIBUTES = ("category", "color", "shape", "usage", "material",
                      "relative_position", "spatial", "geometric")


# ---------------------------------------------------------------------------
# Config


@dataclass
class BackendSpec:
    kind: str
    model_name: str
    endpoint: str = ""
    scripted_rule: str = ""
    latency_ms: int = 0
    rate_limit_per_s: int = 0
    credentials_env: str = ""
    params: dict = field(default_factory=dict)


@dataclass
class ServiceConfig:
    state_dir: str
    objects_dir: str = ""
    token: str = ""
    lease_timeout_s: float = 1800.0
    view_image_size: int = 256
    ui_dir: str = ""
    backends: dict[str, BackendSpec] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ServiceConfig":
        svc = dict(data.get("service", {}))
        backends = {}
        for name, spec in data.get("backends", {}).items():
            backends[name] = BackendSpec(**spec)
        return cls(backends=backends, **svc)


def load_config(path) -> ServiceConfig:
    with open(path, "rb") as fh:
        return ServiceConfig.from_dict(tomllib.load(fh))


# ---------------------------------------------------------------------------
# Run handles


@dataclass
class RunHandle:
    run_id: str
    kind: str
    status: str  # pending | running | done | failed
    config: dict
    progress: dict = field(default_factory=dict)
    error: str = ""
    result: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


_STATUS_ORDER = {"pending": 0, "running": 1, "done": 2, "failed": 2}


class RunStore:
    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, run_id: str) -> Path:
        return self.root / f"{run_id}.json"

    def save(self, handle: RunHandle) -> None:
        with self._lock:
            current = self._load(handle.run_id)
            if current and _STATUS_ORDER[handle.status] < _STATUS_ORDER[current.status]:
                raise ValueError(
                    f"illegal status transition {current.status} -> {handle.status}")
            tmp = self._path(handle.run_id).with_suffix(".tmp")
            tmp.write_text(json.dumps(handle.as_dict(), sort_keys=True), encoding="utf-8")
            os.replace(tmp, self._path(handle.run_id))

    def _load(self, run_id: str) -> Optional[RunHandle]:
        p = self._path(run_id)
        if not p.exists():
            return None
        return RunHandle(**json.loads(p.read_text(encoding="utf-8")))

    def load(self, run_id: str) -> Optional[RunHandle]:
        with self._lock:
            return self._load(run_id)

    def all(self) -> list[RunHandle]:
        with self._lock:
            out = []
            for p in sorted(self.root.glob("run-*.json")):
                out.append(RunHandle(**json.loads(p.read_text(encoding="utf-8"))))
            return out


# ---------------------------------------------------------------------------
# Review queue


class ReviewQueue:
    """Persisted task queue with leases; operations are linearized by a lock.

    Decisions are append-only (decisions.jsonl); task state snapshots are
    written atomically on every mutation. State is re-read from disk at the
    start of every operation so tasks enqueued by another process (e.g. an
    offline CLI run against the same state dir) become visible; the service
    process remains the single coordinator for leases and decisions.
    """

    def __init__(self, root: Path, lease_timeout_s: float = 1800.0, clock=time.time):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.lease_timeout_s = lease_timeout_s
        self._clock = clock
        self._lock = threading.Lock()
        self._tasks: dict[str, dict] = {}
        self._groups: dict[str, dict] = {}
        self._load()

    def _load(self) -> None:
        tasks_path = self.root / "tasks.json"
        groups_path = self.root / "groups.json"
        if tasks_path.exists():
            self._tasks = json.loads(tasks_path.read_text(encoding="utf-8"))
        if groups_path.exists():
            self._groups = json.loads(groups_path.read_text(encoding="utf-8"))

    def _persist(self) -> None:
        for name, payload in (("tasks.json", self._tasks), ("groups.json", self._groups)):
            tmp = self.root / (name + ".tmp")
            tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
            os.replace(tmp, self.root / name)

    def _append_decision(self, record: dict) -> None:
        with open(self.root / "decisions.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    def add_task(self, kind: str, payload: dict, group_id: str = "") -> str:
        with self._lock:
            self._load()
            task_id = f"task-{len(self._tasks) + 1:06d}"
            self._tasks[task_id] = {
                "task_id": task_id, "kind": kind, "payload": payload,
                "group_id": group_id, "status": "pending",
                "leased_to": "", "lease_expires": 0.0,
            }
            self._persist()
            return task_id

    def add_scoring_group(self, object_id: str, captions: list[dict], seed: int) -> dict:
        """Create one blinded scoring task for the object; captions arrive as
        [{model, text}], are shuffled with the seed, and get alias labels."""
        with self._lock:
            self._load()
            group_id = f"group-{len(self._groups) + 1:04d}"
            order = list(range(len(captions)))
            Random(seed).shuffle(order)
            aliases = [chr(ord("A") + i) for i in range(len(captions))]
            alias_map = {}
            blinded = []
            for alias, idx in zip(aliases, order):
                alias_map[alias] = captions[idx]["model"]
                blinded.append({"alias": alias, "text": captions[idx]["text"]})
            task_id = f"task-{len(self._tasks) + 1:06d}"
            self._tasks[task_id] = {
                "task_id": task_id, "kind": "caption_scoring",
                "payload": {"object_id": object_id, "captions": blinded,
                            "views": [f"/objects/{object_id}/views/{n}.png"
                                      for n in range(12)]},
                "group_id": group_id, "status": "pending",
                "leased_to": "", "lease_expires": 0.0,
            }
            self._groups[group_id] = {
                "group_id": group_id, "object_id": object_id,
                "alias_map": alias_map, "task_ids": [task_id], "seed": seed,
            }
            self._persist()
            return {"group_id": group_id, "task_ids": [task_id],
                    "n_captions": len(captions)}

    def next_task(self, kind: str, reviewer: str) -> Optional[dict]:
        with self._lock:
            self._load()
            now = self._clock()
            for task in self._tasks.values():
                if task["kind"] != kind:
                    continue
                leasable = task["status"] == "pending" or (
                    task["status"] == "leased" and task["lease_expires"] <= now)
                if leasable:
                    task["status"] = "leased"
                    task["leased_to"] = reviewer
                    task["lease_expires"] = now + self.lease_timeout_s
                    self._persist()
                    return dict(task)
            return None

    def get_task(self, task_id: str) -> Optional[dict]:
        with self._lock:
            self._load()
            task = self._tasks.get(task_id)
            return dict(task) if task else None

    def group_complete(self, group_id: str) -> bool:
        group = self._groups.get(group_id)
        if not group:
            return False
        return all(self._tasks[tid]["status"] == "done" for tid in group["task_ids"])

    def aliases(self, group_id: str) -> dict:
        with self._lock:
            self._load()
            group = self._groups.get(group_id)
            if not group:
                raise KeyError(group_id)
            if not self.group_complete(group_id):
                raise PermissionError("group still in progress")
            return dict(group["alias_map"])

    def submit_decision(self, task_id: str, reviewer: str, decision: dict) -> dict:
        with self._lock:
            self._load()
            task = self._tasks.get(task_id)
            if task is None:
                raise KeyError(task_id)
            now = self._clock()
            if task["status"] != "leased" or task["leased_to"] != reviewer \
                    or task["lease_expires"] <= now:
                raise PermissionError("task not leased to this reviewer (stale lease?)")
            record = {"task_id": task_id, "kind": task["kind"], "reviewer": reviewer,
                      "decision": decision, "ts": now,
                      "group_id": task["group_id"]}
            self._append_decision(record)
            task["status"] = "done"
            task["decision"] = decision
            self._persist()
            return record

    def decisions(self) -> list[dict]:
        path = self.root / "decisions.jsonl"
        if not path.exists():
            return []
        return [json.loads(l) for l in path.read_text(encoding="utf-8").splitlines()
                if l.strip()]


def validate_scoring_decision(decision: dict) -> dict:
    """Per-alias attribute points in [0, 1] on a 0.25 grid; totals are sums."""
    scores = decision.get("scores")
    if not isinstance(scores, list) or not scores:
        raise ValueError("decision must carry a non-empty 'scores' list")
    totals = {}
    for item in scores:
        alias = item.get("alias")
        points = item.get("points")
        if not alias or not isinstance(points, dict) or not points:
            raise ValueError("each score needs an alias and a points map")
        total = 0.0
        for attr, value in points.items():
            if attr not in SCORING_ATTRIBUTES:
                raise ValueError(f"unknown attribute {attr!r}")
            try:
                v = float(value)
            except (TypeError, ValueError):
                raise ValueError(f"point for {attr!r} is not a number")
            if v < 0 or v > 1:
                raise ValueError(f"point for {attr!r} outside [0, 1]: {v}")
            if abs(v * 4 - round(v * 4)) > 1e-9:
                raise ValueError(f"point for {attr!r} not on the 0.25 grid: {v}")
            total += v
        totals[alias] = total
    return totals


# ---------------------------------------------------------------------------
# Service state


class ServiceState:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.state_dir = Path(config.state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.audit = AuditLog(self.state_dir / "audit.jsonl")
        self.datasets = DatasetStore(self.state_dir / "datasets")
        self.bench = BenchStore(self.state_dir / "bench" / "entries.jsonl")
        self.runs = RunStore(self.state_dir / "runs")
        self.review = ReviewQueue(self.state_dir / "review",
                                  lease_timeout_s=config.lease_timeout_s)
        holdout_path = self.state_dir / "holdout.json"
        self.holdout = (HoldoutRegistry.load(holdout_path) if holdout_path.exists()
                        else HoldoutRegistry().seal())
        self._threads: dict[str, threading.Thread] = {}
        self._scripted_transports: dict[str, object] = {}

    # -- backends

    def make_client(self, name: str, cache_dir: Path | None = None) -> BackendClient:
        spec = self.config.backends.get(name)
        if spec is None:
            raise KeyError(f"no backend named {name!r} in config")
        descriptor = BackendDescriptor(
            kind=spec.kind, model_name=spec.model_name, endpoint=spec.endpoint,
            params=dict(spec.params), credentials_env=spec.credentials_env)
        if spec.scripted_rule:
            transport = self._scripted_transports.get(name)
            if transport is None:
                transport = make_scripted_backend(
                    spec.scripted_rule, latency_s=spec.latency_ms / 1000.0)
                self._scripted_transports[name] = transport
        else:
            transport = HttpTransport()
        return BackendClient(
            descriptor, transport, audit_log=self.audit,
            rate_limit_per_s=spec.rate_limit_per_s or None,
            cache=ResponseCache(cache_dir) if cache_dir else None)

    def backend_for_kind(self, kind: str, override: str = "",
                         cache_dir: Path | None = None) -> BackendClient:
        if override:
            return self.make_client(override, cache_dir)
        for name, spec in self.config.backends.items():
            if spec.kind == kind:
                return self.make_client(name, cache_dir)
        raise KeyError(f"no backend of kind {kind!r} configured")

    # -- runs

    def run_dir(self, run_id: str) -> Path:
        return self.state_dir / "work" / run_id

    def submit_run(self, kind: str, config: dict, idempotency_key: str = "") -> RunHandle:
        if kind not in RUN_KINDS:
            raise ValueError(f"kind must be one of {RUN_KINDS}")
        self._validate_run_config(kind, config)
        basis = idempotency_key or json.dumps({"kind": kind, "config": config},
                                              sort_keys=True)
        run_id = "run-" + hashlib.sha256(basis.encode("utf-8")).hexdigest()[:12]
        existing = self.runs.load(run_id)
        if existing is not None:
            return existing
        handle = RunHandle(run_id=run_id, kind=kind, status="pending", config=config)
        self.runs.save(handle)
        self.start_run(handle)
        return handle

    def _validate_run_config(self, kind: str, config: dict) -> None:
        if kind == "bootstrap":
            boot = dict(config.get("bootstrap") or {})
            boot.setdefault("objects_dir", self.config.objects_dir)
            cfg = BootstrapConfig(**boot)  # raises on bad config
            if cfg.original_dataset_id and not self.datasets.exists(cfg.original_dataset_id):
                raise ValueError(f"unknown dataset {cfg.original_dataset_id!r}")
            if cfg.prior_dataset_id and not self.datasets.exists(cfg.prior_dataset_id):
                raise ValueError(f"unknown dataset {cfg.prior_dataset_id!r}")
        elif kind == "eval":
            EvalRunConfig(task=config.get("task", ""),
                          n_repeats=int(config.get("n_repeats", 5)),
                          seed=int(config.get("seed", 0)))
        elif kind == "bench-build":
            if not config.get("captions"):
                raise ValueError("bench-build needs a 'captions' list")
        elif kind == "annotate":
            if not config.get("object_ids"):
                raise ValueError("annotate needs 'object_ids'")

    def start_run(self, handle: RunHandle) -> None:
        if handle.run_id in self._threads and self._threads[handle.run_id].is_alive():
            return
        thread = threading.Thread(target=self._execute, args=(handle.run_id,),
                                  daemon=True, name=f"run-{handle.run_id}")
        self._threads[handle.run_id] = thread
        thread.start()

    def resume_pending(self) -> list[str]:
        resumed = []
        for handle in self.runs.all():
            if handle.status in ("pending", "running"):
                self.start_run(handle)
                resumed.append(handle.run_id)
        return resumed

    def _execute(self, run_id: str) -> None:
        handle = self.runs.load(run_id)
        if handle is None or handle.status in ("done", "failed"):
            return
        handle.status = "running"
        self.runs.save(handle)
        try:
            result = getattr(self, f"_run_{handle.kind.replace('-', '_')}")(handle)
            handle = self.runs.load(run_id)
            handle.status = "done"
            handle.result = result
            handle.progress = self.run_progress(handle)
        except Exception as exc:
            handle = self.runs.load(run_id)
            handle.status = "failed"
            handle.error = f"{type(exc).__name__}: {exc}"
        self.runs.save(handle)

    def run_progress(self, handle: RunHandle) -> dict:
        progress = dict(handle.progress)
        if handle.kind == "bootstrap":
            records = self.run_dir(handle.run_id) / "records"
            done = len(list(records.glob("*.json"))) if records.exists() else 0
            total = (handle.config.get("bootstrap") or {}).get("n_objects", 0)
            progress.update({"objects_done": done, "objects_total": total})
        return progress

    # -- run kinds

    def _run_bootstrap(self, handle: RunHandle) -> dict:
        boot = dict(handle.config["bootstrap"])
        boot.setdefault("objects_dir", self.config.objects_dir)
        cfg = BootstrapConfig(**boot)
        work = self.run_dir(handle.run_id)
        cache_dir = work / "cache"
        roles = handle.config.get("backends", {})
        backends = {}
        for kind in ("point", "vision", "chat"):
            try:
                backends[kind] = self.backend_for_kind(
                    kind, roles.get(kind, ""), cache_dir=cache_dir)
            except KeyError:
                pass  # ablations may not need every kind
        manifest = run_bootstrap(cfg, backends, self.datasets, self.holdout, work)
        return {"manifest": manifest.as_dict()}

    def _run_annotate(self, handle: RunHandle) -> dict:
        backend = self.backend_for_kind("point", handle.config.get("backend", ""))
        records = []
        for oid in handle.config["object_ids"]:
            rec = annotate_3d(oid, backend)
            records.append(rec.to_record())
        out = self.run_dir(handle.run_id)
        out.mkdir(parents=True, exist_ok=True)
        (out / "captions.jsonl").write_text(
            "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n",
            encoding="utf-8")
        return {"n_captions": len(records)}

    def _run_refine(self, handle: RunHandle) -> dict:
        backend = self.backend_for_kind("vision", handle.config.get("backend", ""))
        raw = CaptionRecord.from_record(handle.config["caption_record"])
        views = self._views(raw.object_id)
        refined = refine_2d(raw, views, backend)
        return {"caption_record": refined.to_record()}

    def _run_bench_build(self, handle: RunHandle) -> dict:
        backend = self.backend_for_kind("chat", handle.config.get("backend", ""))
        entry_ids = []
        for item in handle.config["captions"]:
            entry = build_bench_entry(item["caption"], backend,
                                      object_id=item["object_id"],
                                      entry_id=f"bench-{item['object_id']}")
            self.bench.append(entry)
            self.review.add_task("bench_entry_review", {
                "entry": entry.to_record(),
                "views": [f"/objects/{entry.object_id}/views/{n}.png" for n in range(12)],
            })
            entry_ids.append(entry.entry_id)
        return {"entry_ids": entry_ids}

    def _run_eval(self, handle: RunHandle) -> dict:
        cfg = EvalRunConfig(task=handle.config["task"],
                            n_repeats=int(handle.config.get("n_repeats", 5)),
                            seed=int(handle.config.get("seed", 0)))
        model = self.backend_for_kind("point", handle.config.get("model", ""))
        judge = self.backend_for_kind("chat", handle.config.get("judge", ""))
        entries = self.bench.approved()
        out_dir = self.state_dir / "eval" / handle.run_id
        report = run_eval(entries, model, judge, cfg, out_dir=out_dir)
        return {"report_id": handle.run_id, "report": report}

    # -- rendering

    def _views(self, object_id: str):
        cloud = normalize_to_unit_sphere(
            load_object_cloud(self.config.objects_dir, object_id))
        cfg = RenderConfig(n_views=12, image_size=self.config.view_image_size)
        return render_views(cloud, cfg)

    def view_png(self, object_id: str, n: int) -> bytes:
        if not (0 <= n < 12):
            raise IndexError(n)
        cache = self.state_dir / "views" / object_id / f"view_{n:02d}.png"
        if cache.exists():
            return cache.read_bytes()
        views = self._views(object_id)
        cache.parent.mkdir(parents=True, exist_ok=True)
        for i, view in enumerate(views):
            path = cache.parent / f"view_{i:02d}.png"
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(encode_png(view))
            os.replace(tmp, path)
        return cache.read_bytes()


# ---------------------------------------------------------------------------
# FastAPI app


def create_app(config: ServiceConfig, resume: bool = True) -> FastAPI:
    state = ServiceState(config)
    app = FastAPI(title="pointloop")
    app.state.service = state

    def auth(request: Request) -> None:
        if not config.token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {config.token}":
            raise HTTPException(status_code=401, detail="bad token")

    @app.get("/health")
    def health():
        return {"ok": True}

    @app.post("/runs", dependencies=[Depends(auth)])
    def post_run(body: dict):
        kind = body.get("kind", "")
        cfg = body.get("config", {})
        try:
            handle = state.submit_run(kind, cfg, body.get("idempotency_key", ""))
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return handle.as_dict()

    @app.get("/runs/{run_id}", dependencies=[Depends(auth)])
    def get_run(run_id: str):
        handle = state.runs.load(run_id)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        out = handle.as_dict()
        out["progress"] = state.run_progress(handle)
        return out

    @app.get("/bench/entries", dependencies=[Depends(auth)])
    def bench_entries(status: str = ""):
        entries = list(state.bench.latest().values())
        if status:
            entries = [e for e in entries if e.review_status == status]
        return {"entries": [e.to_record() for e in sorted(entries, key=lambda e: e.entry_id)]}

    @app.get("/review/next", dependencies=[Depends(auth)])
    def review_next(kind: str, reviewer: str):
        if kind not in ("bench_entry_review", "caption_scoring"):
            raise HTTPException(status_code=400, detail=f"unknown task kind {kind!r}")
        task = state.review.next_task(kind, reviewer)
        if task is None:
            return JSONResponse(status_code=200, content={"task": None})
        return {"task": task}

    @app.post("/review/groups", dependencies=[Depends(auth)])
    def create_group(body: dict):
        captions = body.get("captions") or []
        if not captions or not all({"model", "text"} <= set(c) for c in captions):
            raise HTTPException(status_code=400,
                                detail="need captions: [{model, text}, ...]")
        return state.review.add_scoring_group(
            body.get("object_id", ""), captions, int(body.get("seed", 0)))

    @app.get("/review/groups/{group_id}/aliases", dependencies=[Depends(auth)])
    def group_aliases(group_id: str):
        try:
            return {"group_id": group_id, "aliases": state.review.aliases(group_id)}
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no group {group_id!r}")
        except PermissionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/review/{task_id}/decision", dependencies=[Depends(auth)])
    def post_decision(task_id: str, body: dict):
        reviewer = body.get("reviewer", "")
        decision = body.get("decision") or {}
        try:
            task = state.review.get_task(task_id)
            if task is None:
                raise HTTPException(status_code=404, detail=f"no task {task_id!r}")
            totals = None
            if task["kind"] == "caption_scoring":
                totals = validate_scoring_decision(decision)
                decision = dict(decision, totals=totals)
            elif task["kind"] == "bench_entry_review":
                decision = _apply_bench_decision(state, task, decision)
            record = state.review.submit_decision(task_id, reviewer, decision)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except PermissionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"ok": True, "decision": record["decision"]}

    @app.get("/eval/reports/{report_id}", dependencies=[Depends(auth)])
    def eval_report(report_id: str):
        path = state.state_dir / "eval" / report_id / "report.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no report {report_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    @app.get("/objects/{object_id}/views/{n}.png", dependencies=[Depends(auth)])
    def object_view(object_id: str, n: int):
        try:
            data = state.view_png(object_id, n)
        except IndexError:
            raise HTTPException(status_code=404, detail=f"view index {n} out of range")
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=data, media_type="image/png")

    ui_dir = config.ui_dir
    if ui_dir and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    if resume:
        state.resume_pending()
    return app


def _apply_bench_decision(state: ServiceState, task: dict, decision: dict) -> dict:
    """approve | reject | edit(aspects, synonyms); edits create a new approved
    revision with a parent link."""
    action = decision.get("action")
    if action not in ("approve", "reject", "edit"):
        raise ValueError("decision action must be approve, reject, or edit")
    entry_id = task["payload"]["entry"]["entry_id"]
    latest = state.bench.latest().get(entry_id)
    if latest is None:
        raise ValueError(f"unknown bench entry {entry_id!r}")
    record = latest.to_record()
    record["parent_revision"] = latest.revision
    record["revision"] = latest.revision + 1
    record["reviewer_notes"] = decision.get("notes", "")
    if action == "approve":
        record["review_status"] = "approved"
    elif action == "reject":
        record["review_status"] = "rejected"
    else:
        aspects = dict(record["aspects"], **(decision.get("aspects") or {}))
        record["aspects"] = aspects
        labels = dict(record["class_labels"])
        if decision.get("synonyms") is not None:
            labels["synonyms"] = list(decision["synonyms"])
            labels.setdefault("class_name", labels["synonyms"][0] if labels["synonyms"] else "")
        record["class_labels"] = labels
        record["review_status"] = "approved"
        record["flags"] = []
    revised = BenchEntry.from_record(record)  # validates approval invariants
    state.bench.append(revised)
    return dict(decision, entry_id=entry_id, new_revision=revised.revision)
