"""Command line interface.

Local commands (annotate, refine, synthesize, bootstrap, stats, dataset,
metrics, zeroshot, bench, serve) operate directly on a state directory
described by a TOML config. The runs/review/eval-report commands mirror the
HTTP endpoints of a running service (--base-url).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import metrics as metrics_mod
from . import zeroshot as zs
from .bench import render_table
from .engine import (
    BootstrapConfig,
    CaptionRecord,
    annotate_3d,
    dataset_statistics,
    load_object_cloud,
    refine_2d,
    synthesize_instructions,
)
from .pointcloud import RenderConfig, normalize_to_unit_sphere, render_views
from .service import ServiceConfig, ServiceState, create_app, load_config


def _state(config_path: str) -> ServiceState:
    return ServiceState(load_config(config_path))


def _echo_json(payload) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


@click.group()
def main():
    """Point-cloud instruction data engine and benchmark tools."""


# ---------------------------------------------------------------------------
# Pipeline commands


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--object-id", "object_ids", multiple=True, required=True)
@click.option("--backend", default="", help="configured backend name (default: first point backend)")
def annotate(config_path, object_ids, backend):
    """Caption objects through the point backend."""
    state = _state(config_path)
    client = state.backend_for_kind("point", backend)
    for oid in object_ids:
        rec = annotate_3d(oid, client)
        _echo_json(rec.to_record())


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--object-id", required=True)
@click.option("--caption", required=True, help="the raw 3D caption to refine")
@click.option("--backend", default="")
def refine(config_path, object_id, caption, backend):
    """Refine a caption against 12 rendered views."""
    state = _state(config_path)
    client = state.backend_for_kind("vision", backend)
    cloud = normalize_to_unit_sphere(load_object_cloud(state.config.objects_dir, object_id))
    views = render_views(cloud, RenderConfig(n_views=12, image_size=state.config.view_image_size))
    raw = CaptionRecord(object_id=object_id, stage="raw3d", caption=caption)
    _echo_json(refine_2d(raw, views, client).to_record())


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--object-id", default="obj")
@click.option("--caption", required=True)
@click.option("--itype", "itypes", multiple=True,
              default=("brief", "detailed", "single_round", "multi_round"))
@click.option("--backend", default="")
def synthesize(config_path, object_id, caption, itypes, backend):
    """Turn a caption into instruction records."""
    state = _state(config_path)
    client = state.backend_for_kind("chat", backend)
    cap = CaptionRecord(object_id=object_id, stage="raw3d", caption=caption)
    records, rejected = synthesize_instructions(cap, client, itypes=itypes)
    _echo_json({"records": [r.to_record() for r in records], "rejected": rejected})


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="TOML with [service], [backends.*], and [bootstrap] sections")
def bootstrap(config_path):
    """Run one bootstrap generation to completion."""
    with open(config_path, "rb") as fh:
        raw = tomllib.load(fh)
    if "bootstrap" not in raw:
        raise click.UsageError("config must contain a [bootstrap] section")
    state = ServiceState(ServiceConfig.from_dict(raw))
    handle = state.submit_run("bootstrap", {"bootstrap": raw["bootstrap"]})
    thread = state._threads.get(handle.run_id)
    if thread is not None:
        thread.join()
    final = state.runs.load(handle.run_id)
    _echo_json(final.as_dict())
    if final.status != "done":
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--dataset-id", default="")
@click.option("--counts", "counts_json", default="",
              help="JSON object of bucket -> count (skips the store)")
def stats(config_path, dataset_id, counts_json):
    """Dataset statistics: counts and percentage proportions."""
    if counts_json:
        report = dataset_statistics(json.loads(counts_json))
    else:
        if not (config_path and dataset_id):
            raise click.UsageError("need --counts or both --config and --dataset-id")
        state = _state(config_path)
        report = dataset_statistics(state.datasets.read(dataset_id))
    _echo_json(report.as_dict())


# ---------------------------------------------------------------------------
# Dataset store


@main.group()
def dataset():
    """Inspect the versioned dataset store."""


@dataset.command("ls")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def dataset_ls(config_path):
    state = _state(config_path)
    _echo_json([v.as_dict() for v in state.datasets.list()])


@dataset.command("show")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.argument("dataset_id")
@click.option("--limit", default=5)
def dataset_show(config_path, dataset_id, limit):
    state = _state(config_path)
    meta = state.datasets.version(dataset_id)
    records = state.datasets.read(dataset_id)
    _echo_json({"version": meta.as_dict(), "first_records": records[:limit]})


@dataset.command("verify")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.argument("dataset_id")
def dataset_verify(config_path, dataset_id):
    state = _state(config_path)
    ok = state.datasets.verify(dataset_id)
    _echo_json({"dataset_id": dataset_id, "checksum_ok": ok})
    if not ok:
        sys.exit(1)


@dataset.command("holdout")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.argument("dataset_id")
def dataset_holdout(config_path, dataset_id):
    """Check a dataset against the sealed holdout registry."""
    state = _state(config_path)
    violations = state.datasets.enforce_holdout(dataset_id, state.holdout)
    _echo_json({"dataset_id": dataset_id, "clean": not violations,
                "violations": [{"object_id": v.object_id, "line": v.line}
                               for v in violations]})
    if violations:
        sys.exit(1)


# ---------------------------------------------------------------------------
# Metrics


@main.group()
def metrics():
    """Caption metrics."""


@metrics.command("score")
@click.option("--candidate", required=True)
@click.option("--reference", required=True)
@click.option("--scale-100", is_flag=True, help="report scores x100 with 2 decimals")
def metrics_score(candidate, reference, scale_100):
    _echo_json(metrics_mod.score_pair(candidate, reference).as_dict(scale_100=scale_100))


@metrics.command("batch")
@click.option("--pairs", required=True, type=click.Path(exists=True),
              help="JSONL of {candidate, reference} objects")
@click.option("--scale-100", is_flag=True)
def metrics_batch(pairs, scale_100):
    for lineno, line in enumerate(Path(pairs).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        scores = metrics_mod.score_pair(rec["candidate"], rec["reference"])
        click.echo(json.dumps({"line": lineno, **scores.as_dict(scale_100=scale_100)},
                              sort_keys=True, ensure_ascii=False))


# ---------------------------------------------------------------------------
# Zero-shot


@main.group()
def zeroshot():
    """Zero-shot classification numerics."""


@zeroshot.command("eval")
@click.option("--points", required=True, type=click.Path(exists=True))
@click.option("--texts-a", required=True, type=click.Path(exists=True))
@click.option("--texts-b", type=click.Path(exists=True))
@click.option("--labels", required=True, type=click.Path(exists=True),
              help="JSON list of class ids, one per point row")
@click.option("--topk", default="1,3,5")
def zeroshot_eval(points, texts_a, texts_b, labels, topk):
    pts = zs.load_embedding_matrix(points)
    ta = zs.load_embedding_matrix(texts_a)
    labels_list = json.loads(Path(labels).read_text(encoding="utf-8"))
    ks = [int(k) for k in topk.split(",") if k.strip()]
    logits_a = zs.compute_logits(pts, ta)
    out = {"a": {f"top{k}": zs.topk_accuracy(logits_a, labels_list, k) for k in ks}}
    if texts_b:
        tb = zs.load_embedding_matrix(texts_b)
        logits_b = zs.compute_logits(pts, tb)
        combined = zs.ensemble_logits(logits_a, logits_b)
        out["b"] = {f"top{k}": zs.topk_accuracy(logits_b, labels_list, k) for k in ks}
        out["ensemble"] = {f"top{k}": zs.topk_accuracy(combined, labels_list, k) for k in ks}
    _echo_json(out)


# ---------------------------------------------------------------------------
# Bench


@main.group()
def bench():
    """Benchmark construction and evaluation."""


@bench.command("build")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--captions", required=True, type=click.Path(exists=True),
              help="JSONL of {object_id, caption}")
def bench_build(config_path, captions):
    state = _state(config_path)
    items = [json.loads(l) for l in Path(captions).read_text(encoding="utf-8").splitlines()
             if l.strip()]
    handle = state.submit_run("bench-build", {"captions": items})
    thread = state._threads.get(handle.run_id)
    if thread is not None:
        thread.join()
    _echo_json(state.runs.load(handle.run_id).as_dict())


@bench.command("review-export")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--status", default="")
def bench_review_export(config_path, status):
    """Dump latest entry revisions (optionally filtered by review status)."""
    state = _state(config_path)
    entries = state.bench.latest().values()
    for entry in sorted(entries, key=lambda e: e.entry_id):
        if status and entry.review_status != status:
            continue
        click.echo(json.dumps(entry.to_record(), sort_keys=True, ensure_ascii=False))


@bench.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--task", type=click.Choice(["caption", "cls-i", "cls-c"]), required=True)
@click.option("--repeats", default=5)
@click.option("--seed", default=0)
@click.option("--model", default="", help="configured backend name for the model under test")
@click.option("--judge", default="", help="configured backend name for the judge")
def bench_eval(config_path, task, repeats, seed, model, judge):
    state = _state(config_path)
    handle = state.submit_run("eval", {"task": task, "n_repeats": repeats,
                                       "seed": seed, "model": model, "judge": judge})
    thread = state._threads.get(handle.run_id)
    if thread is not None:
        thread.join()
    final = state.runs.load(handle.run_id)
    _echo_json(final.as_dict())
    if final.status == "done":
        click.echo(render_table(final.result["report"]))
    else:
        sys.exit(1)


# ---------------------------------------------------------------------------
# Service + HTTP mirrors


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000)
@click.option("--host", default="127.0.0.1")
def serve(config_path, port, host):
    """Run the HTTP service."""
    import uvicorn

    app = create_app(load_config(config_path))
    uvicorn.run(app, host=host, port=port, log_level="warning")


def _api(base_url, token=""):
    headers = {"authorization": f"Bearer {token}"} if token else {}
    return httpx.Client(base_url=base_url, headers=headers, timeout=30.0)


@main.group()
def runs():
    """Mirror of POST /runs and GET /runs/{id}."""


@runs.command("start")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.option("--kind", required=True)
@click.option("--config-json", required=True, help="run config as a JSON object")
@click.option("--idempotency-key", default="")
def runs_start(base_url, token, kind, config_json, idempotency_key):
    with _api(base_url, token) as api:
        resp = api.post("/runs", json={"kind": kind, "config": json.loads(config_json),
                                       "idempotency_key": idempotency_key})
        _echo_json(resp.json())
        if resp.status_code >= 400:
            sys.exit(1)


@runs.command("show")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.argument("run_id")
def runs_show(base_url, token, run_id):
    with _api(base_url, token) as api:
        resp = api.get(f"/runs/{run_id}")
        _echo_json(resp.json())
        if resp.status_code >= 400:
            sys.exit(1)


@main.group()
def review():
    """Mirror of the review endpoints."""


@review.command("next")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.option("--kind", required=True)
@click.option("--reviewer", required=True)
def review_next(base_url, token, kind, reviewer):
    with _api(base_url, token) as api:
        resp = api.get("/review/next", params={"kind": kind, "reviewer": reviewer})
        _echo_json(resp.json())


@review.command("decide")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.option("--reviewer", required=True)
@click.option("--decision-json", required=True)
@click.argument("task_id")
def review_decide(base_url, token, reviewer, decision_json, task_id):
    with _api(base_url, token) as api:
        resp = api.post(f"/review/{task_id}/decision",
                        json={"reviewer": reviewer, "decision": json.loads(decision_json)})
        _echo_json(resp.json())
        if resp.status_code >= 400:
            sys.exit(1)


@review.command("group-create")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.option("--object-id", required=True)
@click.option("--captions-json", required=True,
              help='JSON list of {"model": ..., "text": ...}')
@click.option("--seed", default=0)
def review_group_create(base_url, token, object_id, captions_json, seed):
    with _api(base_url, token) as api:
        resp = api.post("/review/groups", json={
            "object_id": object_id, "captions": json.loads(captions_json), "seed": seed})
        _echo_json(resp.json())
        if resp.status_code >= 400:
            sys.exit(1)


@review.command("aliases")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.argument("group_id")
def review_aliases(base_url, token, group_id):
    """Resolve a completed group's alias -> model map."""
    with _api(base_url, token) as api:
        resp = api.get(f"/review/groups/{group_id}/aliases")
        _echo_json(resp.json())
        if resp.status_code >= 400:
            sys.exit(1)


@bench.command("entries")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.option("--status", default="")
def bench_entries_remote(base_url, token, status):
    """Mirror of GET /bench/entries."""
    with _api(base_url, token) as api:
        params = {"status": status} if status else {}
        resp = api.get("/bench/entries", params=params)
        _echo_json(resp.json())
        if resp.status_code >= 400:
            sys.exit(1)


@main.group()
def objects():
    """Mirror of the object view endpoint."""


@objects.command("view")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.option("--out", required=True, type=click.Path())
@click.argument("object_id")
@click.argument("n", type=int)
def objects_view(base_url, token, out, object_id, n):
    """Fetch GET /objects/{id}/views/{n}.png to a file."""
    with _api(base_url, token) as api:
        resp = api.get(f"/objects/{object_id}/views/{n}.png")
        if resp.status_code >= 400:
            click.echo(resp.text)
            sys.exit(1)
        Path(out).write_bytes(resp.content)
        click.echo(f"wrote {out} ({len(resp.content)} bytes)")


@main.command("eval-report")
@click.option("--base-url", default="http://127.0.0.1:8000")
@click.option("--token", default="")
@click.argument("report_id")
def eval_report(base_url, token, report_id):
    """Mirror of GET /eval/reports/{id}."""
    with _api(base_url, token) as api:
        resp = api.get(f"/eval/reports/{report_id}")
        if resp.status_code >= 400:
            _echo_json(resp.json())
            sys.exit(1)
        report = resp.json()
        _echo_json(report)
        click.echo(render_table(report))


if __name__ == "__main__":
    main()
