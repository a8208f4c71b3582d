import json

import pytest
from click.testing import CliRunner

from pointloop.cli import main

from conftest import ObjectDir


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def env(tmp_path):
    objects = ObjectDir(tmp_path / "objects")
    objects.path.mkdir()
    for i in range(4):
        objects.add(f"obj{i:02d}", n=24)
    config = tmp_path / "service.toml"
    config.write_text(f"""
[service]
state_dir = "{tmp_path / 'state'}"
objects_dir = "{objects.path}"
view_image_size = 32

[backends.point]
kind = "point"
model_name = "demo-point"
scripted_rule = "demo"

[backends.vision]
kind = "vision"
model_name = "demo-vision"
scripted_rule = "demo"

[backends.chat]
kind = "chat"
model_name = "demo-chat"
scripted_rule = "demo"
""")
    return {"config": str(config), "tmp": tmp_path, "objects": objects}


def run_ok(runner, args, **kw):
    result = runner.invoke(main, args, catch_exceptions=False, **kw)
    assert result.exit_code == 0, result.output
    return result.output


def test_metrics_score(runner):
    out = run_ok(runner, ["metrics", "score", "--candidate", "the cat sat",
                          "--reference", "the cat sat on the mat"])
    data = json.loads(out)
    assert abs(data["bleu1"] - 0.36787944117144233) < 1e-12
    assert data["conventions"]["rouge_beta"] == 1


def test_metrics_batch(runner, tmp_path):
    pairs = tmp_path / "pairs.jsonl"
    pairs.write_text(json.dumps({"candidate": "a cat", "reference": "a cat"}) + "\n"
                     + json.dumps({"candidate": "dog", "reference": "cat"}) + "\n")
    out = run_ok(runner, ["metrics", "batch", "--pairs", str(pairs), "--scale-100"])
    lines = [json.loads(l) for l in out.splitlines()]
    assert lines[0]["bleu1"] == 100.0
    assert lines[1]["bleu1"] == 0.0


def test_zeroshot_eval_cli(runner, tmp_path):
    def dump(path, ids, rows):
        with open(path, "w") as fh:
            for i, row in zip(ids, rows):
                fh.write(json.dumps({"id": i, "vector": row}) + "\n")

    dump(tmp_path / "points.jsonl", ["p0", "p1"], [[1.0, 0.0], [0.0, 1.0]])
    dump(tmp_path / "ta.jsonl", ["c0", "c1"], [[1.0, 0.0], [0.0, 1.0]])
    dump(tmp_path / "tb.jsonl", ["c0", "c1"], [[0.0, 1.0], [1.0, 0.0]])
    (tmp_path / "labels.json").write_text(json.dumps([0, 1]))
    out = run_ok(runner, [
        "zeroshot", "eval", "--points", str(tmp_path / "points.jsonl"),
        "--texts-a", str(tmp_path / "ta.jsonl"), "--texts-b", str(tmp_path / "tb.jsonl"),
        "--labels", str(tmp_path / "labels.json"), "--topk", "1,2"])
    data = json.loads(out)
    assert data["a"]["top1"] == 1.0
    assert data["b"]["top1"] == 0.0
    assert data["ensemble"]["top2"] == 1.0


def test_annotate_and_synthesize(runner, env):
    out = run_ok(runner, ["annotate", "--config", env["config"],
                          "--object-id", "obj00"])
    rec = json.loads(out)
    assert rec["stage"] == "raw3d"
    assert rec["object_id"] == "obj00"

    out = run_ok(runner, ["synthesize", "--config", env["config"],
                          "--caption", rec["caption"], "--itype", "single_round"])
    data = json.loads(out)
    assert data["rejected"] == {}
    assert data["records"][0]["itype"] == "single_round"


def test_refine_cli(runner, env):
    out = run_ok(runner, ["refine", "--config", env["config"], "--object-id", "obj01",
                          "--caption", "A plain cube. A sphere is behind the cube."])
    rec = json.loads(out)
    assert rec["stage"] == "refined"
    assert rec["preservation_flag"] in ("ok", "suspect")


def test_bootstrap_stats_dataset_cli(runner, env, tmp_path):
    run_cfg = tmp_path / "run.toml"
    ids = ", ".join(f'"obj{i:02d}"' for i in range(4))
    run_cfg.write_text(open(env["config"]).read() + f"""
[bootstrap]
t = 1
seed = 3
object_ids = [{ids}]
n_objects = 4
itypes = ["brief"]

[bootstrap.render]
n_views = 12
image_size = 32
""")
    out = run_ok(runner, ["bootstrap", "--config", str(run_cfg)])
    handle = json.loads(out)
    assert handle["status"] == "done"
    dataset_id = handle["result"]["manifest"]["output_dataset_id"]

    out = run_ok(runner, ["dataset", "ls", "--config", env["config"]])
    assert dataset_id in out
    run_ok(runner, ["dataset", "show", "--config", env["config"], dataset_id])
    run_ok(runner, ["dataset", "verify", "--config", env["config"], dataset_id])
    out = run_ok(runner, ["dataset", "holdout", "--config", env["config"], dataset_id])
    assert json.loads(out)["clean"] is True

    out = run_ok(runner, ["stats", "--config", env["config"], "--dataset-id", dataset_id])
    report = json.loads(out)
    assert report["counts"]["generated"] == 4

    out = run_ok(runner, ["stats", "--counts",
                          json.dumps({"brief": 661577, "detailed": 15055,
                                      "single_round": 40122, "multi_round": 15097,
                                      "generated": 112098})])
    assert json.loads(out)["proportions"]["generated"] == 13.28


def test_bench_cli(runner, env, tmp_path):
    captions = tmp_path / "captions.jsonl"
    captions.write_text(json.dumps(
        {"object_id": "obj02", "caption": "A blue vase with a cube behind it."}) + "\n")
    out = run_ok(runner, ["bench", "build", "--config", env["config"],
                          "--captions", str(captions)])
    assert json.loads(out)["status"] == "done"
    out = run_ok(runner, ["bench", "review-export", "--config", env["config"]])
    entry = json.loads(out.splitlines()[0])
    assert entry["review_status"] == "draft"


def test_bench_eval_cli(runner, env, tmp_path):
    # Seed the state directory with approved entries, then evaluate.
    from pointloop.service import ServiceState, load_config
    from test_bench import approved_entry

    state = ServiceState(load_config(env["config"]))
    for i in range(2):
        state.bench.append(approved_entry(entry_id=f"e{i}", object_id=f"obj{i:02d}"))
    out = run_ok(runner, ["bench", "eval", "--config", env["config"],
                          "--task", "caption", "--repeats", "2", "--seed", "4"])
    assert '"status": "done"' in out
    assert "AVG" in out

    out = run_ok(runner, ["bench", "eval", "--config", env["config"],
                          "--task", "cls-i", "--repeats", "1"])
    assert "accuracy" in out


def test_stats_requires_input(runner):
    result = runner.invoke(main, ["stats"])
    assert result.exit_code != 0


def test_http_mirror_commands(runner, env, tmp_path):
    import socket
    import subprocess
    import sys
    import time

    import httpx

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [sys.executable, "-m", "pointloop.cli", "serve",
         "--config", env["config"], "--port", str(port)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    base = ["--base-url", f"http://127.0.0.1:{port}"]
    try:
        deadline = time.time() + 20
        while time.time() < deadline:
            try:
                if httpx.get(f"http://127.0.0.1:{port}/health", timeout=1).status_code == 200:
                    break
            except Exception:
                time.sleep(0.05)

        # runs start/show
        ids = json.dumps([f"obj{i:02d}" for i in range(4)])
        cfg = json.dumps({"bootstrap": {
            "t": 1, "seed": 9, "object_ids": json.loads(ids), "n_objects": 2,
            "itypes": ["brief"], "render": {"n_views": 12, "image_size": 32}}})
        out = run_ok(runner, ["runs", "start", *base, "--kind", "bootstrap",
                              "--config-json", cfg])
        run_id = json.loads(out)["run_id"]
        deadline = time.time() + 60
        while time.time() < deadline:
            out = run_ok(runner, ["runs", "show", *base, run_id])
            if json.loads(out)["status"] in ("done", "failed"):
                break
            time.sleep(0.05)
        assert json.loads(out)["status"] == "done"

        # review group-create / next / decide / aliases
        captions = json.dumps([{"model": "m1", "text": "a box"},
                               {"model": "m2", "text": "a crate"}])
        out = run_ok(runner, ["review", "group-create", *base, "--object-id", "obj00",
                              "--captions-json", captions, "--seed", "3"])
        group_id = json.loads(out)["group_id"]
        out = run_ok(runner, ["review", "next", *base, "--kind", "caption_scoring",
                              "--reviewer", "r1"])
        task = json.loads(out)["task"]
        assert "m1" not in out and "m2" not in out
        decision = json.dumps({"scores": [
            {"alias": "A", "points": {"category": 1}},
            {"alias": "B", "points": {"category": 0.75}}]})
        run_ok(runner, ["review", "decide", *base, "--reviewer", "r1",
                        "--decision-json", decision, task["task_id"]])
        out = run_ok(runner, ["review", "aliases", *base, group_id])
        assert sorted(json.loads(out)["aliases"].values()) == ["m1", "m2"]

        # bench entries + objects view mirrors
        out = run_ok(runner, ["bench", "entries", *base])
        assert "entries" in json.loads(out)
        png_path = tmp_path / "v.png"
        run_ok(runner, ["objects", "view", *base, "--out", str(png_path), "obj00", "0"])
        assert png_path.read_bytes().startswith(b"\x89PNG")
    finally:
        proc.kill()
        proc.wait()
