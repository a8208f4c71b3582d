"""Three-stage instruction data engine.

Stage 1 captions a point cloud through a point-cloud chat backend; stage 2
cross-checks that caption against 12 rendered views through a vision
backend while preserving spatial statements; instruction synthesis then
turns the surviving caption into brief / detailed / single-round /
multi-round records. run_bootstrap chains the stages over a sampled object
pool, mixes the output with original records, and writes a versioned
dataset plus a generation manifest with full lineage.

Bootstrap runs are deterministic for a fixed config + scripted backends:
sampling is seeded, record timestamps come from a logical clock, and
per-object results are persisted so interrupted runs resume idempotently.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from random import Random
from typing import Iterable, Mapping, Sequence

from . import prompts
from .backends import BackendClient, ChatRequest, Message, Sampling
from .dataset import DatasetStore, HoldoutRegistry, check_ids_against_holdout
from .pointcloud import RenderConfig, RenderedView, encode_png, load_point_cloud, \
    normalize_to_unit_sphere, render_views

__all__ = [
    "CaptionRecord",
    "InstructionRecord",
    "GenerationManifest",
    "StatsReport",
    "BootstrapConfig",
    "EngineError",
    "AnnotationFailedError",
    "RefineFailedError",
    "MalformedInstructionError",
    "HoldoutLeakageError",
    "annotate_3d",
    "annotate_many",
    "refine_2d",
    "spatial_preservation_check",
    "synthesize_instructions",
    "run_bootstrap",
    "dataset_statistics",
    "LogicalClock",
    "load_object_cloud",
]

ITYPES = ("brief", "detailed", "single_round", "multi_round")
ABLATIONS = ("full", "no_stage1", "no_stage2")

GENERATION_SAMPLING = Sampling(temperature=0.7, max_tokens=1024)

SPATIAL_KEYWORDS = (
    "depth", "behind", "in front", "left", "right", "above", "below",
    "between", "spatial", "geometric",
)

# Deliberately small: articles/conjunctions/prepositions only, so copular
# verbs still count as content words in the overlap ratio.
STOPWORDS = frozenset(
    "the a an and or of to in on at by for with it this that these those its".split()
)


class EngineError(Exception):
    pass


class AnnotationFailedError(EngineError):
    def __init__(self, object_id: str, reason: str):
        super().__init__(f"annotation failed for {object_id!r}: {reason}")
        self.object_id = object_id


class RefineFailedError(EngineError):
    def __init__(self, object_id: str, reason: str):
        super().__init__(f"refinement failed for {object_id!r}: {reason}")
        self.object_id = object_id


class MalformedInstructionError(EngineError):
    pass


class HoldoutLeakageError(EngineError):
    def __init__(self, object_ids: Sequence[str]):
        super().__init__(f"sampled reserved holdout ids: {sorted(object_ids)}")
        self.object_ids = list(object_ids)


# ---------------------------------------------------------------------------
# Clocks


def system_clock() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class LogicalClock:
    """Deterministic timestamps: fixed epoch plus a per-call counter."""

    EPOCH = _dt.datetime(2000, 1, 1, tzinfo=_dt.timezone.utc)

    def __init__(self, base: int = 0):
        self._n = base

    def __call__(self) -> str:
        stamp = self.EPOCH + _dt.timedelta(seconds=self._n)
        self._n += 1
        return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# Records


@dataclass
class CaptionRecord:
    object_id: str
    stage: str  # raw3d | refined
    caption: str
    generation: int = 0
    fingerprint: str = ""
    prompt_id: str = ""
    timestamp: str = ""
    preservation_flag: str | None = None  # ok | suspect (refined only)
    refines: str | None = None  # record_id of the raw3d record

    def __post_init__(self):
        if self.stage not in ("raw3d", "refined"):
            raise ValueError(f"bad stage {self.stage!r}")
        if not self.caption:
            raise ValueError("caption must be non-empty")
        if self.stage == "refined" and not self.refines:
            raise ValueError("refined record must reference the raw3d record it refines")

    @property
    def record_id(self) -> str:
        return f"{self.object_id}:{self.stage}:g{self.generation}"

    def to_record(self) -> dict:
        rec = {"kind": "caption", "record_id": self.record_id, **asdict(self)}
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "CaptionRecord":
        data = {k: v for k, v in rec.items() if k not in ("kind", "record_id")}
        return cls(**data)


@dataclass
class InstructionRecord:
    object_id: str
    itype: str
    turns: list[dict]  # [{"role": ..., "text": ...}]
    source_caption_id: str = ""
    origin: str = "engine"  # engine | original

    def __post_init__(self):
        if self.itype not in ITYPES:
            raise ValueError(f"bad itype {self.itype!r}")
        roles = [t["role"] for t in self.turns]
        qa_pairs = len(self.turns) // 2
        alternating = all(r == ("user" if i % 2 == 0 else "assistant")
                          for i, r in enumerate(roles))
        if len(self.turns) % 2 != 0 or not alternating:
            raise ValueError("turns must alternate user/assistant")
        if any(not t.get("text") for t in self.turns):
            raise ValueError("turn text must be non-empty")
        if self.itype in ("brief", "detailed", "single_round") and qa_pairs != 1:
            raise ValueError(f"{self.itype} requires exactly one user/assistant pair")
        if self.itype == "multi_round" and qa_pairs < 2:
            raise ValueError("multi_round requires at least 2 QA pairs")

    def to_record(self) -> dict:
        return {"kind": "instruction", **asdict(self)}

    @classmethod
    def from_record(cls, rec: dict) -> "InstructionRecord":
        data = {k: v for k, v in rec.items() if k != "kind"}
        return cls(**data)


@dataclass
class GenerationManifest:
    t: int
    source_model: str
    input_dataset_ids: list[str]
    output_dataset_id: str
    counts: dict[str, int]            # per itype, of the output dataset
    generated_counts: dict[str, int]  # per itype, engine-generated only
    rejected: dict[str, int]
    mixing: dict[str, int]            # n_original, n_generated, duplicates_removed
    ablation: str
    seed: int
    suspect_excluded: int = 0

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("generation index t must be >= 1")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"bad ablation {self.ablation!r}")

    def as_dict(self) -> dict:
        return {"schema": 1, **asdict(self)}

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.as_dict(), indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GenerationManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        data.pop("schema", None)
        return cls(**data)


# ---------------------------------------------------------------------------
# Stage 1: point-cloud annotation


def annotate_3d(object_id: str, point_backend: BackendClient, generation: int = 0,
                sampling: Sampling | None = None, clock=system_clock) -> CaptionRecord:
    """Caption one object through the point backend; caption stored verbatim."""
    if point_backend.kind != "point":
        raise ValueError(f"annotate_3d needs a point backend, got {point_backend.kind!r}")
    req = ChatRequest(
        messages=[Message("user", prompts.POINT_ANNOTATION_PROMPT)],
        point_payload=object_id,
        sampling=sampling or GENERATION_SAMPLING,
    )
    try:
        resp = point_backend.complete(req)
    except Exception as exc:
        raise AnnotationFailedError(object_id, str(exc)) from exc
    if not resp.text:
        raise AnnotationFailedError(object_id, "backend returned empty caption")
    from .backends import fingerprint_chat

    return CaptionRecord(
        object_id=object_id, stage="raw3d", caption=resp.text, generation=generation,
        fingerprint=fingerprint_chat(point_backend.descriptor, req),
        prompt_id="point_annotation", timestamp=clock())


def annotate_many(object_ids: Sequence[str], point_backend: BackendClient,
                  generation: int = 0, clock=system_clock) -> list[CaptionRecord]:
    """Annotate a batch; output order equals input order."""
    return [annotate_3d(oid, point_backend, generation=generation, clock=clock)
            for oid in object_ids]


# ---------------------------------------------------------------------------
# Stage 2: view-grounded refinement


def refine_2d(raw: CaptionRecord, views: Sequence[RenderedView],
              vision_backend: BackendClient, sampling: Sampling | None = None,
              keywords: Sequence[str] = SPATIAL_KEYWORDS,
              clock=system_clock) -> CaptionRecord:
    """Refine a raw3d caption against exactly 12 rendered views in one request."""
    if raw.stage != "raw3d":
        raise ValueError(f"refine_2d expects a raw3d record, got stage {raw.stage!r}")
    if len(views) != 12:
        raise ValueError(f"refinement requires exactly 12 views, got {len(views)}")
    if vision_backend.kind != "vision":
        raise ValueError(f"refine_2d needs a vision backend, got {vision_backend.kind!r}")
    req = ChatRequest(
        messages=[Message("user",
                          prompts.VIEW_REFINEMENT_PROMPT_TEMPLATE.format(caption=raw.caption))],
        images=[encode_png(v) for v in views],
        sampling=sampling or GENERATION_SAMPLING,
    )
    try:
        resp = vision_backend.complete(req)
    except Exception as exc:
        raise RefineFailedError(raw.object_id, str(exc)) from exc
    if not resp.text:
        raise RefineFailedError(raw.object_id, "backend returned empty refinement")
    from .backends import fingerprint_chat

    return CaptionRecord(
        object_id=raw.object_id, stage="refined", caption=resp.text,
        generation=raw.generation,
        fingerprint=fingerprint_chat(vision_backend.descriptor, req),
        prompt_id="view_refinement", timestamp=clock(),
        preservation_flag=spatial_preservation_check(raw.caption, resp.text,
                                                     keywords=keywords),
        refines=raw.record_id)


_SENTENCE_RE = re.compile(r"[^.!?]+[.!?]?")


def _sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_RE.findall(text) if s.strip()]


def _content_words(sentence: str) -> set[str]:
    return {w for w in re.findall(r"\w+", sentence.lower()) if w not in STOPWORDS}


def spatial_preservation_check(before: str, after: str,
                               keywords: Sequence[str] = SPATIAL_KEYWORDS) -> str:
    """'ok' unless a spatial sentence of `before` lost most of its content.

    Every sentence of `before` containing a spatial keyword must have some
    sentence in `after` sharing >= 50% of its content words (stopwords
    removed); otherwise 'suspect'.
    """
    if not before or not after:
        raise ValueError("both texts must be non-empty")
    after_sets = [_content_words(s) for s in _sentences(after)]
    for sentence in _sentences(before):
        lowered = sentence.lower()
        if not any(re.search(rf"\b{re.escape(kw)}\b", lowered) for kw in keywords):
            continue
        words = _content_words(sentence)
        if not words:
            continue
        best = max((len(words & aset) / len(words) for aset in after_sets), default=0.0)
        if best < 0.5:
            return "suspect"
    return "ok"


# ---------------------------------------------------------------------------
# Instruction synthesis


_QA_RE = re.compile(r"^\s*(Q|A)\s*:\s*(.*)$", re.IGNORECASE)


def _parse_qa_pairs(text: str) -> list[tuple[str, str]]:
    entries: list[tuple[str, str]] = []
    for line in text.splitlines():
        m = _QA_RE.match(line)
        if m:
            entries.append((m.group(1).upper(), m.group(2).strip()))
    pairs = []
    i = 0
    while i + 1 < len(entries):
        if entries[i][0] == "Q" and entries[i + 1][0] == "A":
            pairs.append((entries[i][1], entries[i + 1][1]))
            i += 2
        else:
            i += 1
    return pairs


def _build_instruction(object_id: str, itype: str, text: str,
                       source_caption_id: str) -> InstructionRecord:
    if itype == "brief":
        turns = [{"role": "user", "text": prompts.BRIEF_INSTRUCTION},
                 {"role": "assistant", "text": text.strip()}]
    elif itype == "detailed":
        turns = [{"role": "user", "text": prompts.DETAILED_INSTRUCTION},
                 {"role": "assistant", "text": text.strip()}]
    else:
        pairs = _parse_qa_pairs(text)
        if itype == "single_round" and len(pairs) != 1:
            raise MalformedInstructionError(
                f"single_round needs exactly one QA pair, parsed {len(pairs)}")
        if itype == "multi_round" and len(pairs) < 2:
            raise MalformedInstructionError(
                f"multi_round needs >= 2 QA pairs, parsed {len(pairs)}")
        turns = []
        for q, a in pairs:
            turns.append({"role": "user", "text": q})
            turns.append({"role": "assistant", "text": a})
    try:
        return InstructionRecord(object_id=object_id, itype=itype, turns=turns,
                                 source_caption_id=source_caption_id, origin="engine")
    except ValueError as exc:
        raise MalformedInstructionError(str(exc)) from exc


def synthesize_instructions(
    cap: CaptionRecord,
    chat_backend: BackendClient,
    itypes: Iterable[str] = ITYPES,
    templates: Mapping[str, str] | None = None,
    sampling: Sampling | None = None,
) -> tuple[list[InstructionRecord], dict[str, int]]:
    """One record per requested itype; malformed generations are skipped and
    counted in the returned rejected map."""
    if chat_backend.kind != "chat":
        raise ValueError(f"synthesis needs a chat backend, got {chat_backend.kind!r}")
    templates = dict(prompts.INSTRUCTION_SYNTHESIS_TEMPLATES, **(templates or {}))
    records: list[InstructionRecord] = []
    rejected: dict[str, int] = {}
    for itype in itypes:
        if itype not in ITYPES:
            raise ValueError(f"unknown instruction type {itype!r}")
        prompt = templates[itype].format(caption=cap.caption)
        resp = chat_backend.complete(ChatRequest(
            messages=[Message("user", prompt)],
            sampling=sampling or GENERATION_SAMPLING))
        try:
            records.append(_build_instruction(cap.object_id, itype, resp.text,
                                              cap.record_id))
        except MalformedInstructionError:
            rejected[itype] = rejected.get(itype, 0) + 1
    return records, rejected


# ---------------------------------------------------------------------------
# Statistics


@dataclass
class StatsReport:
    total: int
    counts: dict[str, int]
    proportions: dict[str, float]  # percent, 2 decimals
    empty: bool

    def as_dict(self) -> dict:
        return asdict(self)


def dataset_statistics(data) -> StatsReport:
    """Counts and percentage proportions per bucket.

    Accepts either a mapping of bucket -> count, or an iterable of record
    dicts (engine-generated records fall into the 'generated' bucket, the
    rest bucket by itype).
    """
    if isinstance(data, Mapping):
        counts = {str(k): int(v) for k, v in data.items()}
    else:
        counts = {}
        for rec in data:
            bucket = "generated" if rec.get("origin") == "engine" else rec.get("itype", "unknown")
            counts[bucket] = counts.get(bucket, 0) + 1
    total = sum(counts.values())
    if total == 0:
        return StatsReport(total=0, counts=counts,
                           proportions={k: 0.0 for k in counts}, empty=True)
    proportions = {k: round(100.0 * v / total, 2) for k, v in counts.items()}
    return StatsReport(total=total, counts=counts, proportions=proportions, empty=False)


# ---------------------------------------------------------------------------
# Bootstrap


@dataclass
class BootstrapConfig:
    t: int
    seed: int
    object_ids: list[str]             # candidate pool (non-holdout)
    n_objects: int
    objects_dir: str = ""
    itypes: list[str] = field(default_factory=lambda: list(ITYPES))
    n_original: int = 0
    original_dataset_id: str | None = None
    prior_dataset_id: str | None = None  # generation t-1 output (required for t >= 2)
    include_prior_generated: bool = False
    ablation: str = "full"
    no_stage1_source: dict = field(default_factory=dict)  # {"kind": "jsonl"|"vision", ...}
    exclude_suspect: bool = True
    render: dict = field(default_factory=dict)  # RenderConfig overrides
    max_workers: int = 1
    source_model: str = ""

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("generation index t must be >= 1")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"bad ablation {self.ablation!r}")
        if self.n_objects < 1:
            raise ValueError("n_objects must be >= 1")
        if self.n_objects > len(self.object_ids):
            raise ValueError(
                f"cannot sample {self.n_objects} from a pool of {len(self.object_ids)}")
        if self.t >= 2 and not self.prior_dataset_id:
            raise ValueError("t >= 2 requires prior_dataset_id for lineage")
        for itype in self.itypes:
            if itype not in ITYPES:
                raise ValueError(f"unknown instruction type {itype!r}")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


_EXT_FORMATS = {".ply": "ascii-ply", ".xyz": "xyzrgb-text", ".txt": "xyzrgb-text",
                ".bin": "f32-binary", ".f32": "f32-binary"}


def load_object_cloud(objects_dir, object_id: str):
    base = Path(objects_dir)
    for ext, fmt in _EXT_FORMATS.items():
        path = base / f"{object_id}{ext}"
        if path.exists():
            return load_point_cloud(path, fmt)
    raise FileNotFoundError(f"no point cloud for {object_id!r} under {base}")


def _normalized_text_hash(turns: Sequence[dict]) -> str:
    joined = "\n".join(unicodedata.normalize("NFC", t["text"]).strip().lower()
                       for t in turns)
    joined = re.sub(r"\s+", " ", joined)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


def _dedup_key(rec: dict) -> tuple:
    return (rec["object_id"], rec["itype"], _normalized_text_hash(rec["turns"]))


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, ensure_ascii=False), encoding="utf-8")
    os.replace(tmp, path)


def _caption_for_object(cfg: BootstrapConfig, object_id: str, backends: dict,
                        render_cfg: RenderConfig, clock, stage1_captions: dict) -> CaptionRecord:
    if cfg.ablation == "no_stage1":
        source = cfg.no_stage1_source or {"kind": "vision"}
        if source.get("kind") == "jsonl":
            caption = stage1_captions.get(object_id)
            if not caption:
                raise AnnotationFailedError(object_id, "no 2D caption in configured source")
            return CaptionRecord(object_id=object_id, stage="raw3d", caption=caption,
                                 generation=cfg.t, prompt_id="caption_source_2d",
                                 timestamp=clock())
        # Vision-backend captioning of the rendered views.
        views = _views_for(cfg, object_id, render_cfg)
        vision = backends["vision"]
        req = ChatRequest(
            messages=[Message("user", prompts.VIEW_CAPTION_PROMPT)],
            images=[encode_png(v) for v in views],
            sampling=Sampling(temperature=0.7, max_tokens=1024, seed=cfg.seed))
        resp = vision.complete(req)
        if not resp.text:
            raise AnnotationFailedError(object_id, "empty 2D caption")
        from .backends import fingerprint_chat

        return CaptionRecord(
            object_id=object_id, stage="raw3d", caption=resp.text, generation=cfg.t,
            fingerprint=fingerprint_chat(vision.descriptor, req),
            prompt_id="view_caption", timestamp=clock())
    return annotate_3d(object_id, backends["point"], generation=cfg.t,
                       sampling=Sampling(temperature=0.7, max_tokens=1024, seed=cfg.seed),
                       clock=clock)


def _views_for(cfg: BootstrapConfig, object_id: str, render_cfg: RenderConfig):
    cloud = normalize_to_unit_sphere(load_object_cloud(cfg.objects_dir, object_id))
    return render_views(cloud, render_cfg)


def _process_object(cfg: BootstrapConfig, index: int, object_id: str, backends: dict,
                    render_cfg: RenderConfig, stage1_captions: dict, records_dir: Path) -> dict:
    done_path = records_dir / f"{object_id}.json"
    if done_path.exists():
        return json.loads(done_path.read_text(encoding="utf-8"))
    # Deterministic per-object timestamps regardless of execution order.
    clock = LogicalClock(base=index * 64)
    captions: list[dict] = []
    raw = _caption_for_object(cfg, object_id, backends, render_cfg, clock, stage1_captions)
    captions.append(raw.to_record())
    final = raw
    if cfg.ablation != "no_stage2":
        views = _views_for(cfg, object_id, render_cfg)
        refined = refine_2d(raw, views, backends["vision"],
                            sampling=Sampling(temperature=0.7, max_tokens=1024,
                                              seed=cfg.seed),
                            clock=clock)
        captions.append(refined.to_record())
        final = refined
    instructions, rejected = synthesize_instructions(
        final, backends["chat"], itypes=cfg.itypes,
        sampling=Sampling(temperature=0.7, max_tokens=1024, seed=cfg.seed))
    payload = {
        "object_id": object_id,
        "captions": captions,
        "instructions": [r.to_record() for r in instructions],
        "rejected": rejected,
        "preservation_flag": final.preservation_flag,
    }
    _atomic_write_json(done_path, payload)
    return payload


def run_bootstrap(
    cfg: BootstrapConfig,
    backends: dict[str, BackendClient],
    store: DatasetStore,
    holdout: HoldoutRegistry,
    work_dir,
) -> GenerationManifest:
    """Run one bootstrap generation; resumable and deterministic per config.

    `backends` maps kind -> client for "point", "vision", "chat" (only the
    kinds the ablation actually needs must be present).
    """
    work = Path(work_dir)
    records_dir = work / "records"
    records_dir.mkdir(parents=True, exist_ok=True)

    # Plan (sampled object ids) is fixed before any backend call and persisted
    # so resumed runs replay the identical plan.
    plan_path = work / "plan.json"
    cfg_hash = cfg.config_hash()
    if plan_path.exists():
        plan = json.loads(plan_path.read_text(encoding="utf-8"))
        if plan["config_hash"] != cfg_hash:
            raise EngineError("work dir holds a plan for a different config")
        sampled = plan["sampled_ids"]
    else:
        rng = Random(cfg.seed)
        sampled = rng.sample(sorted(cfg.object_ids), cfg.n_objects)
        leaked = check_ids_against_holdout(sampled, holdout)
        if leaked:
            raise HoldoutLeakageError(leaked)
        _atomic_write_json(plan_path, {"config_hash": cfg_hash, "sampled_ids": sampled,
                                       "t": cfg.t, "seed": cfg.seed})
    leaked = check_ids_against_holdout(sampled, holdout)
    if leaked:
        raise HoldoutLeakageError(leaked)

    stage1_captions = {}
    if cfg.ablation == "no_stage1" and cfg.no_stage1_source.get("kind") == "jsonl":
        with open(cfg.no_stage1_source["path"], encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    stage1_captions[rec["object_id"]] = rec["caption"]

    render_cfg = RenderConfig(**cfg.render) if cfg.render else RenderConfig(image_size=128)

    results: list[dict] = [None] * len(sampled)  # type: ignore[list-item]
    if cfg.max_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
            futures = {
                pool.submit(_process_object, cfg, i, oid, backends, render_cfg,
                            stage1_captions, records_dir): i
                for i, oid in enumerate(sampled)
            }
            for fut, i in futures.items():
                results[i] = fut.result()
    else:
        for i, oid in enumerate(sampled):
            results[i] = _process_object(cfg, i, oid, backends, render_cfg,
                                         stage1_captions, records_dir)

    generated: list[dict] = []
    generated_counts = {it: 0 for it in cfg.itypes}
    rejected_total: dict[str, int] = {}
    suspect_excluded = 0
    for payload in results:
        for it, n in payload["rejected"].items():
            rejected_total[it] = rejected_total.get(it, 0) + n
        if cfg.exclude_suspect and payload.get("preservation_flag") == "suspect":
            suspect_excluded += len(payload["instructions"])
            continue
        for rec in payload["instructions"]:
            generated.append(rec)
            generated_counts[rec["itype"]] = generated_counts.get(rec["itype"], 0) + 1

    # Mix with originals (seeded, order-stable).
    originals: list[dict] = []
    input_ids: list[str] = []
    if cfg.original_dataset_id:
        input_ids.append(cfg.original_dataset_id)
        pool = store.read(cfg.original_dataset_id)
        if cfg.n_original > len(pool):
            raise EngineError(
                f"n_original={cfg.n_original} exceeds original dataset size {len(pool)}")
        mix_rng = Random(cfg.seed + 1)
        originals = mix_rng.sample(pool, cfg.n_original) if cfg.n_original else []
    prior_generated: list[dict] = []
    if cfg.prior_dataset_id:
        input_ids.append(cfg.prior_dataset_id)
        if cfg.include_prior_generated:
            prior_generated = [r for r in store.read(cfg.prior_dataset_id)
                               if r.get("origin") == "engine"]

    combined = originals + prior_generated + generated
    seen: set[tuple] = set()
    output: list[dict] = []
    duplicates_removed = 0
    for rec in combined:
        key = _dedup_key(rec)
        if key in seen:
            duplicates_removed += 1
            continue
        seen.add(key)
        output.append(rec)

    version = store.write(output, generation=cfg.t,
                          parent=cfg.prior_dataset_id or cfg.original_dataset_id)

    counts = {it: 0 for it in ITYPES}
    for rec in output:
        counts[rec["itype"]] = counts.get(rec["itype"], 0) + 1

    source_model = cfg.source_model
    if not source_model:
        primary = backends.get("point") or backends.get("vision") or backends.get("chat")
        source_model = primary.descriptor.model_name if primary else ""

    manifest = GenerationManifest(
        t=cfg.t,
        source_model=source_model,
        input_dataset_ids=input_ids,
        output_dataset_id=version.id,
        counts=counts,
        generated_counts=generated_counts,
        rejected=rejected_total,
        mixing={
            "n_original": len(originals),
            "n_generated": len(prior_generated) + len(generated),
            "duplicates_removed": duplicates_removed,
        },
        ablation=cfg.ablation,
        seed=cfg.seed,
        suspect_excluded=suspect_excluded,
    )
    if sum(counts.values()) != version.record_count:
        raise EngineError("manifest counts do not reconcile with the output dataset")
    manifest.save(work / "manifest.json")
    return manifest
