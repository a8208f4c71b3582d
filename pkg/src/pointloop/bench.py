"""Benchmark entries, judge parsers, and evaluation runs.

Entries hold six aspect texts (description, color, shape, count, spatial,
usage — spatial may be empty for single cohesive objects) plus class labels
with 3-5 synonyms. Captioning judges answer with a final
"Scores for each aspects: **[...]**" bracket of six integers; classification
judges answer "T#rationale" / "F#rationale". Parsers are total: every
string either parses or raises JudgeParseError carrying the raw text.

Evaluation runs persist raw judge outputs under run-local model aliases;
the alias -> model map is stored in a separate file so stored raws stay
blinded.
"""

from __future__ import annotations

import json
import re
import statistics
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

from . import prompts
from .backends import BackendClient, ChatRequest, Message, Sampling

__all__ = [
    "ASPECTS",
    "AspectScores",
    "ClsJudgement",
    "BenchEntry",
    "EvalRunConfig",
    "JudgeParseError",
    "EmptyReportError",
    "parse_aspect_scores",
    "parse_cls_judgement",
    "build_bench_entry",
    "judge_caption",
    "judge_classification",
    "run_eval",
    "aggregate_report",
    "render_table",
    "BenchStore",
]

ASPECTS = prompts.ASPECT_NAMES  # description, color, shape, count, spatial, usage

JUDGE_SAMPLING = Sampling(temperature=0.0, max_tokens=1024)
MODEL_SAMPLING = Sampling(temperature=0.7, max_tokens=1024)

TASK_PROMPTS = {
    "caption": prompts.CAPTION_EVAL_PROMPT,
    "cls-i": prompts.INSTRUCTION_CLS_PROMPT,
    "cls-c": prompts.COMPLETION_CLS_PROMPT,
}


class JudgeParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw output: {raw[:200]!r}")
        self.raw = raw


class EmptyReportError(ValueError):
    pass


@dataclass(frozen=True)
class AspectScores:
    description: int
    color: int
    shape: int
    count: int
    spatial: int
    usage: int
    clamped: bool = False

    def __post_init__(self):
        for name in ASPECTS:
            v = getattr(self, name)
            if not isinstance(v, int) or not (0 <= v <= 100):
                raise ValueError(f"{name} score must be an int in [0, 100], got {v!r}")

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in ASPECTS)

    @property
    def avg(self) -> float:
        return sum(self.as_tuple()) / 6.0


@dataclass(frozen=True)
class ClsJudgement:
    match: bool
    rationale: str


_BRACKET_RE = re.compile(r"\*\*\[([^\]]*)\]\*\*")


def parse_aspect_scores(text: str) -> AspectScores:
    """Extract the final **[...]** bracket of six integers.

    Judges often restate the format earlier in prose, so the last occurrence
    wins. Out-of-range integers are clamped to [0, 100] with a warning.
    """
    matches = _BRACKET_RE.findall(text)
    if not matches:
        raise JudgeParseError("no **[...]** score bracket found", raw=text)
    inner = matches[-1]
    parts = [p.strip() for p in inner.split(",")]
    if len(parts) != 6:
        raise JudgeParseError(f"expected 6 scores, found {len(parts)}", raw=text)
    values = []
    clamped = False
    for name, part in zip(ASPECTS, parts):
        if not re.fullmatch(r"[+-]?\d+", part):
            raise JudgeParseError(f"non-integer {name} score {part!r}", raw=text)
        v = int(part)
        if v < 0 or v > 100:
            warnings.warn(f"{name} score {v} outside [0, 100]; clamped")
            v = min(max(v, 0), 100)
            clamped = True
        values.append(v)
    return AspectScores(*values, clamped=clamped)


def parse_cls_judgement(text: str) -> ClsJudgement:
    """Parse 'T#rationale' / 'F#rationale' (leading/trailing whitespace tolerated)."""
    stripped = text.strip()
    if stripped.startswith("T#"):
        return ClsJudgement(match=True, rationale=stripped[2:].strip())
    if stripped.startswith("F#"):
        return ClsJudgement(match=False, rationale=stripped[2:].strip())
    raise JudgeParseError("expected 'T#...' or 'F#...'", raw=text)


# ---------------------------------------------------------------------------
# Entries


@dataclass
class BenchEntry:
    entry_id: str
    object_id: str
    aspects: dict[str, str]
    class_labels: dict = field(default_factory=lambda: {
        "class_name": "", "subclass": "", "synonyms": []})
    review_status: str = "draft"
    reviewer_notes: str = ""
    flags: list[str] = field(default_factory=list)
    revision: int = 1
    parent_revision: int | None = None

    def __post_init__(self):
        if self.review_status not in ("draft", "approved", "rejected"):
            raise ValueError(f"bad review_status {self.review_status!r}")
        missing = [a for a in ASPECTS if a not in self.aspects]
        if missing:
            raise ValueError(f"aspects missing keys: {missing}")
        if self.review_status == "approved":
            empty = [a for a in ASPECTS if a != "spatial" and not self.aspects[a]]
            if empty:
                raise ValueError(f"approved entry has empty aspects: {empty}")
            syn = self.class_labels.get("synonyms") or []
            if syn and not (3 <= len(syn) <= 5):
                raise ValueError(f"synonyms must number 3-5, got {len(syn)}")

    @property
    def evaluable(self) -> bool:
        return self.review_status == "approved"

    def label_list(self) -> list[str]:
        """Comma-joinable class labels: class, subclass, synonyms (deduped)."""
        out: list[str] = []
        for item in [self.class_labels.get("class_name", ""),
                     self.class_labels.get("subclass", "")] + \
                list(self.class_labels.get("synonyms") or []):
            item = item.strip()
            if item and item not in out:
                out.append(item)
        return out

    def aspect_block(self) -> str:
        lines = [f'"{name}": "{self.aspects[name]}"' for name in ASPECTS]
        return ",\n".join(lines)

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "BenchEntry":
        return cls(**rec)


_ASPECT_LINE_RE = re.compile(
    r'^\s*"?(description|color|shape|count|spatial|usage)"?\s*:\s*"?(.*?)"?,?\s*$',
    re.IGNORECASE)


def _parse_aspect_sections(text: str) -> dict[str, str]:
    found: dict[str, str] = {}
    for line in text.splitlines():
        m = _ASPECT_LINE_RE.match(line)
        if m:
            found[m.group(1).lower()] = m.group(2).strip().rstrip('"').strip()
    return found


def build_bench_entry(source_caption: str, chat_backend: BackendClient,
                      object_id: str = "", entry_id: str | None = None) -> BenchEntry:
    """Draft a bench entry: rephrased six-aspect texts plus synonym labels.

    Unparsable structure or a synonym count outside [3, 5] leaves the draft
    flagged for manual completion rather than failing.
    """
    if not source_caption:
        raise ValueError("source caption must be non-empty")
    rephrased = chat_backend.complete(ChatRequest(
        messages=[Message("user", prompts.BENCH_REPHRASE_TEMPLATE.format(
            caption=source_caption))],
        sampling=MODEL_SAMPLING))
    sections = _parse_aspect_sections(rephrased.text)
    flags = []
    aspects = {a: sections.get(a, "") for a in ASPECTS}
    missing = [a for a in ASPECTS if a != "spatial" and not aspects[a]]
    if missing:
        flags.append("aspects_incomplete")

    synonyms_resp = chat_backend.complete(ChatRequest(
        messages=[Message("user", prompts.SYNONYM_PROMPT_TEMPLATE.format(
            caption=source_caption))],
        sampling=MODEL_SAMPLING))
    synonyms = [s.strip() for s in synonyms_resp.text.split(",") if s.strip()]
    if not (3 <= len(synonyms) <= 5):
        flags.append("synonym_count")
    class_name = synonyms[0] if synonyms else ""
    return BenchEntry(
        entry_id=entry_id or f"bench-{object_id or 'entry'}",
        object_id=object_id,
        aspects=aspects,
        class_labels={"class_name": class_name, "subclass": "", "synonyms": synonyms},
        review_status="draft",
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Judging


def caption_judge_prompt(entry: BenchEntry, model_caption: str) -> str:
    if not entry.evaluable:
        raise ValueError(f"entry {entry.entry_id} is {entry.review_status}, not approved")
    return prompts.CAPTION_JUDGE_PROMPT_TEMPLATE.format(
        ground_truth=entry.aspect_block(), model_output=model_caption)


def cls_judge_prompt(entry: BenchEntry, model_answer: str) -> str:
    if not entry.evaluable:
        raise ValueError(f"entry {entry.entry_id} is {entry.review_status}, not approved")
    labels = entry.label_list()
    if not labels:
        raise ValueError(f"entry {entry.entry_id} has no class labels")
    return prompts.CLS_JUDGE_PROMPT_TEMPLATE.format(
        ground_truth=", ".join(labels), model_output=model_answer)


def judge_caption(entry: BenchEntry, model_caption: str,
                  judge_backend: BackendClient,
                  sampling: Sampling = JUDGE_SAMPLING) -> AspectScores:
    resp = judge_backend.complete(ChatRequest(
        messages=[Message("user", caption_judge_prompt(entry, model_caption))],
        sampling=sampling))
    return parse_aspect_scores(resp.text)


def judge_classification(entry: BenchEntry, model_answer: str,
                         judge_backend: BackendClient,
                         sampling: Sampling = JUDGE_SAMPLING) -> ClsJudgement:
    resp = judge_backend.complete(ChatRequest(
        messages=[Message("user", cls_judge_prompt(entry, model_answer))],
        sampling=sampling))
    return parse_cls_judgement(resp.text)


# ---------------------------------------------------------------------------
# Evaluation runs


@dataclass
class EvalRunConfig:
    task: str  # caption | cls-i | cls-c
    n_repeats: int = 5
    seed: int = 0
    count_failures: bool = True  # failures score 0 / non-match; else excluded
    model_alias: str = "A"

    def __post_init__(self):
        if self.task not in TASK_PROMPTS:
            raise ValueError(f"task must be one of {sorted(TASK_PROMPTS)}")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")


def run_eval(entries: Sequence[BenchEntry], model_backend: BackendClient,
             judge_backend: BackendClient, cfg: EvalRunConfig,
             out_dir=None) -> dict:
    """Query the model entry x repeat, judge each output, aggregate.

    Raw outputs (blinded by alias) are persisted to out_dir/raws.jsonl with
    the alias map in a separate aliases.json; the returned report is
    recomputable from the raws alone.
    """
    approved = [e for e in entries if e.evaluable]
    if not approved:
        raise ValueError("no approved entries to evaluate")
    raws: list[dict] = []
    prompt_text = TASK_PROMPTS[cfg.task]
    for entry in approved:
        for repeat in range(cfg.n_repeats):
            raw = {
                "entry_id": entry.entry_id,
                "object_id": entry.object_id,
                "alias": cfg.model_alias,
                "task": cfg.task,
                "repeat": repeat,
                "model_text": None,
                "judge_text": None,
                "error": None,
            }
            if cfg.task == "caption" and not entry.aspects.get("spatial"):
                raw["spatial_empty"] = True
            try:
                model_resp = model_backend.complete(ChatRequest(
                    messages=[Message("user", prompt_text)],
                    point_payload=entry.object_id,
                    sampling=Sampling(temperature=MODEL_SAMPLING.temperature,
                                      max_tokens=MODEL_SAMPLING.max_tokens,
                                      seed=cfg.seed + repeat)))
                raw["model_text"] = model_resp.text
                if cfg.task == "caption":
                    judge_prompt = caption_judge_prompt(entry, model_resp.text)
                else:
                    judge_prompt = cls_judge_prompt(entry, model_resp.text)
                judge_resp = judge_backend.complete(ChatRequest(
                    messages=[Message("user", judge_prompt)], sampling=JUDGE_SAMPLING))
                raw["judge_text"] = judge_resp.text
                if cfg.task == "caption":
                    scores = parse_aspect_scores(judge_resp.text)
                    raw["scores"] = list(scores.as_tuple())
                    raw["clamped"] = scores.clamped
                else:
                    judgement = parse_cls_judgement(judge_resp.text)
                    raw["match"] = judgement.match
                    raw["rationale"] = judgement.rationale
            except Exception as exc:  # judged per-entry: failures are data
                raw["error"] = f"{type(exc).__name__}: {exc}"
                if cfg.count_failures:
                    if cfg.task == "caption":
                        raw["scores"] = [0, 0, 0, 0, 0, 0]
                    else:
                        raw["match"] = False
            raws.append(raw)
    report = aggregate_report(raws)
    report["config"] = {"task": cfg.task, "n_repeats": cfg.n_repeats, "seed": cfg.seed,
                        "count_failures": cfg.count_failures}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "raws.jsonl", "w", encoding="utf-8") as fh:
            for raw in raws:
                fh.write(json.dumps(raw, sort_keys=True, ensure_ascii=False) + "\n")
        # Alias map lives apart from the raws to keep them blinded at rest.
        (out / "aliases.json").write_text(json.dumps(
            {cfg.model_alias: model_backend.descriptor.model_name}, indent=2),
            encoding="utf-8")
        (out / "report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    return report


def aggregate_report(raws: Sequence[dict]) -> dict:
    """Aggregate persisted raw judge outputs into the report table."""
    raws = list(raws)
    if not raws:
        raise EmptyReportError("no raw outputs to aggregate")
    caption_rows = [r for r in raws if r.get("scores") is not None]
    cls_rows = [r for r in raws if "match" in r]
    report: dict = {"n_raw": len(raws),
                    "errors": sum(1 for r in raws if r.get("error"))}
    if caption_rows:
        means = {}
        for i, name in enumerate(ASPECTS):
            means[name] = round(
                statistics.fmean(r["scores"][i] for r in caption_rows), 2)
        unrounded = [statistics.fmean(r["scores"][i] for r in caption_rows)
                     for i in range(6)]
        means["avg"] = round(statistics.fmean(unrounded), 2)
        report["caption"] = {"n": len(caption_rows), "means": means,
                             "spatial_empty_rows": sum(
                                 1 for r in caption_rows if r.get("spatial_empty"))}
    if cls_rows:
        matches = sum(1 for r in cls_rows if r["match"])
        report["classification"] = {
            "n": len(cls_rows),
            "matches": matches,
            "accuracy": round(100.0 * matches / len(cls_rows), 2),
            "parse_failures_counted": sum(1 for r in cls_rows if r.get("error")),
        }
    return report


_HEADERS = ("Desc.", "Color", "Shape", "Count", "Spatial", "Usage", "AVG")


def render_table(report: dict) -> str:
    """Fixed-width text table of caption means (or classification accuracy)."""
    lines = []
    if "caption" in report:
        means = report["caption"]["means"]
        values = [means[a] for a in ASPECTS] + [means["avg"]]
        lines.append("  ".join(f"{h:>8}" for h in _HEADERS))
        lines.append("  ".join(f"{v:8.2f}" for v in values))
    if "classification" in report:
        cls = report["classification"]
        lines.append(f"accuracy: {cls['accuracy']:.2f}%  ({cls['matches']}/{cls['n']})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Storage


class BenchStore:
    """Append-only JSONL of entry revisions; the latest revision per entry wins."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, entry: BenchEntry) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry.to_record(), sort_keys=True, ensure_ascii=False) + "\n")

    def _all(self) -> list[BenchEntry]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                out.append(BenchEntry.from_record(json.loads(line)))
        return out

    def revisions(self, entry_id: str) -> list[BenchEntry]:
        return [e for e in self._all() if e.entry_id == entry_id]

    def latest(self) -> dict[str, BenchEntry]:
        latest: dict[str, BenchEntry] = {}
        for e in self._all():
            cur = latest.get(e.entry_id)
            if cur is None or e.revision >= cur.revision:
                latest[e.entry_id] = e
        return latest

    def approved(self) -> list[BenchEntry]:
        return [e for e in self.latest().values() if e.evaluable]
