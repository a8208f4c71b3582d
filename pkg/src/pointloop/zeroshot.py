"""Template-based prompts and logit ensembling for zero-shot classification.

Logits are cosine similarities between unit-norm embeddings; two logit
sources over the same classes are combined by plain elementwise addition
before the argmax / top-k decision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "EmbeddingMatrix",
    "LabelTemplateSet",
    "LogitMatrix",
    "TemplateError",
    "make_templates",
    "apply_templates",
    "compute_logits",
    "ensemble_logits",
    "topk_accuracy",
    "load_embedding_matrix",
]

NORM_TOL = 1e-6


class TemplateError(ValueError):
    pass


@dataclass
class EmbeddingMatrix:
    """Row-wise unit-norm embeddings with row ids."""

    ids: list[str]
    vectors: np.ndarray  # (N, D) float64

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if len(self.ids) != len(self.vectors):
            raise ValueError(f"{len(self.ids)} ids for {len(self.vectors)} rows")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.abs(norms - 1.0).max() > NORM_TOL:
            worst = int(np.abs(norms - 1.0).argmax())
            raise ValueError(f"row {worst} ({self.ids[worst]!r}) has norm {norms[worst]:.8f}, not 1")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_rows(cls, ids: Sequence[str], rows, normalize: bool = False) -> "EmbeddingMatrix":
        arr = np.asarray(rows, dtype=np.float64)
        if normalize:
            norms = np.linalg.norm(arr, axis=1, keepdims=True)
            if (norms == 0).any():
                raise ValueError("cannot normalize a zero vector")
            arr = arr / norms
        return cls(ids=list(ids), vectors=arr)


@dataclass
class LogitMatrix:
    """(N, C) score matrix over class ids."""

    class_ids: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.class_ids):
            raise ValueError(
                f"{len(self.class_ids)} class ids for {self.values.shape[1]} columns")
        if not np.isfinite(self.values).all():
            raise ValueError("logits must be finite")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class LabelTemplateSet:
    """Per-label caption templates, each with exactly one '{}' placeholder."""

    templates: dict[str, list[str]] = field(default_factory=dict)
    flagged: list[str] = field(default_factory=list)

    def __post_init__(self):
        for label, items in self.templates.items():
            for t in items:
                if t.count("{}") != 1:
                    raise TemplateError(
                        f"template for {label!r} must contain exactly one '{{}}': {t!r}")

    def all_templates(self) -> list[str]:
        return [t for items in self.templates.values() for t in items]


def _validate_template(text: str) -> bool:
    return text.count("{}") == 1


def make_templates(captions: list[str], chat_backend, labels: list[str] | None = None) -> LabelTemplateSet:
    """Turn captions into '{}'-placeholder templates via the chat backend.

    Each output must contain exactly one placeholder; invalid outputs get one
    retry, then are flagged and excluded. Raises TemplateError if nothing
    survives.
    """
    if not captions:
        raise TemplateError("captions must be non-empty")
    labels = labels or [f"caption_{i}" for i in range(len(captions))]
    out: dict[str, list[str]] = {}
    flagged: list[str] = []
    for label, caption in zip(labels, captions):
        text = _ask_template(chat_backend, caption, retry=False)
        if not _validate_template(text):
            text = _ask_template(chat_backend, caption, retry=True)
        if _validate_template(text):
            out.setdefault(label, []).append(text)
        else:
            flagged.append(label)
    if not out:
        raise TemplateError("all template generations were invalid")
    return LabelTemplateSet(templates=out, flagged=flagged)


def _ask_template(chat_backend, caption: str, retry: bool) -> str:
    from .backends import ChatRequest, Message
    from .prompts import TEMPLATE_PROMPT

    text = f"{TEMPLATE_PROMPT}\n\n{caption}"
    if retry:
        text += "\nYour previous output did not contain exactly one {} placeholder. Try again."
    resp = chat_backend.complete(ChatRequest(messages=[Message("user", text)]))
    return resp.text.strip()


def apply_templates(template_set: LabelTemplateSet, class_names: list[str]) -> dict[str, list[str]]:
    """Fill every template with each class name; per-class text lists for embedding."""
    filled: dict[str, list[str]] = {}
    for name in class_names:
        filled[name] = [t.format(name) for t in template_set.all_templates()]
    return filled


def compute_logits(points: EmbeddingMatrix, texts: EmbeddingMatrix) -> LogitMatrix:
    """Cosine logits: entry (i, c) = dot(point_i, text_c). Rows are unit-norm,
    so entries lie in [-1, 1]."""
    if points.dim != texts.dim:
        raise ValueError(f"dimension mismatch: points D={points.dim}, texts D={texts.dim}")
    return LogitMatrix(class_ids=list(texts.ids), values=points.vectors @ texts.vectors.T)


def ensemble_logits(a: LogitMatrix, b: LogitMatrix) -> LogitMatrix:
    """Elementwise sum of two logit sources over identical classes."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.class_ids != b.class_ids:
        raise ValueError("class id mismatch between logit matrices")
    return LogitMatrix(class_ids=list(a.class_ids), values=a.values + b.values)


def topk_accuracy(logits: LogitMatrix, labels: Sequence[int | str], k: int) -> float:
    """Fraction of rows whose true class is among the k largest logits.

    Ties are broken toward the lowest class index. Labels may be class ids
    or integer column indices.
    """
    n, c = logits.shape
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} rows")
    if not (1 <= k <= c):
        raise ValueError(f"k must be in [1, {c}], got {k}")
    idx = []
    for lab in labels:
        if isinstance(lab, str):
            idx.append(logits.class_ids.index(lab))
        else:
            idx.append(int(lab))
    # Stable sort on -value keeps lower column index first among ties.
    order = np.argsort(-logits.values, axis=1, kind="stable")
    topk = order[:, :k]
    hits = sum(1 for i, true in enumerate(idx) if true in topk[i])
    return hits / n


# ---------------------------------------------------------------------------
# On-disk embedding formats


def load_embedding_matrix(path) -> EmbeddingMatrix:
    """Load embeddings from `<path>.jsonl` (id+vector per line) or an f32
    binary matrix `<path>` with a JSON sidecar `<path>.json` carrying ids
    and dimension."""
    path = Path(path)
    if path.suffix == ".jsonl":
        ids, rows = [], []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "id" not in rec or "vector" not in rec:
                    raise ValueError(f"{path}:{lineno}: need 'id' and 'vector'")
                ids.append(rec["id"])
                rows.append(rec["vector"])
        return EmbeddingMatrix.from_rows(ids, rows, normalize=True)
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = json.loads(sidecar.read_text())
    ids, dim = meta["ids"], int(meta["dim"])
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != len(ids) * dim:
        raise ValueError(
            f"{path}: expected {len(ids) * dim} f32 values for {len(ids)}x{dim}, got {raw.size}")
    return EmbeddingMatrix.from_rows(ids, raw.reshape(len(ids), dim).astype(np.float64),
                                     normalize=True)
