"""Versioned, content-addressed storage for instruction datasets.

Records are persisted as canonical JSONL (sorted keys, NFC-normalized
strings) so the content hash is platform-stable. A dataset id is derived
from its bytes: rewriting identical content is a no-op, edits create new
children. Holdout object ids live in a sealable registry and can be checked
against any dataset.
"""

from __future__ import annotations

import hashlib
import json
import os
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "DatasetVersion",
    "HoldoutRegistry",
    "DatasetStore",
    "SchemaError",
    "HoldoutViolation",
    "canonical_jsonl",
]


class SchemaError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"{message} (line {line})")
        self.line = line


@dataclass(frozen=True)
class DatasetVersion:
    id: str
    generation: int
    parent_id: str | None
    record_count: int
    created_at: str
    checksum: str

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "generation": self.generation,
            "parent_id": self.parent_id,
            "record_count": self.record_count,
            "created_at": self.created_at,
            "checksum": self.checksum,
            "schema": 1,
        }


@dataclass
class HoldoutViolation:
    object_id: str
    line: int


@dataclass
class HoldoutRegistry:
    """Reserved object ids, immutable once sealed."""

    reserved_ids: set[str] = field(default_factory=set)
    purpose: str = ""
    sealed: bool = False

    def add(self, object_id: str) -> None:
        if self.sealed:
            raise ValueError("registry is sealed")
        self.reserved_ids.add(object_id)

    def seal(self) -> "HoldoutRegistry":
        self.sealed = True
        return self

    def __contains__(self, object_id: str) -> bool:
        return object_id in self.reserved_ids

    def save(self, path) -> None:
        payload = {"reserved_ids": sorted(self.reserved_ids),
                   "purpose": self.purpose, "sealed": self.sealed}
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "HoldoutRegistry":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(reserved_ids=set(data["reserved_ids"]),
                   purpose=data.get("purpose", ""),
                   sealed=data.get("sealed", False))


def _nfc(value):
    if isinstance(value, str):
        return unicodedata.normalize("NFC", value)
    if isinstance(value, list):
        return [_nfc(v) for v in value]
    if isinstance(value, dict):
        return {_nfc(k): _nfc(v) for k, v in value.items()}
    return value


def canonical_jsonl(records: Sequence[dict]) -> bytes:
    lines = []
    for rec in records:
        lines.append(json.dumps(_nfc(rec), sort_keys=True, ensure_ascii=False,
                                separators=(",", ":")))
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def _validate(records: Sequence[dict]) -> None:
    for i, rec in enumerate(records, start=1):
        if not isinstance(rec, dict):
            raise SchemaError(f"record is {type(rec).__name__}, expected object", line=i)
        oid = rec.get("object_id")
        if not isinstance(oid, str) or not oid:
            raise SchemaError("record missing non-empty 'object_id'", line=i)


class DatasetStore:
    """One directory per dataset id holding data.jsonl + manifest.json."""

    def __init__(self, root, clock=None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._clock = clock or (lambda: "1970-01-01T00:00:00Z")

    def _dir(self, dataset_id: str) -> Path:
        return self.root / dataset_id

    def write(self, records: Sequence[dict], generation: int = 0,
              parent: str | None = None) -> DatasetVersion:
        records = list(records)
        _validate(records)
        blob = canonical_jsonl(records)
        checksum = hashlib.sha256(blob).hexdigest()
        dataset_id = f"ds-{checksum[:16]}"
        target = self._dir(dataset_id)
        version = DatasetVersion(
            id=dataset_id, generation=generation, parent_id=parent,
            record_count=len(records), created_at=self._clock(), checksum=checksum)
        if target.exists():
            return self.version(dataset_id)
        tmp = target.with_name(target.name + ".tmp")
        tmp.mkdir(parents=True, exist_ok=True)
        (tmp / "data.jsonl").write_bytes(blob)
        (tmp / "manifest.json").write_text(
            json.dumps(version.as_dict(), indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, target)
        return version

    def version(self, dataset_id: str) -> DatasetVersion:
        meta = json.loads((self._dir(dataset_id) / "manifest.json").read_text(encoding="utf-8"))
        return DatasetVersion(
            id=meta["id"], generation=meta["generation"], parent_id=meta["parent_id"],
            record_count=meta["record_count"], created_at=meta["created_at"],
            checksum=meta["checksum"])

    def read(self, dataset_id: str) -> list[dict]:
        path = self._dir(dataset_id) / "data.jsonl"
        out = []
        for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"bad JSON: {exc}", line=i)
        return out

    def read_bytes(self, dataset_id: str) -> bytes:
        return (self._dir(dataset_id) / "data.jsonl").read_bytes()

    def exists(self, dataset_id: str) -> bool:
        return (self._dir(dataset_id) / "manifest.json").exists()

    def list(self) -> list[DatasetVersion]:
        out = []
        for child in sorted(self.root.iterdir()):
            if child.is_dir() and (child / "manifest.json").exists():
                out.append(self.version(child.name))
        return out

    def verify(self, dataset_id: str) -> bool:
        """Recompute the content hash and compare against the manifest."""
        blob = self.read_bytes(dataset_id)
        meta = self.version(dataset_id)
        return hashlib.sha256(blob).hexdigest() == meta.checksum

    def enforce_holdout(self, dataset_id: str, registry: HoldoutRegistry) -> list[HoldoutViolation]:
        """Every record whose object_id is reserved; empty means clean."""
        violations = []
        for i, rec in enumerate(self.read(dataset_id), start=1):
            if rec.get("object_id") in registry:
                violations.append(HoldoutViolation(object_id=rec["object_id"], line=i))
        return violations


def check_ids_against_holdout(object_ids: Iterable[str], registry: HoldoutRegistry) -> list[str]:
    """Ids from the given pool that are reserved (order-preserving)."""
    return [oid for oid in object_ids if oid in registry]
