"""Coincidence tables and their on-disk formats.

JSON (one document per measurement setting)::

    {"schema": 1, "label": "tilt0", "dim": 3,
     "counts": [[...], ...], "singles_A": [...], "singles_B": [...],
     "exposure": 1.0, "meta": {...}}

CSV: header ``i,j,count``, one row per cell.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DataFormatError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CoincidenceTable:
    """Counts N_ij for one global product setting plus per-arm singles.

    Counts are stored as float64 so that noiseless expected-value tables can
    share the type with sampled integer tables; only nonnegativity is enforced.
    """

    label: str
    counts: np.ndarray = field(repr=False)
    singles_a: np.ndarray | None = field(default=None, repr=False)
    singles_b: np.ndarray | None = field(default=None, repr=False)
    exposure: float = 1.0
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        c = np.array(self.counts, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise DataFormatError(f"counts must be a square matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise DataFormatError("counts must be finite and nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        d = c.shape[0]
        for name in ("singles_a", "singles_b"):
            s = getattr(self, name)
            if s is None:
                continue
            s = np.array(s, dtype=float).ravel()
            if s.shape != (d,):
                raise DataFormatError(f"{name} must have length {d}")
            if not np.all(np.isfinite(s)) or np.any(s < 0):
                raise DataFormatError(f"{name} must be finite and nonnegative")
            s.setflags(write=False)
            object.__setattr__(self, name, s)
        if not self.exposure > 0:
            raise DataFormatError("exposure must be positive")

    @property
    def dim(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def has_singles(self) -> bool:
        return self.singles_a is not None and self.singles_b is not None

    def with_counts(self, counts: np.ndarray, singles_a=None, singles_b=None) -> "CoincidenceTable":
        return replace(self, counts=counts, singles_a=singles_a, singles_b=singles_b)

    def to_json(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "label": self.label,
            "dim": self.dim,
            "counts": _jsonable(self.counts),
            "singles_A": None if self.singles_a is None else _jsonable(self.singles_a),
            "singles_B": None if self.singles_b is None else _jsonable(self.singles_b),
            "exposure": self.exposure,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "CoincidenceTable":
        if not isinstance(doc, dict):
            raise DataFormatError("coincidence table must be a JSON object")
        try:
            schema = doc.get("schema", SCHEMA_VERSION)
            if schema != SCHEMA_VERSION:
                raise DataFormatError(f"unsupported schema version {schema}")
            counts = np.asarray(doc["counts"], dtype=float)
            table = cls(
                label=str(doc["label"]),
                counts=counts,
                singles_a=doc.get("singles_A"),
                singles_b=doc.get("singles_B"),
                exposure=float(doc.get("exposure", 1.0)),
                meta=dict(doc.get("meta") or {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataFormatError):
                raise
            raise DataFormatError(f"malformed coincidence table: {exc}") from exc
        if "dim" in doc and int(doc["dim"]) != table.dim:
            raise DataFormatError(f"declared dim {doc['dim']} != counts dim {table.dim}")
        return table

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "j", "count"])
        for (i, j), v in np.ndenumerate(self.counts):
            writer.writerow([i, j, _num(v)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, label: str, exposure: float = 1.0) -> "CoincidenceTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise DataFormatError("empty CSV table")
        try:
            cells = [(int(r["i"]), int(r["j"]), float(r["count"])) for r in rows]
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"malformed CSV table: {exc}") from exc
        d = max(max(i, j) for i, j, _ in cells) + 1
        counts = np.zeros((d, d))
        for i, j, v in cells:
            counts[i, j] = v
        return cls(label=label, counts=counts, exposure=exposure)


def _num(v: float) -> int | float:
    v = float(v)
    return int(v) if v.is_integer() else v


def _jsonable(arr: np.ndarray) -> list:
    if arr.ndim == 1:
        return [_num(v) for v in arr]
    return [_jsonable(row) for row in arr]


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_table(table: CoincidenceTable, path: str | Path, fmt: str = "json") -> Path:
    path = Path(path)
    text = table.to_csv() if fmt == "csv" else dumps(table.to_json())
    path.write_text(text)
    return path


def load_table(path: str | Path) -> CoincidenceTable:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".csv":
        return CoincidenceTable.from_csv(text, label=path.stem)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
    return CoincidenceTable.from_json(doc)


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
