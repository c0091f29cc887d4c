"""Tabular data loading, one-hot encoding, stratified folds and metrics."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

KINDS = ("continuous", "discrete", "label")


class DataError(ValueError):
    """Raised for malformed data or schema files."""


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # "continuous" | "discrete"


@dataclass(frozen=True)
class DatasetSchema:
    features: tuple[Feature, ...]
    label: str
    categories: dict[str, tuple[str, ...]] = field(default_factory=dict)
    classes: tuple[str, ...] = ()

    @property
    def continuous(self) -> list[str]:
        return [f.name for f in self.features if f.kind == "continuous"]

    @property
    def discrete(self) -> list[str]:
        return [f.name for f in self.features if f.kind == "discrete"]

    @property
    def binary_names(self) -> list[tuple[str, str]]:
        """(feature, value) for each column of the one-hot block, in order."""
        return [(name, v) for name in self.discrete for v in self.categories[name]]

    def to_dict(self) -> dict:
        return {
            "features": [[f.name, f.kind] for f in self.features],
            "label": self.label,
            "categories": {k: list(v) for k, v in self.categories.items()},
            "classes": list(self.classes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> DatasetSchema:
        return cls(
            features=tuple(Feature(n, k) for n, k in d["features"]),
            label=d["label"],
            categories={k: tuple(v) for k, v in d["categories"].items()},
            classes=tuple(d["classes"]),
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class EncodedDataset:
    schema: DatasetSchema
    C: np.ndarray  # N x m, float64
    B: np.ndarray  # N x b, uint8 one-hot blocks
    Y: np.ndarray  # N x M, uint8 one-hot labels
    c_min: np.ndarray
    c_max: np.ndarray

    def __post_init__(self):
        for a in (self.C, self.B, self.Y, self.c_min, self.c_max):
            a.setflags(write=False)

    def __len__(self) -> int:
        return self.C.shape[0]

    @property
    def y(self) -> np.ndarray:
        return self.Y.argmax(axis=1)

    @property
    def n_classes(self) -> int:
        return self.Y.shape[1]

    @property
    def X(self) -> np.ndarray:
        return np.hstack([self.C, self.B.astype(np.float64)])

    def subset(self, idx: Sequence[int]) -> EncodedDataset:
        """Rows `idx`; min/max are recomputed from the subset only."""
        idx = np.asarray(idx, dtype=np.int64)
        C = self.C[idx]
        lo, hi = _col_range(C)
        return EncodedDataset(self.schema, C, self.B[idx], self.Y[idx], lo, hi)

    def decode_discrete(self) -> dict[str, list[str]]:
        """Invert the one-hot blocks back to category values."""
        out: dict[str, list[str]] = {}
        col = 0
        for name in self.schema.discrete:
            cats = self.schema.categories[name]
            block = self.B[:, col:col + len(cats)]
            out[name] = [cats[i] for i in block.argmax(axis=1)]
            col += len(cats)
        return out


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    folds: tuple[tuple[np.ndarray, np.ndarray], ...]  # (train, test) per fold

    def to_json(self) -> str:
        return json.dumps({
            "k": self.k,
            "seed": self.seed,
            "folds": [{"train": tr.tolist(), "test": te.tolist()} for tr, te in self.folds],
        })

    @classmethod
    def from_json(cls, text: str) -> FoldPlan:
        d = json.loads(text)
        folds = tuple((np.asarray(f["train"], dtype=np.int64), np.asarray(f["test"], dtype=np.int64))
                      for f in d["folds"])
        return cls(d["k"], d["seed"], folds)


def _col_range(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if C.shape[0] == 0 or C.shape[1] == 0:
        return np.zeros(C.shape[1]), np.zeros(C.shape[1])
    return C.min(axis=0), C.max(axis=0)


def read_schema(schema_path: str | Path) -> tuple[list[Feature], str]:
    """Parse a `name,kind` sidecar. Exactly one column must have kind `label`."""
    path = Path(schema_path)
    if not path.is_file():
        raise DataError(f"schema file not found: {path}")
    features, labels, seen = [], [], set()
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 'name,kind', got {row!r}")
            name, kind = row[0].strip(), row[1].strip().lower()
            if kind not in KINDS:
                raise DataError(f"{path}:{lineno}: unknown kind {kind!r} for column {name!r}")
            if name in seen:
                raise DataError(f"{path}:{lineno}: column {name!r} described twice")
            seen.add(name)
            if kind == "label":
                labels.append(name)
            else:
                features.append(Feature(name, kind))
    if len(labels) != 1:
        raise DataError(f"{path}: expected exactly one label column, found {len(labels)}")
    return features, labels[0]


def load_dataset(data_path: str | Path, schema_path: str | Path,
                 reference: DatasetSchema | None = None) -> EncodedDataset:
    """Load a headed CSV and encode it as continuous matrix, one-hot block and labels.

    With `reference`, category and class lists are taken from it (e.g. from a
    checkpoint) instead of being inferred, and values outside them are errors.
    """
    features, label = read_schema(schema_path)
    path = Path(data_path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r and "".join(r).strip()]

    described = {f.name for f in features} | {label}
    for h in header:
        if h not in described:
            raise DataError(f"{path}: unknown column {h!r} (not in schema)")
    for name in described:
        if name not in header:
            raise DataError(f"{path}: schema column {name!r} missing from data")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column in header")
    pos = {h: i for i, h in enumerate(header)}

    for lineno, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")

    cont = [f.name for f in features if f.kind == "continuous"]
    disc = [f.name for f in features if f.kind == "discrete"]

    C = np.empty((len(rows), len(cont)), dtype=np.float64)
    for j, name in enumerate(cont):
        col = pos[name]
        for i, r in enumerate(rows):
            cell = r[col].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}:{i + 2}: column {name!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{i + 2}: column {name!r}: non-finite value {cell!r}")
            C[i, j] = v

    raw_disc = {name: [r[pos[name]].strip() for r in rows] for name in disc}
    raw_label = [r[pos[label]].strip() for r in rows]
    for name, vals in list(raw_disc.items()) + [(label, raw_label)]:
        for i, v in enumerate(vals):
            if v == "":
                raise DataError(f"{path}:{i + 2}: column {name!r}: missing value")

    if reference is None:
        categories = {name: tuple(sorted(set(raw_disc[name]))) for name in disc}
        classes = tuple(sorted(set(raw_label)))
    else:
        categories, classes = dict(reference.categories), reference.classes
    schema = DatasetSchema(tuple(features), label, categories, classes)

    blocks = []
    for name in disc:
        index = {v: i for i, v in enumerate(categories[name])}
        block = np.zeros((len(rows), len(index)), dtype=np.uint8)
        for i, v in enumerate(raw_disc[name]):
            if v not in index:
                raise DataError(f"{path}:{i + 2}: column {name!r}: unseen category {v!r}")
            block[i, index[v]] = 1
        blocks.append(block)
    B = np.hstack(blocks) if blocks else np.zeros((len(rows), 0), dtype=np.uint8)

    class_index = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((len(rows), len(classes)), dtype=np.uint8)
    for i, v in enumerate(raw_label):
        if v not in class_index:
            raise DataError(f"{path}:{i + 2}: column {label!r}: unseen label value {v!r}")
        Y[i, class_index[v]] = 1

    lo, hi = _col_range(C)
    return EncodedDataset(schema, C, B, Y, lo, hi)


def stratified_kfold(y: np.ndarray | EncodedDataset, k: int, seed: int) -> FoldPlan:
    """Seeded stratified k-fold split.

    Each class is shuffled and dealt round-robin, continuing the fold counter
    across classes, so per-class counts and total fold sizes both differ by at
    most one between folds.
    """
    if isinstance(y, EncodedDataset):
        y = y.y
    y = np.asarray(y)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    classes, counts = np.unique(y, return_counts=True)
    small = classes[counts < k]
    if small.size:
        raise ValueError(f"classes {small.tolist()} have fewer than k={k} instances")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in classes:
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        assign[idx] = (offset + np.arange(len(idx))) % k
        offset = (offset + len(idx)) % k
    folds = []
    for f in range(k):
        test = np.flatnonzero(assign == f)
        train = np.flatnonzero(assign != f)
        folds.append((train, test))
    return FoldPlan(k, seed, tuple(folds))


def macro_f1(pred: Sequence[int], truth: Sequence[int], M: int) -> float:
    """Unweighted mean of per-class F1; classes absent from both pred and truth score 0."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth lengths differ")
    if M <= 0:
        raise ValueError("M must be positive")
    if pred.size and (pred.min() < 0 or pred.max() >= M or truth.min() < 0 or truth.max() >= M):
        raise ValueError(f"class indices must lie in [0, {M})")
    scores = []
    for c in range(M):
        tp = int(np.sum((pred == c) & (truth == c)))
        fp = int(np.sum((pred == c) & (truth != c)))
        fn = int(np.sum((pred != c) & (truth == c)))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def accuracy(pred: Sequence[int], truth: Sequence[int]) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    return float(np.mean(pred == truth)) if pred.size else 0.0
