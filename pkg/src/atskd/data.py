"""Synthetic Gaussian classes with block affinity structure, and logit files.

Logit file format::

    #logits v1 classes=<C>
    label,f_1,...,f_C
    ...

Lines after the header that start with ``#`` are comments; blank lines are
skipped. Floats are written with ``repr`` so they read back exactly.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn import Dataset
from .scaling import DomainError, LogitRecord

HEADER_RE = re.compile(r"#logits v1 classes=(\d+)")


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 10
    input_dim: int = 20
    train_per_class: int = 200
    test_per_class: int = 200
    cluster_spread: float = 1.0
    affinity_groups: tuple[tuple[int, ...], ...] = ((0, 1, 2, 3, 4), (5, 6, 7, 8, 9))
    block_tightness: float = 0.3
    block_radius: float = 4.0
    class_radius: float = 2.0
    modes_per_class: int = 4
    mode_radius: float = 3.0
    seed: int = 0

    def __post_init__(self):
        groups = tuple(tuple(int(c) for c in g) for g in self.affinity_groups)
        object.__setattr__(self, "affinity_groups", groups)
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.input_dim < 1 or self.train_per_class < 1 or self.test_per_class < 1:
            raise ValueError("input_dim and per-class sample counts must be positive")
        if not self.cluster_spread > 0:
            raise ValueError("cluster_spread must be positive")
        flat = sorted(c for g in groups for c in g)
        if flat != list(range(self.num_classes)) or any(len(g) == 0 for g in groups):
            raise ValueError(f"affinity_groups {groups} do not partition 0..{self.num_classes - 1}")
        if not 0.0 < self.block_tightness < 1.0:
            raise ValueError("block_tightness must lie strictly between 0 and 1")
        if self.modes_per_class < 1 or self.mode_radius < 0:
            raise ValueError("need modes_per_class >= 1 and mode_radius >= 0")

    def block_of(self) -> np.ndarray:
        out = np.empty(self.num_classes, dtype=np.int64)
        for b, g in enumerate(self.affinity_groups):
            out[list(g)] = b
        return out


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def class_means(spec: SyntheticSpec, tightness: float | None = None) -> np.ndarray:
    """Class centers: block center plus a class offset shrunk by the tightness.

    ``tightness`` overrides ``spec.block_tightness`` (used to probe the limit 1).
    """
    t = spec.block_tightness if tightness is None else tightness
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(3)[0])
    centers = spec.block_radius * _unit_rows(rng, len(spec.affinity_groups), spec.input_dim)
    offsets = spec.class_radius * _unit_rows(rng, spec.num_classes, spec.input_dim)
    return centers[spec.block_of()] + (1.0 - t) * offsets


def mode_centers(spec: SyntheticSpec) -> np.ndarray:
    """Sub-cluster centers, shape (C, modes_per_class, input_dim)."""
    means = class_means(spec)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(4)[3])
    shifts = spec.mode_radius * _unit_rows(rng, spec.num_classes * spec.modes_per_class, spec.input_dim)
    return means[:, None, :] + shifts.reshape(spec.num_classes, spec.modes_per_class, spec.input_dim)


def generate(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Train and test sets, sorted by class. Train and test noise use separate streams.

    Each sample picks one of its class's sub-clusters uniformly (a single mode at
    the class mean by default) and adds isotropic Gaussian noise.
    """
    centers = mode_centers(spec)
    _, train_ss, test_ss = np.random.SeedSequence(spec.seed).spawn(3)
    out = []
    for ss, per_class in ((train_ss, spec.train_per_class), (test_ss, spec.test_per_class)):
        rng = np.random.default_rng(ss)
        y = np.repeat(np.arange(spec.num_classes), per_class)
        mode = rng.integers(spec.modes_per_class, size=len(y))
        x = centers[y, mode] + spec.cluster_spread * rng.standard_normal((len(y), spec.input_dim))
        out.append(Dataset(x, y))
    return out[0], out[1]


class LogitFileError(ValueError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


@dataclass
class LogitDataset:
    num_classes: int
    records: list[LogitRecord] = field(default_factory=list)
    source: str = ""

    def __post_init__(self):
        for r in self.records:
            if r.num_classes != self.num_classes:
                raise ValueError(f"record with {r.num_classes} classes in a {self.num_classes}-class dataset")

    def __len__(self):
        return len(self.records)

    def logits(self) -> np.ndarray:
        return np.array([r.logits for r in self.records]).reshape(len(self.records), self.num_classes)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    @classmethod
    def from_arrays(cls, logits: np.ndarray, labels: Sequence[int], source: str = "") -> "LogitDataset":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(logits.shape[1], [LogitRecord(f, int(y)) for f, y in zip(logits, labels)], source)


def read_logit_file(path) -> LogitDataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    m = HEADER_RE.fullmatch(lines[0]) if lines else None
    if m is None:
        raise LogitFileError(path, 1, f"expected header '#logits v1 classes=<C>', got {lines[0][:60]!r}")
    c = int(m.group(1))
    if c < 2:
        raise LogitFileError(path, 1, f"need at least 2 classes, header says {c}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != c + 1:
            raise LogitFileError(path, lineno, f"expected {c + 1} fields, found {len(parts)}")
        try:
            label = int(parts[0])
        except ValueError:
            raise LogitFileError(path, lineno, f"label {parts[0]!r} is not an integer") from None
        if not 0 <= label < c:
            raise LogitFileError(path, lineno, f"label {label} out of range [0, {c})")
        try:
            f = np.array([float(v) for v in parts[1:]])
        except ValueError as e:
            raise LogitFileError(path, lineno, f"bad logit value: {e}") from None
        try:
            records.append(LogitRecord(f, label))
        except DomainError as e:
            raise LogitFileError(path, lineno, str(e)) from None
    return LogitDataset(c, records, str(path))


def format_logit_file(dataset: LogitDataset) -> str:
    lines = [f"#logits v1 classes={dataset.num_classes}"]
    for r in dataset.records:
        lines.append(",".join([str(r.label), *(repr(float(v)) for v in r.logits)]))
    return "\n".join(lines) + "\n"


def write_logit_file(dataset: LogitDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_logit_file(dataset))
