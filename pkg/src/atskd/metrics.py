"""Estimators on teacher labels and agreement statistics between two teachers.

Wrong-class statistics divide by the number of wrong classes (C - 1) and the
whole-vector variance divides by C. Neither applies a Bessel correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .scaling import (
    LogitRecord,
    ProbVector,
    Temps,
    softened,
    softmax_rows,
    renorm_wrong_probs,
    scale_rows,
    wrong_temperature,
)


@dataclass(frozen=True)
class DecompositionStats:
    target_prob: float
    derived_avg: float
    derived_var: float
    inherent_var: float
    derived_std: float
    inherent_std: float


@dataclass(frozen=True)
class AgreementStats:
    spearman: float
    kendall: float
    topk_overlap: float
    l1_distance: float


def _nonempty(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        raise ValueError("statistic of an empty vector")
    return q


def derived_average(q) -> float:
    return float(_nonempty(q).mean())


def derived_variance(q) -> float:
    q = _nonempty(q)
    return float(((q - q.mean()) ** 2).mean())


def inherent_variance(record: LogitRecord, tau: float) -> float:
    return derived_variance(renorm_wrong_probs(record, tau))


def whole_variance(p: ProbVector) -> float:
    """Variance of all C entries; equals mean(p**2) - 1/C**2 for a normalized vector."""
    return derived_variance(np.asarray(p))


def decomposition_stats(record: LogitRecord, temps: Temps) -> DecompositionStats:
    """Target probability, DA, DV and IV of the softened label.

    IV is computed from a separate softmax over the wrong logits at the wrong-class
    temperature, so the DV = (C-1)^2 DA^2 IV identity is a genuine cross-check.
    """
    p = softened(record, temps).probs
    q = np.delete(p, record.label)
    dv = derived_variance(q)
    iv = inherent_variance(record, wrong_temperature(temps))
    return DecompositionStats(
        target_prob=float(p[record.label]),
        derived_avg=derived_average(q),
        derived_var=dv,
        inherent_var=iv,
        derived_std=math.sqrt(dv),
        inherent_std=math.sqrt(iv),
    )


def decomposition_rows(logits: np.ndarray, labels: np.ndarray, temps: Temps) -> dict[str, np.ndarray]:
    """Vectorized ``decomposition_stats`` over a dataset; returns one array per field."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, c = logits.shape
    p = softmax_rows(scale_rows(logits, labels, temps))
    keep = np.ones_like(p, dtype=bool)
    keep[np.arange(n), labels] = False
    q = p[keep].reshape(n, c - 1)
    g = logits[keep].reshape(n, c - 1)
    qt = softmax_rows(g / wrong_temperature(temps))
    dv = ((q - q.mean(axis=1, keepdims=True)) ** 2).mean(axis=1)
    iv = ((qt - qt.mean(axis=1, keepdims=True)) ** 2).mean(axis=1)
    return {
        "target_prob": p[np.arange(n), labels],
        "derived_avg": q.mean(axis=1),
        "derived_var": dv,
        "inherent_var": iv,
        "derived_std": np.sqrt(dv),
        "inherent_std": np.sqrt(iv),
    }


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need two vectors of equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise ValueError("rank correlation needs at least two entries")
    return a, b


def spearman(a, b) -> float:
    """Pearson correlation of average ranks."""
    a, b = _pair(a, b)
    ra = rankdata(a) - (a.size + 1) / 2
    rb = rankdata(b) - (b.size + 1) / 2
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denom == 0.0:
        return float("nan")
    return float(ra @ rb) / denom


def kendall(a, b) -> float:
    """Kendall tau-b: (concordant - discordant) / sqrt((n0 - ties_a)(n0 - ties_b)).

    Equals tau-a when neither vector has ties; NaN if either is constant.
    """
    a, b = _pair(a, b)
    i, j = np.triu_indices(a.size, k=1)
    sa, sb = np.sign(a[i] - a[j]), np.sign(b[i] - b[j])
    denom = math.sqrt(float(np.count_nonzero(sa)) * float(np.count_nonzero(sb)))
    if denom == 0.0:
        return float("nan")
    return float((sa * sb).sum()) / denom


def pairwise_agreement(tau: float) -> float:
    """Probability that a random pair is ordered the same way, for tie-free inputs."""
    return (tau + 1.0) / 2.0


def top_k(a, k: int) -> np.ndarray:
    """Indices of the k largest entries; ties prefer the smaller index."""
    a = np.asarray(a, dtype=np.float64)
    return np.argsort(-a, kind="stable")[:k]


def topk_overlap(a, b, k: int) -> float:
    a, b = _pair(a, b)
    if not 1 <= k <= a.size:
        raise ValueError(f"k={k} out of range for vectors of length {a.size}")
    sa, sb = set(top_k(a, k).tolist()), set(top_k(b, k).tolist())
    return len(sa & sb) / len(sa | sb)


def l1_distance(p1, p2) -> float:
    a, b = np.asarray(p1, dtype=np.float64), np.asarray(p2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def agreement(p1, p2, k: int = 5) -> AgreementStats:
    return AgreementStats(
        spearman=spearman(p1, p2),
        kendall=kendall(p1, p2),
        topk_overlap=topk_overlap(p1, p2, k),
        l1_distance=l1_distance(p1, p2),
    )


def mean_agreement(probs1: np.ndarray, probs2: np.ndarray, k: int = 5) -> AgreementStats:
    """Per-sample agreement between two teachers' labels, averaged over samples.

    Samples where a rank correlation is undefined (a constant vector) are left
    out of that metric's average.
    """
    probs1, probs2 = np.asarray(probs1), np.asarray(probs2)
    if probs1.shape != probs2.shape:
        raise ValueError(f"shape mismatch: {probs1.shape} vs {probs2.shape}")
    if len(probs1) == 0:
        raise ValueError("no samples to compare")
    rows = [agreement(a, b, k) for a, b in zip(probs1, probs2)]
    out = []
    for f in fields(AgreementStats):
        col = np.array([getattr(r, f.name) for r in rows])
        col = col[~np.isnan(col)]
        out.append(float(col.mean()) if col.size else float("nan"))
    return AgreementStats(*out)


def aggregate(stats: Sequence[DecompositionStats]) -> dict[str, dict[str, float]]:
    """Mean and population standard deviation of every field across samples."""
    if len(stats) == 0:
        raise ValueError("cannot aggregate an empty sequence")
    out = {}
    for f in fields(DecompositionStats):
        col = np.array([getattr(s, f.name) for s in stats], dtype=np.float64)
        out[f.name] = {"mean": float(col.mean()), "std": float(col.std())}
    return out
