"""Distillation losses, the three-term decomposition, and student-logit gradients.

The teacher label is always treated as a constant: nothing here differentiates
through the teacher.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scaling import (
    LogitRecord,
    ProbVector,
    TemperaturePair,
    Temps,
    check_tau,
    log_softmax_rows,
    softened,
    softened_rows,
    softmax_rows,
)


@dataclass(frozen=True)
class KdTerms:
    correct_guidance: float
    smooth_regularization: float
    class_discriminability: float
    total: float


@dataclass(frozen=True)
class LossConfig:
    """Settings for the combined CE plus distillation loss.

    ``student_temp=None`` picks the conventional default: 1.0 for an asymmetric
    teacher label, the teacher's temperature for a uniform one.
    """

    lam: float = 0.5
    teacher_temps: Temps = 4.0
    student_temp: float | None = None
    multiply_tau_squared: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not isinstance(self.teacher_temps, TemperaturePair):
            object.__setattr__(self, "teacher_temps", check_tau(self.teacher_temps))
        if self.student_temp is None:
            st = 1.0 if isinstance(self.teacher_temps, TemperaturePair) else self.teacher_temps
            object.__setattr__(self, "student_temp", st)
        object.__setattr__(self, "student_temp", check_tau(self.student_temp))

    @property
    def scale(self) -> float:
        return self.student_temp**2 if self.multiply_tau_squared else 1.0


def _log_probs(logits: np.ndarray, tau: float) -> np.ndarray:
    return log_softmax_rows(np.asarray(logits, dtype=np.float64)[None, :] / tau)[0]


def _check_pair(teacher: LogitRecord, student: LogitRecord):
    if teacher.num_classes != student.num_classes:
        raise ValueError(f"class count mismatch: {teacher.num_classes} vs {student.num_classes}")
    if teacher.label != student.label:
        raise ValueError(f"label mismatch: {teacher.label} vs {student.label}")


def ce_loss(student: LogitRecord) -> float:
    """Cross-entropy of the student at temperature 1."""
    return float(-_log_probs(student.logits, 1.0)[student.label])


def kd_decompose(teacher_label: ProbVector, student_probs: ProbVector, label: int) -> KdTerms:
    pt = np.asarray(teacher_label, dtype=np.float64)
    ps = np.asarray(student_probs, dtype=np.float64)
    if pt.shape != ps.shape:
        raise ValueError(f"dimension mismatch: {pt.shape} vs {ps.shape}")
    if not 0 <= label < pt.size:
        raise ValueError(f"label {label} out of range")
    log_ps = np.log(ps)
    wrong = np.arange(pt.size) != label
    e = pt[wrong].mean()
    t1 = -pt[label] * log_ps[label]
    t2 = -(e * log_ps[wrong]).sum()
    t3 = -((pt[wrong] - e) * log_ps[wrong]).sum()
    return KdTerms(float(t1), float(t2), float(t3), float(-(pt * log_ps).sum()))


def flatten_label(probs: np.ndarray, label: int) -> np.ndarray:
    """Keep the target probability and replace every wrong entry by their mean."""
    probs = np.asarray(probs, dtype=np.float64)
    out = np.empty_like(probs)
    wrong = np.arange(probs.size) != label
    out[wrong] = probs[wrong].mean()
    out[label] = probs[label]
    return out


def teacher_label(teacher: LogitRecord, cfg: LossConfig, ils: bool = False) -> np.ndarray:
    p = softened(teacher, cfg.teacher_temps).probs
    return flatten_label(p, teacher.label) if ils else p


def _kd_part(pt: np.ndarray, student: LogitRecord, cfg: LossConfig) -> float:
    return float(cfg.lam * cfg.scale * -(pt * _log_probs(student.logits, cfg.student_temp)).sum())


def kd_loss(teacher: LogitRecord, student: LogitRecord, cfg: LossConfig) -> float:
    _check_pair(teacher, student)
    return _kd_part(teacher_label(teacher, cfg), student, cfg)


def ils_loss(teacher: LogitRecord, student: LogitRecord, cfg: LossConfig) -> float:
    """KD loss against the flattened teacher label (class discriminability removed)."""
    _check_pair(teacher, student)
    return _kd_part(teacher_label(teacher, cfg, ils=True), student, cfg)


def combined_loss(teacher: LogitRecord, student: LogitRecord, cfg: LossConfig, ils: bool = False) -> float:
    kd = ils_loss(teacher, student, cfg) if ils else kd_loss(teacher, student, cfg)
    return (1.0 - cfg.lam) * ce_loss(student) + kd


def grad_student_logits(
    teacher: LogitRecord, student: LogitRecord, cfg: LossConfig, ils: bool = False
) -> np.ndarray:
    """Gradient of ``combined_loss`` with respect to the student's logits."""
    _check_pair(teacher, student)
    pt = teacher_label(teacher, cfg, ils)
    ps1 = np.exp(_log_probs(student.logits, 1.0))
    ps1[student.label] -= 1.0
    pst = np.exp(_log_probs(student.logits, cfg.student_temp))
    return (1.0 - cfg.lam) * ps1 + cfg.lam * cfg.scale / cfg.student_temp * (pst - pt)


# batched versions used by the training loop

def teacher_labels(
    teacher_logits: np.ndarray, labels: np.ndarray, temps: Temps, ils: bool = False
) -> np.ndarray:
    pt = softened_rows(teacher_logits, labels, temps)
    if ils:
        n, c = pt.shape
        rows = np.arange(n)
        target = pt[rows, labels].copy()
        pt = np.repeat(((1.0 - target) / (c - 1))[:, None], c, axis=1)
        pt[rows, labels] = target
    return pt


def batch_loss_and_grad(
    targets: np.ndarray | None, student_logits: np.ndarray, labels: np.ndarray, cfg: LossConfig
) -> tuple[float, np.ndarray]:
    """Mean combined loss over a minibatch and its gradient w.r.t. each row of logits.

    ``targets`` are precomputed teacher labels (see ``teacher_labels``); pass None
    for plain cross-entropy training.
    """
    z = np.asarray(student_logits, dtype=np.float64)
    n = len(z)
    rows = np.arange(n)
    ce_w = 1.0 if targets is None else 1.0 - cfg.lam
    logp1 = log_softmax_rows(z)
    loss = -ce_w * logp1[rows, labels].sum()
    grad = np.exp(logp1)
    grad[rows, labels] -= 1.0
    grad *= ce_w
    if targets is not None and cfg.lam > 0:
        t = cfg.student_temp
        logpt = log_softmax_rows(z / t)
        loss += -cfg.lam * cfg.scale * (targets * logpt).sum()
        grad += cfg.lam * cfg.scale / t * (softmax_rows(z / t) - targets)
    return float(loss / n), grad / n
