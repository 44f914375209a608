"""Softmax under uniform and asymmetric temperature scaling.

All routines work on a single logit vector in float64. The batched helpers at
the bottom exist for the training loop and the harness, which evaluate whole
datasets at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


@dataclass(frozen=True)
class LogitRecord:
    """One sample's logits together with its ground-truth class."""

    logits: np.ndarray
    label: int

    def __post_init__(self):
        f = np.asarray(self.logits, dtype=np.float64)
        if f.ndim != 1 or f.size < 2:
            raise DomainError(f"need a logit vector with at least 2 classes, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise DomainError("logits must be finite")
        label = int(self.label)
        if not 0 <= label < f.size:
            raise DomainError(f"label {label} out of range for {f.size} classes")
        f.flags.writeable = False
        object.__setattr__(self, "logits", f)
        object.__setattr__(self, "label", label)

    @property
    def num_classes(self) -> int:
        return self.logits.size

    @property
    def target_logit(self) -> float:
        return float(self.logits[self.label])


@dataclass(frozen=True)
class TemperaturePair:
    """(tau1, tau2): temperature for the target class and for the wrong classes."""

    tau1: float
    tau2: float

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise DomainError(f"temperatures must be positive, got ({self.tau1}, {self.tau2})")
        object.__setattr__(self, "tau1", float(self.tau1))
        object.__setattr__(self, "tau2", float(self.tau2))


Temps = Union[float, TemperaturePair]


@dataclass(frozen=True)
class ProbVector:
    """A normalized probability vector and the temperatures that produced it.

    ``label`` is only set for asymmetric scaling, where the target index decides
    which entry received ``tau1``.
    """

    probs: np.ndarray
    temps: Temps
    label: int | None = field(default=None)

    def __len__(self):
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)


def check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0 or not np.isfinite(tau):
        raise DomainError(f"temperature must be a positive finite number, got {tau}")
    return tau


def log_sum_exp(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    if v.size == 1:
        return float(v[0])
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


def _stable_softmax(scaled: np.ndarray) -> np.ndarray:
    z = np.exp(scaled - scaled.max())
    return z / z.sum()


def softmax_ts(record: LogitRecord, tau: float) -> ProbVector:
    """Softmax of ``logits / tau``."""
    tau = check_tau(tau)
    return ProbVector(_stable_softmax(record.logits / tau), tau)


def dprobs_dtau(record: LogitRecord, tau: float) -> np.ndarray:
    """Analytic derivative of the TS probabilities with respect to ``tau``:
    ``p_c / tau**2 * (sum_j p_j f_j - f_c)``."""
    p = softmax_ts(record, tau).probs
    f = record.logits
    return p / tau**2 * (p @ f - f)


def ats_scaled_logits(record: LogitRecord, temps: TemperaturePair) -> np.ndarray:
    scaled = record.logits / temps.tau2
    scaled[record.label] = record.logits[record.label] / temps.tau1
    return scaled


def softmax_ats(record: LogitRecord, temps: TemperaturePair) -> ProbVector:
    """Asymmetric temperature scaling: ``tau1`` on the target logit, ``tau2`` on the rest."""
    if not isinstance(temps, TemperaturePair):
        raise DomainError("softmax_ats needs a TemperaturePair")
    return ProbVector(_stable_softmax(ats_scaled_logits(record, temps)), temps, record.label)


def softened(record: LogitRecord, temps: Temps) -> ProbVector:
    """Dispatch to TS or ATS depending on the temperature descriptor."""
    if isinstance(temps, TemperaturePair):
        return softmax_ats(record, temps)
    return softmax_ts(record, temps)


def wrong_logits(record: LogitRecord) -> np.ndarray:
    """The logit vector with the target entry removed, order preserved."""
    return np.delete(record.logits, record.label)


def renorm_wrong_probs(record: LogitRecord, tau: float) -> np.ndarray:
    """Softmax over the wrong logits only."""
    tau = check_tau(tau)
    return _stable_softmax(wrong_logits(record) / tau)


def wrong_temperature(temps: Temps) -> float:
    return temps.tau2 if isinstance(temps, TemperaturePair) else float(temps)


# batched helpers: rows are samples

def softmax_rows(scaled: np.ndarray) -> np.ndarray:
    z = np.exp(scaled - scaled.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def log_softmax_rows(scaled: np.ndarray) -> np.ndarray:
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def scale_rows(logits: np.ndarray, labels: np.ndarray, temps: Temps) -> np.ndarray:
    """Divide each row by its per-class temperature (uniform or asymmetric)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not isinstance(temps, TemperaturePair):
        return logits / check_tau(temps)
    scaled = logits / temps.tau2
    rows = np.arange(len(logits))
    scaled[rows, labels] = logits[rows, labels] / temps.tau1
    return scaled


def softened_rows(logits: np.ndarray, labels: np.ndarray, temps: Temps) -> np.ndarray:
    return softmax_rows(scale_rows(logits, labels, temps))
