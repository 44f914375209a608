"""Asymmetric temperature scaling for knowledge distillation, at desk scale."""
from .scaling import DomainError, LogitRecord, ProbVector, TemperaturePair, softened, softmax_ats, softmax_ts

__all__ = [
    "DomainError",
    "LogitRecord",
    "ProbVector",
    "TemperaturePair",
    "softened",
    "softmax_ats",
    "softmax_ts",
]
__version__ = "0.1.0"
