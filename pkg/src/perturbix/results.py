"""Small containers shared by the optimizers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LinearCoefficients", "OptimizationResult", "METHOD_TAGS"]

METHOD_TAGS = ("closed_form", "lagrange_measure_preserving", "svd_kl", "projection")


@dataclass
class LinearCoefficients:
    """Coefficient matrix ``C`` of the linear functional ``sum_ij C_ij P_ij``.

    Entries outside ``mask`` are zeroed on construction.
    """

    c: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.c = np.where(self.mask, np.asarray(self.c, dtype=float), 0.0)
        if self.c.shape != self.mask.shape:
            raise ValueError("coefficient and mask shapes differ")

    def value(self, p) -> float:
        return float(np.sum(self.c * np.asarray(p)))


@dataclass
class OptimizationResult:
    p: np.ndarray
    objective_gradient: float
    method_tag: str
    feasible_epsilon: float = np.inf
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method_tag not in METHOD_TAGS:
            raise ValueError(f"unknown method tag {self.method_tag!r}")

    def metadata(self) -> dict:
        eps = self.feasible_epsilon
        return {
            "objective": float(self.objective_gradient),
            "method_tag": self.method_tag,
            "feasible_epsilon": None if not np.isfinite(eps) else float(eps),
            **self.extras,
        }
