"""Reduced Markov models whose states are periodic orbits.

Each orbit ``i`` carries a period ``T_i`` and per-orbit averages of named
observables. Time averages weight orbit ``i`` by ``w_i = u_i T_i / sum_j u_j T_j``,
so a perturbation of the chain acts on averages through the weights.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateObjective, DomainError, GridMismatch, LengthMismatch, UnknownObservable
from .markov_core import ResponseOperator, StochasticMatrix, as_stochastic
from .optimize import maximize_linear_functional
from .results import OptimizationResult

__all__ = [
    "ReducedOrbitModel",
    "load_model",
    "save_model",
    "synthetic_model",
    "orbit_weights",
    "weighted_average",
    "weight_response",
    "weight_response_matrix",
    "maximize_weighted_observable",
    "weighted_profile",
]


@dataclass
class ReducedOrbitModel:
    """Orbit-to-orbit chain with periods, observables and optional profiles.

    ``profiles[name]`` is a dict with ``grid`` (sample points) and
    ``values`` (one row per orbit).
    """

    m: StochasticMatrix
    periods: np.ndarray
    observables: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)

    def __post_init__(self):
        self.m = as_stochastic(self.m)
        self.periods = np.asarray(self.periods, dtype=float)
        if self.periods.shape != (self.m.n,):
            raise LengthMismatch(f"{self.periods.size} periods for {self.m.n} orbits")
        if np.any(~(self.periods > 0)):
            raise DomainError("periods must be positive")
        obs = {}
        for k, v in self.observables.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (self.m.n,):
                raise LengthMismatch(f"observable {k!r} has {v.size} values for {self.m.n} orbits")
            obs[k] = v
        self.observables = obs
        prof = {}
        for k, spec in self.profiles.items():
            grid = np.asarray(spec["grid"], dtype=float)
            vals = np.asarray(spec["values"], dtype=float)
            if vals.shape != (self.m.n, grid.size):
                raise GridMismatch(f"profile {k!r}: values of shape {vals.shape} for {self.m.n} orbits on {grid.size} points")
            prof[k] = {"grid": grid, "values": vals}
        self.profiles = prof

    @property
    def n(self) -> int:
        return self.m.n

    def observable(self, name) -> np.ndarray:
        try:
            return self.observables[name]
        except KeyError:
            raise UnknownObservable(name) from None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "transition_matrix": self.m.entries.tolist(),
            "periods": self.periods.tolist(),
            "observables": {k: v.tolist() for k, v in self.observables.items()},
            "profiles": {k: {"grid": v["grid"].tolist(), "values": v["values"].tolist()} for k, v in self.profiles.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "ReducedOrbitModel":
        mat = np.asarray(d["transition_matrix"], dtype=float)
        if "n" in d and mat.shape != (d["n"], d["n"]):
            raise LengthMismatch(f"transition matrix shape {mat.shape} but n = {d['n']}")
        return cls(StochasticMatrix(mat), d["periods"], d.get("observables", {}), d.get("profiles", {}))


def load_model(path) -> ReducedOrbitModel:
    with open(path) as fh:
        return ReducedOrbitModel.from_dict(json.load(fh))


def save_model(model: ReducedOrbitModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def synthetic_model(n: int = 17, seed: int = 17, grid_points: int = 33) -> ReducedOrbitModel:
    """Random but reproducible stand-in for an orbit model.

    Transitions are dense with a random sparsity pattern, periods lie in
    [1, 6], an ``energy`` observable grows with the period (plus noise), a
    ``dissipation`` observable is independent, and the ``velocity`` profile
    of each orbit is a parabola-like shape whose peak follows its energy.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    a += np.diag(rng.uniform(0.5, 1.5, size=n))
    a /= a.sum(axis=0)
    periods = rng.uniform(1.0, 6.0, size=n)
    energy = 0.5 + 0.1 * periods + 0.05 * rng.standard_normal(n)
    dissipation = rng.uniform(0.5, 2.0, size=n)
    y = np.linspace(-1.0, 1.0, grid_points)
    shape = 1.0 - y**2
    velocity = energy[:, None] * shape[None, :] * (1.0 + 0.3 * (energy[:, None] - energy.mean()))
    return ReducedOrbitModel(
        StochasticMatrix(a),
        periods,
        {"energy": energy, "dissipation": dissipation},
        {"velocity": {"grid": y, "values": velocity}},
    )


def orbit_weights(model: ReducedOrbitModel, u) -> np.ndarray:
    """``w_i = u_i T_i / sum_j u_j T_j``."""
    ut = np.asarray(u, dtype=float) * model.periods
    return ut / ut.sum()


def weighted_average(model: ReducedOrbitModel, u, name) -> tuple[float, np.ndarray]:
    """Time average ``sum_i w_i hbar_i`` of an observable, with the weights."""
    h = model.observable(name)
    w = orbit_weights(model, u)
    return float(w @ h), w


def weight_response_matrix(model: ReducedOrbitModel, u) -> np.ndarray:
    """``A`` with ``dw = A v1``: ``A = (diag(T) - w T^T) / sum_j u_j T_j``."""
    t = model.periods
    z = float(np.asarray(u, dtype=float) @ t)
    w = orbit_weights(model, u)
    return (np.diag(t) - np.outer(w, t)) / z


def weight_response(model: ReducedOrbitModel, u, v1) -> np.ndarray:
    """First-order change of the weights when ``u`` moves along ``v1``."""
    t = model.periods
    v1 = np.asarray(v1, dtype=float)
    if v1.shape != t.shape:
        raise LengthMismatch(f"v1 has {v1.size} entries for {t.size} orbits")
    z = float(np.asarray(u, dtype=float) @ t)
    w = orbit_weights(model, u)
    return t * v1 / z - w * (v1 @ t) / z


def maximize_weighted_observable(model: ReducedOrbitModel, u, g: ResponseOperator, name,
                                 direction: str = "max") -> OptimizationResult:
    """Perturbation extremising ``sum_i hbar_i dw_i`` at unit Frobenius norm.

    Reduces to :func:`maximize_linear_functional` with ``f = A^T hbar``.
    """
    a = weight_response_matrix(model, u)
    hbar = model.observable(name)
    f = a.T @ hbar
    # a constant observable is annihilated by A^T up to round-off
    if np.abs(f).max() <= 1e-12 * np.abs(a).max() * np.abs(hbar).max():
        raise DegenerateObjective(f"observable {name!r} is constant across orbits")
    return maximize_linear_functional(model.m, u, g, f, direction)


def weighted_profile(model: ReducedOrbitModel, weights, profile_name) -> np.ndarray:
    """``sum_i w_i profile_i`` on the shared grid."""
    try:
        prof = model.profiles[profile_name]
    except KeyError:
        raise UnknownObservable(profile_name) from None
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (model.n,):
        raise LengthMismatch(f"{weights.size} weights for {model.n} orbits")
    return weights @ prof["values"]
