"""Reference simulators: a noisy circle map, Euler-Maruyama SDEs and Lorenz 63.

Random numbers come from ``numpy.random.Generator(Philox(seed))``, a
counter-based generator, and are drawn in fixed-size chunks, so a given
seed always yields the same trajectory. The inner loops are compiled with
numba; drift functions passed to :func:`simulate_sde_em` may be numba
``njit`` functions (fast path) or plain Python callables mapping a 1-d
array to a 1-d array (slow, meant for tests).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .errors import NumericalBlowup, ParameterError
from .ulam import Trajectory

__all__ = [
    "MapSpec",
    "SdeSpec",
    "lanford_map",
    "simulate_lanford",
    "simulate_sde_em",
    "double_well_1d_field",
    "double_well_2d_field",
    "rotation_field",
    "simulate_lorenz63",
    "PRESETS",
    "run_preset",
]

CHUNK = 1 << 18


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@numba.njit(cache=True)
def lanford_map(x):
    return 2.0 * x + 0.5 * x * (1.0 - x)


@dataclass
class MapSpec:
    steps: int
    seed: int = 0
    noise_halfwidth: float = 0.1
    initial: float = 0.1
    map: Callable | None = None


_map_kernels: dict = {}


def _map_kernel(fn):
    if fn not in _map_kernels:

        @numba.njit
        def run(x0, noise, out, start):
            x = x0
            for k in range(noise.size):
                x = (fn(x) + noise[k]) % 1.0
                out[start + k] = x
            return x

        _map_kernels[fn] = run
    return _map_kernels[fn]


def simulate_lanford(spec: MapSpec) -> Trajectory:
    """Iterate ``x -> (f(x) + xi) mod 1`` with ``xi ~ U[-h, h]``.

    ``f`` defaults to ``2x + x(1-x)/2``. The returned trajectory starts at
    ``spec.initial`` and has ``spec.steps`` points with ``dt = 1``.
    """
    steps = int(spec.steps)
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    h = float(spec.noise_halfwidth)
    kernel = _map_kernel(spec.map if spec.map is not None else lanford_map)
    rng = _rng(spec.seed)
    out = np.empty(steps)
    out[0] = x = float(spec.initial) % 1.0
    pos = 1
    while pos < steps:
        m = min(CHUNK, steps - pos)
        noise = rng.uniform(-h, h, size=m) if h > 0 else np.zeros(m)
        x = kernel(x, noise, out, pos)
        pos += m
    return Trajectory(out, 1.0, {"preset": "lanford", "seed": spec.seed, "rng": "Philox"})


@dataclass
class SdeSpec:
    drift: Callable
    sigma: float | np.ndarray
    dt: float = 1e-2
    steps: int = 10**6
    initial: np.ndarray = field(default_factory=lambda: np.zeros(1))
    seed: int = 0
    guard: float = 1e6

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if np.any(np.asarray(self.sigma) < 0):
            raise ParameterError("sigma must be nonnegative")


_em_kernels: dict = {}


def _em_kernel(drift):
    if drift not in _em_kernels:

        @numba.njit
        def run(x, dt, sig, noise, out, start, guard):
            d = x.size
            for k in range(noise.shape[0]):
                f = drift(x)
                for a in range(d):
                    x[a] = x[a] + f[a] * dt + sig[a] * noise[k, a]
                    if not abs(x[a]) <= guard:
                        return start + k
                    out[start + k, a] = x[a]
            return -1

        _em_kernels[drift] = run
    return _em_kernels[drift]


def _em_python(drift, x, dt, sig, noise, out, start, guard):
    for k in range(noise.shape[0]):
        x = x + np.asarray(drift(x), dtype=float) * dt + sig * noise[k]
        if not np.all(np.abs(x) <= guard):
            return start + k, x
        out[start + k] = x
    return -1, x


def simulate_sde_em(spec: SdeSpec) -> Trajectory:
    """Euler-Maruyama: ``x_{k+1} = x_k + F(x_k) dt + sigma sqrt(dt) xi_k``.

    Raises
    ------
    NumericalBlowup
        If a coordinate leaves ``[-guard, guard]`` (or becomes NaN).
    """
    x = np.array(spec.initial, dtype=float).reshape(-1)
    d = x.size
    steps = int(spec.steps)
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    sig = np.broadcast_to(np.asarray(spec.sigma, dtype=float), (d,)).copy()
    sdt = sig * np.sqrt(spec.dt)
    jitted = isinstance(spec.drift, numba.core.registry.CPUDispatcher)
    kernel = _em_kernel(spec.drift) if jitted else None
    rng = _rng(spec.seed)
    out = np.empty((steps, d))
    out[0] = x
    pos = 1
    while pos < steps:
        m = min(CHUNK, steps - pos)
        noise = rng.standard_normal((m, d))
        if jitted:
            bad = kernel(x, spec.dt, sdt, noise, out, pos, spec.guard)
        else:
            bad, x = _em_python(spec.drift, x, spec.dt, sdt, noise, out, pos, spec.guard)
        if bad >= 0:
            raise NumericalBlowup(f"state left the guard region at step {bad}; reduce dt")
        pos += m
    return Trajectory(out, spec.dt, {"seed": spec.seed, "rng": "Philox"})


def double_well_1d_field(alpha: float = -0.1):
    """Jitted drift ``x - x^3 + alpha`` acting on length-1 arrays."""
    alpha = float(alpha)

    @numba.njit
    def drift(x):
        out = np.empty(1)
        out[0] = x[0] - x[0] ** 3 + alpha
        return out

    return drift


def double_well_2d_field(alpha: float = -0.1, with_rotation: bool = False):
    """Jitted drift ``(x - x^3 + alpha, -y)``, optionally plus :func:`rotation_field`."""
    alpha = float(alpha)
    rot = 0.5 if with_rotation else 0.0

    @numba.njit
    def drift(x):
        out = np.empty(2)
        g = x[0] - x[0] ** 3
        out[0] = g + alpha + rot * x[1]
        out[1] = -x[1] + rot * g
        return out

    return drift


def rotation_field(x, y):
    """Divergence-free (with respect to the double-well density) rotation ``(y, x - x^3) / 2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * y, 0.5 * (x - x**3)


@numba.njit(cache=True)
def _l63(x, s, r, b):
    return np.array([s * (x[1] - x[0]), x[0] * (r - x[2]) - x[1], x[0] * x[1] - b * x[2]])


@numba.njit(cache=True)
def _rk4_run(x, s, r, b, dt, n, out, record, guard):
    for k in range(n):
        k1 = _l63(x, s, r, b)
        k2 = _l63(x + 0.5 * dt * k1, s, r, b)
        k3 = _l63(x + 0.5 * dt * k2, s, r, b)
        k4 = _l63(x + dt * k3, s, r, b)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.max(np.abs(x)) <= guard:
            return x, k
        if record:
            out[k] = x
    return x, -1


def simulate_lorenz63(
    s: float = 10.0,
    r: float = 28.0,
    b: float = 8.0 / 3.0,
    dt: float = 1e-3,
    steps: int = 10**6,
    transient: float = 100.0,
    initial=(1.0, 1.0, 1.0),
    seed=None,
    guard: float = 1e6,
) -> Trajectory:
    """Classical fourth-order Runge-Kutta integration of Lorenz 63.

    The first ``transient`` time units are integrated and discarded; the
    trajectory then holds ``steps`` points spaced ``dt`` apart, starting
    with the state reached after the transient. ``seed`` is accepted for
    a uniform preset interface and ignored.
    """
    x = np.asarray(initial, dtype=float).copy()
    n_tr = int(round(transient / dt))
    x, bad = _rk4_run(x, s, r, b, dt, n_tr, np.empty((0, 3)), False, guard)
    if bad >= 0:
        raise NumericalBlowup(f"blow-up during transient at step {bad}")
    out = np.empty((int(steps), 3))
    out[0] = x
    x, bad = _rk4_run(x, s, r, b, dt, int(steps) - 1, out[1:], True, guard)
    if bad >= 0:
        raise NumericalBlowup(f"blow-up at step {bad}; reduce dt")
    return Trajectory(out, dt, {"preset": "l63", "s": s, "r": r, "b": b})


PRESET_DEFAULTS = {
    "lanford": {"steps": 10**7, "seed": 0, "noise_halfwidth": 0.1, "initial": 0.1},
    "dw1d": {"steps": 10**7, "seed": 0, "alpha": -0.1, "sigma": 0.5, "dt": 1e-2, "initial": [0.0]},
    "dw2d": {"steps": 10**7, "seed": 0, "alpha": -0.1, "sigma": 0.4, "dt": 1e-2, "initial": [0.0, 0.0]},
    "dw2d-rot": {"steps": 10**7, "seed": 0, "alpha": 0.0, "sigma": 0.4, "dt": 1e-2, "initial": [0.0, 0.0]},
    "l63": {
        "steps": 10**7, "s": 10.0, "r": 28.0, "b": 8.0 / 3.0, "dt": 1e-3,
        "transient": 100.0, "initial": [1.0, 1.0, 1.0],
    },
}
PRESETS = tuple(PRESET_DEFAULTS)


def run_preset(name: str, **overrides) -> tuple[Trajectory, dict]:
    """Simulate a named preset; returns the trajectory and the resolved parameters."""
    if name not in PRESET_DEFAULTS:
        raise ParameterError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    unknown = set(overrides) - set(PRESET_DEFAULTS[name])
    if unknown:
        raise ParameterError(f"unknown parameters for {name}: {sorted(unknown)}")
    cfg = {**PRESET_DEFAULTS[name], **{k: v for k, v in overrides.items() if v is not None}}
    cfg["steps"] = int(cfg["steps"])
    if name == "lanford":
        traj = simulate_lanford(MapSpec(cfg["steps"], cfg["seed"], cfg["noise_halfwidth"], cfg["initial"]))
    elif name == "l63":
        traj = simulate_lorenz63(cfg["s"], cfg["r"], cfg["b"], cfg["dt"], cfg["steps"], cfg["transient"], cfg["initial"])
    else:
        if name == "dw1d":
            drift = double_well_1d_field(cfg["alpha"])
        else:
            drift = double_well_2d_field(cfg["alpha"], with_rotation=name == "dw2d-rot")
        traj = simulate_sde_em(SdeSpec(drift, cfg["sigma"], cfg["dt"], cfg["steps"], np.asarray(cfg["initial"]), cfg["seed"]))
    traj.meta.update({"preset": name, **cfg})
    return traj, cfg
