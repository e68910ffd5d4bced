"""Generators from Markov matrices and drift fields from rate matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .errors import ComplexLogBranch, DomainError, ParameterError, SeriesDivergence
from .markov_core import ResponseOperator, as_stochastic
from .ulam import BoxPartition

__all__ = [
    "GeneratorMatrix",
    "series_radius",
    "matrix_log",
    "reconstruct_drift",
    "derivative_matrix",
    "continuity_response",
    "cosine_similarity",
]

COLUMN_SUM_ATOL = 1e-8
SERIES_AUTO_MAX_RADIUS = 0.9


@dataclass
class GeneratorMatrix:
    """Rate matrix ``L`` (columns sum to zero) estimated at lag ``tau``."""

    l: np.ndarray
    tau: float

    def __post_init__(self):
        self.l = np.asarray(self.l, dtype=float)
        dev = np.abs(self.l.sum(axis=0)).max() if self.l.size else 0.0
        if dev > COLUMN_SUM_ATOL * max(1.0, np.abs(self.l).max()):
            raise DomainError(f"generator column sums deviate from zero by {dev:.3g}")

    @property
    def n(self) -> int:
        return self.l.shape[0]


def series_radius(m, iters: int = 60) -> float:
    """Spectral radius of ``M - I``.

    Exact from the eigenvalues for ``n <= 512``; otherwise estimated by
    power iteration as ``||A^k x||^(1/k)``, which also handles complex
    dominant pairs.
    """
    a = np.asarray(as_stochastic(m).entries) - np.eye(as_stochastic(m).n)
    n = a.shape[0]
    if n <= 512:
        return float(np.abs(np.linalg.eigvals(a)).max())
    x = np.random.default_rng(0).standard_normal(n)
    x /= np.linalg.norm(x)
    logn = 0.0
    for _ in range(iters):
        x = a @ x
        nx = np.linalg.norm(x)
        if nx == 0:
            return 0.0
        logn += np.log(nx)
        x /= nx
    return float(np.exp(logn / iters))


def _log_series(a, tol, max_terms):
    out = np.zeros_like(a)
    term = np.eye(a.shape[0])
    for k in range(1, max_terms + 1):
        term = term @ a
        piece = term / k
        out += piece if k % 2 else -piece
        if np.linalg.norm(piece) < tol:
            return out
    raise SeriesDivergence(f"log series not converged after {max_terms} terms; try method='eigen'")


def _log_eigen(a, min_modulus, branch_tol=1e-10):
    w, v = np.linalg.eig(a)
    keep = np.abs(w) > min_modulus
    neg = keep & (np.abs(w.imag) <= branch_tol * np.maximum(1.0, np.abs(w))) & (w.real <= 0)
    if np.any(neg):
        raise ComplexLogBranch(
            f"{int(neg.sum())} eigenvalue(s) on the negative real axis, e.g. {w[neg][0].real:.3g}; "
            "raise min_modulus to discard unresolved modes"
        )
    if np.any(keep & (w == 0)):
        raise ComplexLogBranch("zero eigenvalue has no logarithm")
    vinv = np.linalg.inv(v)
    lw = np.log(w[keep])
    out = (v[:, keep] * lw) @ vinv[keep]
    return out.real


def matrix_log(m, tau: float, method: str = "auto", tol: float = 1e-15, max_terms: int = 10000,
               min_modulus: float = 0.0) -> GeneratorMatrix:
    """``L = log(M) / tau``.

    Parameters
    ----------
    method : {"auto", "series", "eigen"}
        ``series`` sums ``sum_k (-1)^(k+1) (M - I)^k / k`` until a term's
        Frobenius norm drops below ``tol``; it requires the spectral radius
        of ``M - I`` to be below one. ``eigen`` uses the principal logarithm
        of the eigenvalues. ``auto`` takes the series when the radius is at
        most 0.9.
    min_modulus : float
        Eigen method only. Eigenvalues of modulus at or below this value are
        left out of the spectral sum, i.e. the logarithm is taken on the
        slow invariant subspace only. Ulam matrices estimated from data have
        many tiny, noise-dominated eigenvalues (some on the negative real
        axis) whose logarithms are meaningless; truncating them keeps zero
        column sums because every discarded right eigenvector sums to zero.

    Raises
    ------
    SeriesDivergence
        Series requested but the radius is >= 1 or the sum did not converge.
    ComplexLogBranch
        A retained eigenvalue lies on the closed negative real axis.
    """
    if not tau > 0:
        raise ParameterError("tau must be positive")
    m = as_stochastic(m)
    a = np.asarray(m.entries, dtype=float)
    if method == "auto":
        method = "series" if series_radius(m) <= SERIES_AUTO_MAX_RADIUS else "eigen"
    if method == "series":
        rad = series_radius(m)
        if rad >= 1.0:
            raise SeriesDivergence(f"spectral radius of M - I is {rad:.4g} >= 1; use method='eigen'")
        log = _log_series(a - np.eye(m.n), tol, max_terms)
    elif method == "eigen":
        log = _log_eigen(a, min_modulus)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GeneratorMatrix(log / tau, float(tau))


def reconstruct_drift(l, p: BoxPartition, retained_index=None, occupancy=None, min_occupancy: int = 100,
                      centers=None) -> np.ndarray:
    """Drift at box centres: ``F_k(c_i) = sum_j L_ji (c_j^k - c_i^k)``.

    ``l`` is a :class:`GeneratorMatrix` or any rate-flux matrix (for
    example a perturbation ``P``). When ``occupancy`` (per retained box) is
    given, rows for boxes visited fewer than ``min_occupancy`` times are set
    to NaN. Returns an ``(n, dims)`` array.
    """
    lm = l.l if isinstance(l, GeneratorMatrix) else np.asarray(l, dtype=float)
    c = p.centers(retained_index) if centers is None else np.asarray(centers, dtype=float).reshape(lm.shape[0], -1)
    if c.shape[0] != lm.shape[0]:
        raise ParameterError(f"{c.shape[0]} box centres for a {lm.shape[0]}-state matrix")
    field = lm.T @ c - c * lm.sum(axis=0)[:, None]
    if occupancy is not None:
        field[np.asarray(occupancy) < min_occupancy] = np.nan
    return field


def derivative_matrix(p: BoxPartition, axis: int = 0, retained_index=None) -> scipy.sparse.csr_array:
    """Centred finite differences along ``axis`` on the box centres.

    Falls back to one-sided differences where a neighbour is outside the
    grid (or not retained); rows with neither neighbour are zero.
    """
    if not 0 <= axis < p.dims:
        raise ParameterError(f"axis {axis} out of range")
    if retained_index is None:
        retained_index = np.arange(p.n)
    retained_index = np.asarray(retained_index)
    n = retained_index.size
    lookup = np.full(p.n, -1)
    lookup[retained_index] = np.arange(n)
    sub = p.unravel(retained_index)
    h = p.widths[axis]
    nbr = []
    for step in (-1, 1):
        s = sub.copy()
        s[:, axis] += step
        inside = (s[:, axis] >= 0) & (s[:, axis] < p.counts[axis])
        flat = np.ravel_multi_index(tuple(np.clip(s, 0, p.counts - 1).T), tuple(p.counts))
        nbr.append(np.where(inside, lookup[flat], -1))
    lo, hi = nbr
    me = np.arange(n)
    both = (lo >= 0) & (hi >= 0)
    only_hi = (lo < 0) & (hi >= 0)
    only_lo = (lo >= 0) & (hi < 0)
    rows = np.concatenate([me[both], me[both], me[only_hi], me[only_hi], me[only_lo], me[only_lo]])
    cols = np.concatenate([hi[both], lo[both], hi[only_hi], me[only_hi], me[only_lo], lo[only_lo]])
    vals = np.concatenate([
        np.full(both.sum(), 0.5 / h), np.full(both.sum(), -0.5 / h),
        np.full(only_hi.sum(), 1.0 / h), np.full(only_hi.sum(), -1.0 / h),
        np.full(only_lo.sum(), 1.0 / h), np.full(only_lo.sum(), -1.0 / h),
    ])
    return scipy.sparse.csr_array((vals, (rows, cols)), shape=(n, n))


def continuity_response(g: ResponseOperator, u, field, deriv) -> np.ndarray:
    """``-G D(u g)``: the stationary response implied by a drift perturbation ``g``.

    ``field`` holds the perturbing drift at the retained centres (1D) and
    ``deriv`` is a :func:`derivative_matrix`. The result is mass-neutral up
    to boundary terms; it is projected onto zero sum before applying ``G``.
    """
    flux = np.asarray(u, dtype=float) * np.asarray(field, dtype=float).reshape(-1)
    div = deriv @ flux
    div = div - div.mean()
    return -g.apply(div)


def cosine_similarity(a, b, mask=None) -> float:
    """Cosine between two vector fields stacked into single vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if mask is not None:
        a, b = a[mask], b[mask]
    ok = np.all(np.isfinite(a.reshape(a.shape[0], -1)), axis=1) & np.all(np.isfinite(b.reshape(b.shape[0], -1)), axis=1)
    a, b = a[ok].ravel(), b[ok].ravel()
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
