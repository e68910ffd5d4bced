"""Scalar functionals of stationary vectors and chains.

Sign convention: :func:`entropy` returns ``sum u log u`` (natural log), which is
the *negative* of the Shannon entropy. Use :func:`shannon_entropy` for the
conventional sign.
"""
from __future__ import annotations

import numpy as np

from .errors import AsymmetricMask, DomainError, LengthMismatch
from .markov_core import ResponseOperator, as_stochastic, invariant_vector

__all__ = [
    "entropy",
    "shannon_entropy",
    "entropy_response",
    "kl_divergence",
    "kl_weight",
    "kl_quadratic_response",
    "entropy_production",
    "expectation",
]


def _positive(v, name="vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)):
        raise DomainError(f"{name} must be strictly positive")
    return v


def entropy(u) -> float:
    """``H(u) = sum_i u_i log u_i``; note the missing minus sign."""
    u = _positive(u, "u")
    return float(np.sum(u * np.log(u)))


def shannon_entropy(u) -> float:
    return -entropy(u)


def entropy_response(u, v1) -> float:
    """Derivative of :func:`entropy` along a zero-sum response ``v1``: ``log(u) . v1``."""
    u = _positive(u, "u")
    return float(np.log(u) @ np.asarray(v1, dtype=float))


def kl_divergence(v, u) -> float:
    """``D_KL(v, u) = sum_i v_i log(v_i / u_i)``."""
    v = _positive(v, "v")
    u = _positive(u, "u")
    if v.shape != u.shape:
        raise LengthMismatch(f"lengths differ: {v.shape} vs {u.shape}")
    return float(np.sum(v * np.log(v / u)))


def kl_weight(u) -> np.ndarray:
    """Diagonal of the KL weight matrix, ``sqrt(u)`` (or ``sqrt(w)`` for a target ``w``)."""
    return np.sqrt(_positive(u, "weights"))


def kl_quadratic_response(d, g: ResponseOperator, p, u) -> float:
    """Second-order KL coefficient ``0.5 * ||D^{-1} G P u||_2^2``.

    ``d`` is the diagonal of ``D`` (see :func:`kl_weight`).
    """
    v1 = g.apply(np.asarray(p, dtype=float) @ np.asarray(u, dtype=float))
    return 0.5 * float(np.sum((v1 / np.asarray(d, dtype=float)) ** 2))


def _require_symmetric(m):
    m = as_stochastic(m)
    mask = m.mask
    if not np.array_equal(mask, mask.T):
        i, j = np.nonzero(mask & ~mask.T)
        raise AsymmetricMask(
            f"transition {j[0]} -> {i[0]} has no reverse; entropy production is infinite"
        )
    return m


def entropy_production(m, u=None) -> float:
    """Schnakenberg entropy production of a column-stochastic chain.

    ``s(M) = sum_{(i,j) in mask} u_i M_ji log(u_i M_ji / (u_j M_ij))``, which
    is nonnegative and vanishes exactly under detailed balance.

    Raises
    ------
    AsymmetricMask
        If the support of ``M`` is not symmetric.
    """
    m = _require_symmetric(m)
    if u is None:
        u = invariant_vector(m)
    u = _positive(u, "u")
    rows, cols = m.support
    a = m.entries
    # flux j -> i is u_j M_ij; pair it with its reverse
    fwd = u[cols] * a[rows, cols]
    bwd = u[rows] * a[cols, rows]
    return float(np.sum(fwd * np.log(fwd / bwd)))


def expectation(psi, v) -> float:
    psi = np.asarray(psi, dtype=float)
    v = np.asarray(v, dtype=float)
    if psi.shape != v.shape:
        raise LengthMismatch(f"lengths differ: {psi.shape} vs {v.shape}")
    return float(psi @ v)
