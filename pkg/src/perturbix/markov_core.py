"""Column-stochastic matrices, stationary vectors and response operators.

Conventions
-----------
``M[i, j]`` is the probability of moving from state ``j`` to state ``i``, so
columns sum to one and the stationary vector solves ``M @ u = u``.
A perturbation ``P`` has zero column sums and lives on the support of ``M``.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    DomainError,
    InfeasibleEpsilon,
    NonMixing,
    SingularSystem,
    ZeroBudget,
)

__all__ = [
    "StochasticMatrix",
    "ResponseOperator",
    "as_stochastic",
    "invariant_vector",
    "spectral_gap",
    "ergodicity_coefficient",
    "perturbation_budget",
    "response_operator",
    "linear_response",
    "transient_response",
    "perturbed_matrix",
    "perturbed_invariant",
    "max_feasible_epsilon",
    "symmetrize_mask",
    "validate_perturbation",
    "DIRECT_SOLVE_MAX_N",
]

DIRECT_SOLVE_MAX_N = 2048
COLUMN_SUM_ATOL = 1e-12


class StochasticMatrix:
    """Immutable column-stochastic matrix with its sparsity mask.

    Parameters
    ----------
    entries : array_like or sparse matrix, shape (n, n)
        Transition probabilities, ``entries[i, j] = P(j -> i)``.
    atol : float
        Tolerance on column sums.
    """

    def __init__(self, entries, atol: float = COLUMN_SUM_ATOL):
        if scipy.sparse.issparse(entries):
            entries = entries.toarray()
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DomainError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("matrix has non-finite entries")
        if a.min() < 0.0 or a.max() > 1.0:
            raise DomainError("entries must lie in [0, 1]")
        err = np.abs(a.sum(axis=0) - 1.0).max()
        if err > atol:
            raise DomainError(f"columns must sum to 1 (max deviation {err:.3e})")
        a.setflags(write=False)
        self._a = a
        self._csr = None
        cols, rows = np.nonzero(a.T)
        # column-major (vec) ordering of the support
        self._rows = rows
        self._cols = cols
        self._mask = a > 0
        self._mask.setflags(write=False)

    @classmethod
    def from_counts(cls, counts) -> "StochasticMatrix":
        """Normalise a nonnegative count matrix column by column."""
        c = np.asarray(counts.toarray() if scipy.sparse.issparse(counts) else counts, dtype=float)
        s = c.sum(axis=0)
        if np.any(s <= 0):
            raise DomainError("every column needs a positive count")
        return cls(c / s)

    @property
    def n(self) -> int:
        return self._a.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column indices of the positive entries, in vec order."""
        return self._rows, self._cols

    @property
    def support_index(self) -> np.ndarray:
        """Positions of the positive entries in ``vec(M)`` (column stacking)."""
        return self._cols * self.n + self._rows

    @property
    def column_counts(self) -> np.ndarray:
        return self._mask.sum(axis=0)

    @property
    def nnz(self) -> int:
        return self._rows.size

    @property
    def csr(self) -> scipy.sparse.csr_array:
        if self._csr is None:
            self._csr = scipy.sparse.csr_array(self._a)
        return self._csr

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._a
        return self._a.astype(dtype)

    def __matmul__(self, other):
        if self.nnz < 0.25 * self.n * self.n:
            return self.csr @ other
        return self._a @ other

    def __repr__(self) -> str:
        return f"StochasticMatrix(n={self.n}, nnz={self.nnz})"


def as_stochastic(m) -> StochasticMatrix:
    if isinstance(m, StochasticMatrix):
        return m
    return StochasticMatrix(m)


def _second_modulus(m: StochasticMatrix) -> float:
    if m.n == 1:
        return 0.0
    if m.n <= DIRECT_SOLVE_MAX_N:
        ev = np.linalg.eigvals(m.entries)
        return float(np.sort(np.abs(ev))[-2])
    ev = scipy.sparse.linalg.eigs(m.csr, k=2, which="LM", return_eigenvectors=False)
    return float(np.sort(np.abs(ev))[0])


def spectral_gap(m) -> float:
    """Return ``1 - |lambda_2|`` for the subdominant eigenvalue ``lambda_2``."""
    return 1.0 - _second_modulus(as_stochastic(m))


def _stationary_direct(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    c = np.full(n, 1.0 / n)
    # (I - M + c 1^T) is invertible iff the unit eigenvalue is simple
    sys = np.eye(n) - a + c[:, None]
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu = scipy.linalg.lu_factor(sys, check_finite=False)
            u = scipy.linalg.lu_solve(lu, c, check_finite=False)
        except (scipy.linalg.LinAlgWarning, np.linalg.LinAlgError, ValueError) as exc:
            raise NonMixing("stationary system is singular; unit eigenvalue not simple") from exc
    if not np.all(np.isfinite(u)):
        raise NonMixing("stationary system is singular; unit eigenvalue not simple")
    for _ in range(3):
        r = a @ u - u
        if np.abs(r).sum() <= 1e-15:
            break
        u = u + scipy.linalg.lu_solve(lu, r, check_finite=False)
        u = u / u.sum()
    return u


def _stationary_power(m: StochasticMatrix, tol: float, max_iter: int) -> np.ndarray:
    u = np.full(m.n, 1.0 / m.n)
    op = m.csr
    for _ in range(max_iter):
        w = op @ u
        w /= w.sum()
        if np.abs(w - u).sum() <= tol:
            return w
        u = w
    raise NonMixing(f"power iteration did not converge in {max_iter} iterations")


def invariant_vector(
    m,
    tol: float = 1e-12,
    max_iter: int = 10**6,
    method: str = "auto",
    check_gap: bool = False,
) -> np.ndarray:
    """Stationary probability vector ``u`` with ``M u = u``.

    A dense direct solve is used up to ``DIRECT_SOLVE_MAX_N`` states and power
    iteration above; ``method`` may force ``"direct"`` or ``"power"``.

    Raises
    ------
    NonMixing
        If the solve is singular, the iteration does not converge, the
        residual exceeds ``tol``, any entry is nonpositive, or (with
        ``check_gap``) the spectral gap is below 1e-10.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    m = as_stochastic(m)
    if method == "auto":
        method = "direct" if m.n <= DIRECT_SOLVE_MAX_N else "power"
    if method == "direct":
        u = _stationary_direct(m.entries)
    elif method == "power":
        u = _stationary_power(m, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    u = u / u.sum()
    residual = np.abs(m @ u - u).sum()
    if residual > tol:
        raise NonMixing(f"stationary residual {residual:.3e} exceeds tol {tol:.1e}")
    if np.any(u <= 0):
        raise NonMixing("stationary vector has nonpositive entries (reducible chain)")
    if check_gap and spectral_gap(m) < 1e-10:
        raise NonMixing("subdominant eigenvalue has unit modulus")
    return u


def ergodicity_coefficient(m) -> float:
    """Dobrushin coefficient ``0.5 * max_{j,k} sum_i |M_ij - M_ik|``.

    This is the 1-norm of ``M`` restricted to sum-zero vectors.
    """
    a = np.asarray(as_stochastic(m).entries)
    n = a.shape[0]
    best = 0.0
    block = max(1, int(2**22 // max(1, n * n)))
    for start in range(0, n, block):
        cols = a[:, start:start + block]
        d = np.abs(a[:, :, None] - cols[:, None, :]).sum(axis=0)
        best = max(best, float(d.max()))
    return min(1.0, 0.5 * best)


def perturbation_budget(m) -> float:
    """``1 - tau(M)``: any perturbation with smaller 1-norm keeps M mixing."""
    tau = ergodicity_coefficient(m)
    if tau >= 1.0 - 1e-12:
        raise ZeroBudget(f"ergodicity coefficient {tau} leaves no perturbation budget")
    return 1.0 - tau


class ResponseOperator:
    """Generalised inverse ``G`` or its finite-time truncation ``G(t)``.

    For an infinite horizon ``G = (I - M + u 1^T)^{-1}``, held as one LU
    factorisation. For a finite horizon ``t``,
    ``G(t) = sum_{s=0}^{t} M^s - t u 1^T``, which agrees with
    ``sum_s M^s`` on zero-column-sum inputs and tends to ``G`` as t grows.
    The dense matrix is only built on request (``.matrix``).
    """

    def __init__(self, m, u, horizon=np.inf):
        self.m = as_stochastic(m)
        self.u = np.asarray(u, dtype=float)
        if horizon != np.inf:
            if int(horizon) != horizon or horizon < 0:
                raise DomainError("horizon must be a nonnegative integer or inf")
            horizon = int(horizon)
        self.horizon = horizon
        self._lu = None
        self._matrix = None
        if self.infinite:
            n = self.m.n
            sys = np.eye(n) - self.m.entries + self.u[:, None]
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                try:
                    self._lu = scipy.linalg.lu_factor(sys, check_finite=False)
                except (scipy.linalg.LinAlgWarning, np.linalg.LinAlgError) as exc:
                    raise SingularSystem("I - M + u 1^T is singular") from exc

    @property
    def infinite(self) -> bool:
        return self.horizon == np.inf

    @property
    def n(self) -> int:
        return self.m.n

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Return ``G @ x`` (``x`` may hold several columns)."""
        x = np.asarray(x, dtype=float)
        if self.infinite:
            return scipy.linalg.lu_solve(self._lu, x, check_finite=False)
        acc = x.copy()
        y = x
        for _ in range(self.horizon):
            y = self.m @ y
            acc += y
        acc -= self.horizon * np.multiply.outer(self.u, x.sum(axis=0))
        return acc

    def apply_transpose(self, f: np.ndarray) -> np.ndarray:
        """Return ``G.T @ f``."""
        f = np.asarray(f, dtype=float)
        if self.infinite:
            return scipy.linalg.lu_solve(self._lu, f, trans=1, check_finite=False)
        mt = self.m.csr.T
        acc = f.copy()
        y = f
        for _ in range(self.horizon):
            y = mt @ y
            acc += y
        acc -= self.horizon * np.multiply.outer(np.ones(self.n), self.u @ f)
        return acc

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = self.apply(np.eye(self.n))
        return self._matrix

    def __repr__(self) -> str:
        return f"ResponseOperator(n={self.n}, horizon={self.horizon})"


def response_operator(m, u, horizon=np.inf) -> ResponseOperator:
    return ResponseOperator(m, u, horizon)


def linear_response(g: ResponseOperator, p: np.ndarray, u: np.ndarray) -> np.ndarray:
    """First-order change ``v1 = G P u`` of the stationary vector."""
    return g.apply(np.asarray(p, dtype=float) @ np.asarray(u, dtype=float))


def transient_response(m, p, u, t_max: int) -> np.ndarray:
    """Rows ``v1(t) = sum_{s<=t} M^s P u`` for ``t = 0..t_max``."""
    m = as_stochastic(m)
    y = np.asarray(p, dtype=float) @ np.asarray(u, dtype=float)
    out = np.empty((t_max + 1, m.n))
    out[0] = y
    for t in range(1, t_max + 1):
        y = m @ y
        out[t] = out[t - 1] + y
    return out


def max_feasible_epsilon(m, p) -> float:
    """Largest ``eps`` keeping ``M + eps P`` entrywise nonnegative."""
    a = np.asarray(as_stochastic(m).entries)
    p = np.asarray(p, dtype=float)
    neg = p < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(a[neg] / -p[neg]))


def perturbed_matrix(m, p, eps: float) -> StochasticMatrix:
    """``M + eps P`` as a stochastic matrix.

    Round-off (negative entries down to -1e-14, column sums off by a few
    ulps) is clipped and renormalised away.

    Raises
    ------
    InfeasibleEpsilon
        If some entry of ``M + eps P`` is genuinely negative.
    """
    m = as_stochastic(m)
    a = m.entries + eps * np.asarray(p, dtype=float)
    if a.min() < -1e-14:
        raise InfeasibleEpsilon(
            f"eps={eps} exceeds the entrywise bound {max_feasible_epsilon(m, p):.4g}"
        )
    a = np.clip(a, 0.0, None)
    a /= a.sum(axis=0)
    return StochasticMatrix(a)


def perturbed_invariant(m, p, eps: float, tol: float = 1e-12, **kwargs) -> np.ndarray:
    """Stationary vector of ``M + eps P``."""
    m = as_stochastic(m)
    if eps == 0:
        return invariant_vector(m, tol=tol, **kwargs)
    return invariant_vector(perturbed_matrix(m, p, eps), tol=tol, **kwargs)


def symmetrize_mask(m) -> StochasticMatrix:
    """Drop one-sided transitions (``M_ij > 0`` but ``M_ji = 0``) and renormalise."""
    m = as_stochastic(m)
    keep = m.mask & m.mask.T
    a = np.where(keep, m.entries, 0.0)
    s = a.sum(axis=0)
    if np.any(s <= 0):
        raise DomainError("a column lost all its transitions")
    return StochasticMatrix(a / s)


def validate_perturbation(p, m, normalized: bool = True, atol: float = 1e-10) -> None:
    """Raise DomainError unless ``p`` satisfies the column-sum, support and norm constraints."""
    m = as_stochastic(m)
    p = np.asarray(p, dtype=float)
    if p.shape != m.shape:
        raise DomainError(f"shape {p.shape} does not match {m.shape}")
    if np.abs(p.sum(axis=0)).max() > atol:
        raise DomainError("columns of P must sum to zero")
    if np.any(p[~m.mask] != 0):
        raise DomainError("P has entries outside the support of M")
    if normalized and abs(np.linalg.norm(p) - 1.0) > atol:
        raise DomainError("P must have unit Frobenius norm")
