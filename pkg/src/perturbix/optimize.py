"""Optimal unit-norm perturbations of a Markov matrix.

Every optimizer returns a perturbation ``P`` with unit Frobenius norm, zero
column sums and support inside the support of ``M``. The measure-preserving
optimizer additionally enforces ``P u = 0``.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg

from . import constraint_space
from .errors import (
    AsymmetricMask,
    DegenerateObjective,
    EmptyFeasibleSpace,
    InfeasibleEpsilon,
    SingularMultiplierSystem,
)
from .functionals import kl_weight
from .markov_core import (
    ResponseOperator,
    as_stochastic,
    max_feasible_epsilon,
)
from .results import LinearCoefficients, OptimizationResult

__all__ = [
    "LinearCoefficients",
    "OptimizationResult",
    "maximize_linear_functional",
    "maximize_kl",
    "entropy_production_coefficients",
    "minimize_measure_preserving",
    "additive_reversibilization",
    "measure_diag",
    "probability_floor_mask",
    "feasible_support_search",
    "KL_BASIS_MAX_NNZ",
]

KL_BASIS_MAX_NNZ = 2000


def _sign(direction: str) -> float:
    if direction == "max":
        return 1.0
    if direction == "min":
        return -1.0
    raise ValueError(f"direction must be 'max' or 'min', got {direction!r}")


def _column_center(values, cols, counts):
    """Subtract from each support value the mean over its column."""
    sums = np.bincount(cols, weights=values, minlength=counts.size)
    return values - (sums / counts)[cols]


def _assemble(n, rows, cols, values) -> np.ndarray:
    p = np.zeros((n, n))
    p[rows, cols] = values
    return p


def _masked_support(m, mask=None):
    rows, cols = m.support
    if mask is not None:
        on = np.asarray(mask, dtype=bool)[rows, cols]
        rows, cols = rows[on], cols[on]
    return rows, cols, np.maximum(np.bincount(cols, minlength=m.n), 1)


def maximize_linear_functional(m, u, g: ResponseOperator, f, direction: str = "max", mask=None) -> OptimizationResult:
    """Extremise ``f^T G P u`` over unit-norm, zero-column-sum ``P`` on the support of ``M``.

    Closed form: ``P_ij ∝ u_j (h_i - mean_{l: M_lj > 0} h_l)`` with
    ``h = G^T f``. A finite-horizon ``g`` gives the finite-time optimum.
    ``mask`` optionally shrinks the admissible support.
    """
    m = as_stochastic(m)
    u = np.asarray(u, dtype=float)
    h = g.apply_transpose(np.asarray(f, dtype=float))
    rows, cols, counts = _masked_support(m, mask)
    raw = u[cols] * _column_center(h[rows], cols, counts)
    norm = np.linalg.norm(raw)
    scale = np.abs(h).max() * u.max()
    if norm <= 1e-12 * scale or norm == 0.0:
        raise DegenerateObjective("the response gradient is constant on every column support")
    p = _assemble(m.n, rows, cols, _sign(direction) * raw / norm)
    return OptimizationResult(
        p=p,
        objective_gradient=float(h @ (p @ u)),
        method_tag="closed_form",
        feasible_epsilon=max_feasible_epsilon(m, p),
    )


def _fix_sign(v: np.ndarray) -> np.ndarray:
    big = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    if big.size and v[big[0]] < 0:
        return -v
    return v


def _weighted_scatter(m, u, rows=None, cols=None) -> scipy.sparse.csr_array:
    """Sparse ``R`` (n x nnz) with ``R @ p = P u`` for support values ``p``."""
    if rows is None:
        rows, cols = m.support
    return scipy.sparse.csr_array((u[cols], (rows, np.arange(rows.size))), shape=(m.n, rows.size))


def kl_design_matrix(m, u, g: ResponseOperator, d) -> np.ndarray:
    """Dense ``A = u^T ⊗ (D^{-1} G)`` acting on ``vec(P)``; small ``n`` only."""
    m = as_stochastic(m)
    dg = g.matrix / np.asarray(d)[:, None]
    return np.kron(np.asarray(u)[None, :], dg)


def maximize_kl(m, u, g: ResponseOperator, target=None, method: str = "auto", mask=None) -> OptimizationResult:
    """Maximise the leading KL coefficient ``0.5 ||D^{-1} G P u||^2``.

    ``D = diag(sqrt(u))``, or ``diag(sqrt(target))`` when a target
    distribution is given. ``method="basis"`` takes the top singular vector
    of ``A B`` with ``B`` an orthonormal basis of the feasible subspace;
    ``method="gram"`` solves the equivalent n x n eigenproblem for
    ``(D^{-1} G R)(D^{-1} G R)^T`` restricted to zero-column-sum ``P``,
    which never forms anything of size ``nnz^2``. ``"auto"`` picks ``basis``
    when the support has at most ``KL_BASIS_MAX_NNZ`` entries. ``mask``
    optionally shrinks the admissible support.
    """
    m = as_stochastic(m)
    u = np.asarray(u, dtype=float)
    d = kl_weight(u if target is None else target)
    rows, cols, counts = _masked_support(m, mask)
    if method == "auto":
        method = "basis" if rows.size <= KL_BASIS_MAX_NNZ else "gram"
    if method == "basis":
        fb = constraint_space.feasible_basis(m, u, include_measure_preservation=False, mask=mask)
        r = _weighted_scatter(m, u, rows, cols)
        ab = g.apply((r @ fb.vectors)) / d[:, None]
        _, s, vt = scipy.linalg.svd(ab, full_matrices=False)
        sigma = s[0]
        p_vals = fb.vectors @ vt[0]
    elif method == "gram":
        lap = _support_laplacian(m, u, rows, cols)

        def mv(x):
            x = np.asarray(x).reshape(-1)
            y = g.apply_transpose(x / d)
            return g.apply(lap @ y) / d

        op = scipy.sparse.linalg.LinearOperator((m.n, m.n), matvec=mv, dtype=float)
        v0 = np.ones(m.n)
        vals, vecs = scipy.sparse.linalg.eigsh(op, k=1, which="LA", v0=v0, tol=1e-13)
        lam = max(vals[0], 0.0)
        sigma = np.sqrt(lam)
        h = g.apply_transpose(vecs[:, 0] / d)
        p_vals = u[cols] * _column_center(h[rows], cols, counts)
    else:
        raise ValueError(f"unknown method {method!r}")
    norm = np.linalg.norm(p_vals)
    if sigma <= 0 or norm == 0:
        raise EmptyFeasibleSpace("no feasible direction changes the stationary vector")
    p_vals = _fix_sign(p_vals / norm)
    p = _assemble(m.n, rows, cols, p_vals)
    v1 = g.apply(p @ u)
    return OptimizationResult(
        p=p,
        objective_gradient=0.5 * float(np.sum((v1 / d) ** 2)),
        method_tag="svd_kl",
        feasible_epsilon=max_feasible_epsilon(m, p),
        extras={"singular_value": float(sigma)},
    )


def _require_symmetric_mask(m):
    if not np.array_equal(m.mask, m.mask.T):
        raise AsymmetricMask("entropy production needs a symmetric transition mask")


def entropy_production_coefficients(m, u) -> LinearCoefficients:
    """Coefficients ``C`` with ``d s(M + eps P)/d eps = sum C_ij P_ij`` when ``P u = 0``.

    ``C_ij = u_j log(u_j M_ij / (u_i M_ji)) - u_i M_ji / M_ij`` on the mask.
    """
    m = as_stochastic(m)
    _require_symmetric_mask(m)
    u = np.asarray(u, dtype=float)
    rows, cols = m.support
    a = m.entries
    fwd = a[rows, cols]
    bwd = a[cols, rows]
    vals = u[cols] * np.log(u[cols] * fwd / (u[rows] * bwd)) - u[rows] * bwd / fwd
    return LinearCoefficients(_assemble(m.n, rows, cols, vals), m.mask)


def _support_laplacian(m, u, rows=None, cols=None) -> scipy.sparse.csr_array:
    """``diag(xi) - Z diag(beta) Z^T`` with ``beta_j = u_j^2 / |Z_j|``, ``xi_k = sum_{j: M_kj>0} u_j^2``.

    This is the matrix of the multiplier equations for ``q``; its null space
    always contains the constant vector. ``rows, cols`` default to the
    support of ``M``.
    """
    if rows is None:
        rows, cols = m.support
    z = scipy.sparse.csr_array((np.ones(rows.size), (rows, cols)), shape=m.shape)
    counts = np.bincount(cols, minlength=m.n)
    beta = np.divide(u**2, counts, out=np.zeros(m.n), where=counts > 0)
    xi = z @ (u**2)
    return (scipy.sparse.diags_array(xi) - z @ scipy.sparse.diags_array(beta) @ z.T).tocsr()


def minimize_measure_preserving(m, u, coeffs: LinearCoefficients, direction: str = "min") -> OptimizationResult:
    """Extremise ``sum C_ij P_ij`` under unit norm, zero column sums, support and ``P u = 0``.

    Solves the Lagrange conditions ``C_ij - r_j - q_i u_j - 2 nu P_ij = 0``.
    After eliminating ``r`` the multipliers satisfy
    ``(Xi - Z diag(beta) Z^T) q = alpha``, singular along constants; the
    gauge is fixed by ``sum(q) = 0`` on every connected component of the
    graph linking rows that share a column (the constants cancel in ``P``,
    so ``P`` is unique). A fully dense mask admits the closed
    form ``q = alpha / sum(u^2)``.

    The support is the intersection of the mask of ``M`` with
    ``coeffs.mask``, so passing coefficients on a smaller mask (for example
    only transitions above some probability) restricts where ``P`` may be
    nonzero. Entries of ``M`` that are tiny compared to ``|P_ij|`` limit the
    admissible ``eps`` in ``M + eps P``.
    """
    m = as_stochastic(m)
    u = np.asarray(u, dtype=float)
    rows, cols = m.support
    on = coeffs.mask[rows, cols]
    rows, cols = rows[on], cols[on]
    counts = np.bincount(cols, minlength=m.n)
    safe = np.maximum(counts, 1)
    c = coeffs.c[rows, cols]
    col_c = np.bincount(cols, weights=c, minlength=m.n)
    alpha = np.bincount(rows, weights=c * u[cols] - u[cols] * col_c[cols] / safe[cols], minlength=m.n)
    if rows.size == m.n * m.n:
        q = alpha / np.sum(u**2)
    else:
        lap = _support_laplacian(m, u, rows, cols)
        # one free constant per connected component; it cancels in P
        n_comp, labels = scipy.sparse.csgraph.connected_components(abs(lap) > 0, directed=False)
        gauge = np.zeros((m.n, n_comp))
        gauge[np.arange(m.n), labels] = 1.0
        border = np.zeros((m.n + n_comp, m.n + n_comp))
        border[: m.n, : m.n] = lap.toarray()
        border[: m.n, m.n :] = gauge
        border[m.n :, : m.n] = gauge.T
        rhs = np.concatenate([alpha, np.zeros(n_comp)])
        try:
            q = scipy.linalg.solve(border, rhs, check_finite=False)[: m.n]
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise SingularMultiplierSystem("multiplier system is numerically singular") from exc
    q_col = np.bincount(cols, weights=q[rows], minlength=m.n)
    r = (col_c - u * q_col) / safe
    raw = c - r[cols] - q[rows] * u[cols]
    norm = np.linalg.norm(raw)
    if norm <= 1e-14 * max(1.0, np.linalg.norm(c)):
        raise DegenerateObjective("coefficients are orthogonal to the feasible subspace")
    p = _assemble(m.n, rows, cols, _sign(direction) * raw / norm)
    return OptimizationResult(
        p=p,
        objective_gradient=coeffs.value(p),
        method_tag="lagrange_measure_preserving",
        feasible_epsilon=max_feasible_epsilon(m, p),
    )


def probability_floor_mask(m, floor: float, symmetric: bool = False) -> np.ndarray:
    """Entries with ``M_ij >= floor`` (and ``M_ji >= floor`` when ``symmetric``).

    Used as a support mask to keep perturbations off poorly resolved
    transitions, which otherwise cap the feasible ``eps`` near zero.
    Entropy-production problems need the symmetric variant.
    """
    a = as_stochastic(m).entries
    keep = a >= floor
    return keep & keep.T if symmetric else keep


def feasible_support_search(solve, m, eps: float, floors=None, symmetric: bool = False):
    """Smallest probability floor whose optimum keeps ``M + eps P`` nonnegative.

    ``solve(mask)`` must return an :class:`OptimizationResult` for the given
    support mask (``None`` meaning the full support of ``M``). Floors are
    tried in increasing order, starting with the full support; the first
    result with ``feasible_epsilon >= eps`` is returned together with the
    floor used (0.0 for the full support).

    Raises
    ------
    InfeasibleEpsilon
        If no floor in the list yields a feasible perturbation.
    """
    m = as_stochastic(m)
    res = solve(None)
    if res.feasible_epsilon >= eps:
        return res, 0.0
    if floors is None:
        floors = np.geomspace(1e-6, 0.2, 64)
    for floor in floors:
        mask = probability_floor_mask(m, floor, symmetric)
        try:
            res = solve(mask)
        except (DegenerateObjective, EmptyFeasibleSpace, SingularMultiplierSystem):
            break
        if res.feasible_epsilon >= eps:
            res.extras["support_floor"] = float(floor)
            return res, float(floor)
    raise InfeasibleEpsilon(f"no support floor makes eps={eps} feasible")


def measure_diag(u) -> np.ndarray:
    """``diag(u)`` used by the reversal ``D M^T D^{-1}``."""
    return np.diag(np.asarray(u, dtype=float))


def additive_reversibilization(m, u, normalize: bool = False) -> np.ndarray:
    """``P_r = (M + D M^T D^{-1}) / 2 - M`` with ``D = diag(u)``.

    ``M + P_r`` satisfies detailed balance and keeps ``u`` stationary. With
    ``normalize`` the result is scaled to unit Frobenius norm; an already
    reversible ``M`` yields the zero matrix either way.
    """
    a = np.asarray(as_stochastic(m).entries)
    u = np.asarray(u, dtype=float)
    reversal = (u[:, None] * a.T) / u[None, :]
    p = 0.5 * (reversal - a)
    if normalize:
        norm = np.linalg.norm(p)
        if norm < 1e-14:
            return np.zeros_like(p)
        p = p / norm
    return p
