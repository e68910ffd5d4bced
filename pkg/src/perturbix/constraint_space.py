"""Vectorised constraints on perturbation matrices and the projection optimizer.

``vec`` stacks columns: ``P[i, j]`` sits at position ``j * n + i``. With this
ordering the column-sum constraint is ``A vec(P) = 0`` with
``A = I ⊗ 1^T`` and measure preservation ``P u = 0`` is ``B vec(P) = 0``
with ``B = (I ⊗ u^T) K``, where ``K`` is the commutation permutation
``K vec(P) = vec(P^T)``.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import (
    EmptyFeasibleSpace,
    LengthMismatch,
    NonMixing,
    ParameterError,
    ZeroProjection,
)
from .markov_core import StochasticMatrix, as_stochastic, invariant_vector, max_feasible_epsilon
from .results import LinearCoefficients, OptimizationResult

__all__ = [
    "vec",
    "unvec",
    "CommutationMatrix",
    "commutation_apply",
    "VectorizedConstraints",
    "FeasibleBasis",
    "feasible_basis",
    "project_optimize",
    "random_mixing_matrix",
    "ensemble_compare",
    "RANK_RTOL",
]

RANK_RTOL = 1e-10
DENSE_COMMUTATION_MAX_N = 64


def vec(p) -> np.ndarray:
    return np.asarray(p).ravel(order="F")


def unvec(v, n: int) -> np.ndarray:
    return np.asarray(v).reshape((n, n), order="F")


class CommutationMatrix:
    """The ``n^2 x n^2`` permutation with ``K vec(P) = vec(P^T)``.

    Stored as an index permutation; :meth:`to_dense` is limited to
    ``n <= 64``.
    """

    def __init__(self, n: int):
        self.n = int(n)
        k = np.arange(self.n * self.n)
        # (K v)[i n + j] = v[j n + i]
        self.perm = (k % self.n) * self.n + k // self.n

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[0] != self.n * self.n:
            raise LengthMismatch(f"expected length {self.n * self.n}, got {v.shape[0]}")
        return v[self.perm]

    def to_sparse(self) -> scipy.sparse.csr_array:
        nn = self.n * self.n
        return scipy.sparse.csr_array((np.ones(nn), (np.arange(nn), self.perm)), shape=(nn, nn))

    def to_dense(self) -> np.ndarray:
        if self.n > DENSE_COMMUTATION_MAX_N:
            raise ParameterError("dense commutation matrix only built for n <= 64")
        return self.to_sparse().toarray()


def commutation_apply(k: CommutationMatrix, vec_p) -> np.ndarray:
    return k.apply(vec_p)


def _support(m, mask=None):
    rows, cols = m.support
    if mask is not None:
        on = np.asarray(mask, dtype=bool)[rows, cols]
        rows, cols = rows[on], cols[on]
    return rows, cols


class VectorizedConstraints:
    """Constraint matrices ``A``, ``B``, ``S = [A; B]`` and their support restrictions.

    Full matrices are sparse ``n x n^2``; the reduced ones keep only the
    columns listed in ``support_index`` (the positive entries of ``M``).
    """

    def __init__(self, m, u, mask=None):
        self.m = as_stochastic(m)
        self.u = np.asarray(u, dtype=float)
        self.n = self.m.n
        self.rows, self.cols = _support(self.m, mask)
        self.support_index = self.cols * self.n + self.rows

    @cached_property
    def a(self) -> scipy.sparse.csr_array:
        return scipy.sparse.kron(
            scipy.sparse.eye_array(self.n), np.ones((1, self.n)), format="csr"
        )

    @cached_property
    def b(self) -> scipy.sparse.csr_array:
        ikron = scipy.sparse.kron(scipy.sparse.eye_array(self.n), self.u[None, :], format="csr")
        return (ikron @ CommutationMatrix(self.n).to_sparse()).tocsr()

    @cached_property
    def s(self) -> scipy.sparse.csr_array:
        return scipy.sparse.vstack([self.a, self.b], format="csr")

    @cached_property
    def a_r(self) -> scipy.sparse.csr_array:
        rows, cols = self.rows, self.cols
        return scipy.sparse.csr_array(
            (np.ones(rows.size), (cols, np.arange(rows.size))), shape=(self.n, rows.size)
        )

    @cached_property
    def b_r(self) -> scipy.sparse.csr_array:
        rows, cols = self.rows, self.cols
        return scipy.sparse.csr_array(
            (self.u[cols], (rows, np.arange(rows.size))), shape=(self.n, rows.size)
        )

    @cached_property
    def s_r(self) -> scipy.sparse.csr_array:
        return scipy.sparse.vstack([self.a_r, self.b_r], format="csr")


@dataclass
class FeasibleBasis:
    """Orthonormal basis (columns of ``vectors``) of feasible support vectors.

    Coordinates follow ``rows, cols``: the support of ``M`` (optionally
    intersected with a mask) in vec order.
    """

    vectors: np.ndarray
    m: StochasticMatrix
    rows: np.ndarray
    cols: np.ndarray
    rank: int
    measure_preserving: bool

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def support_index(self) -> np.ndarray:
        return self.cols * self.m.n + self.rows

    def assemble(self, p_vals) -> np.ndarray:
        p = np.zeros(self.m.shape)
        p[self.rows, self.cols] = p_vals
        return p

    def reduce(self, mat) -> np.ndarray:
        return np.asarray(mat)[self.rows, self.cols]


def feasible_basis(m, u=None, include_measure_preservation: bool = True, mask=None) -> FeasibleBasis:
    """Orthonormal basis of the null space of ``S_r`` (or ``A_r``).

    Right singular vectors whose singular value is at most
    ``RANK_RTOL * s_max`` span the null space. ``mask`` further restricts
    the support.

    Raises
    ------
    EmptyFeasibleSpace
        When the null space is trivial.
    """
    m = as_stochastic(m)
    if u is None:
        u = invariant_vector(m)
    vc = VectorizedConstraints(m, u, mask)
    mat = (vc.s_r if include_measure_preservation else vc.a_r).toarray()
    _, s, vt = scipy.linalg.svd(mat, full_matrices=True)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size else 0
    basis = vt[rank:].T
    if basis.shape[1] == 0:
        raise EmptyFeasibleSpace("the constraint matrix has a trivial null space on the support")
    return FeasibleBasis(basis, m, vc.rows, vc.cols, rank, include_measure_preservation)


def project_optimize(coeffs: LinearCoefficients, basis: FeasibleBasis, direction: str = "max") -> OptimizationResult:
    """Optimise ``sum C_ij P_ij`` by orthogonal projection onto the feasible span."""
    if direction not in ("max", "min"):
        raise ValueError(f"direction must be 'max' or 'min', got {direction!r}")
    c = basis.reduce(coeffs.c)
    proj = basis.vectors @ (basis.vectors.T @ c)
    norm = np.linalg.norm(proj)
    if norm <= 1e-12 * max(np.linalg.norm(c), np.finfo(float).tiny):
        raise ZeroProjection("coefficients are orthogonal to the feasible subspace")
    sign = 1.0 if direction == "max" else -1.0
    p = basis.assemble(sign * proj / norm)
    return OptimizationResult(
        p=p,
        objective_gradient=coeffs.value(p),
        method_tag="projection",
        feasible_epsilon=max_feasible_epsilon(basis.m, p),
    )


def random_mixing_matrix(n: int, sparsity: float, dominance: float, rng: np.random.Generator) -> np.ndarray:
    """One random draw for the comparison ensemble (may be non-mixing).

    Off-diagonal entries are uniform on [0, 1] and zeroed with probability
    ``sparsity``; one-sided transitions are then dropped so the mask is
    symmetric; each diagonal entry is set to ``dominance`` times the sum of
    the off-diagonal entries in its column; columns are normalised.
    """
    a = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) >= sparsity)
    np.fill_diagonal(a, 0.0)
    a *= (a > 0) & (a.T > 0)
    off = a.sum(axis=0)
    a[np.diag_indices(n)] = dominance * off
    s = a.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return a / s


def _ensemble_draw(args):
    from .functionals import entropy_production
    from .markov_core import spectral_gap
    from .optimize import entropy_production_coefficients, minimize_measure_preserving

    n, sparsity, dominance, eps, seed_seq, max_tries = args
    rng = np.random.default_rng(seed_seq)
    for _ in range(max_tries):
        a = random_mixing_matrix(n, sparsity, dominance, rng)
        if not np.all(np.isfinite(a)) or np.any(np.diag(a) >= 1.0):
            continue
        m = StochasticMatrix(a)
        gap = spectral_gap(m)
        if gap < 1e-6:
            continue
        try:
            u = invariant_vector(m)
        except NonMixing:
            continue
        s0 = entropy_production(m, u)
        if s0 > 1e-12:
            break
    else:
        return None
    coeffs = entropy_production_coefficients(m, u)
    p1 = minimize_measure_preserving(m, u, coeffs, "min").p
    p2 = project_optimize(coeffs, feasible_basis(m, u, True), "min").p
    changes = []
    for p in (p1, p2):
        if max_feasible_epsilon(m, p) < eps:
            changes.append(np.nan)
            continue
        mp = StochasticMatrix(np.clip(m.entries + eps * p, 0.0, None))
        changes.append((entropy_production(mp, u) - s0) / s0)
    diff = np.linalg.norm(p1 - p2) / np.linalg.norm(p1)
    return gap, changes[0], changes[1], diff


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("PERTURBIX_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _histogram(values, bins):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    counts, edges = np.histogram(values, bins=bins)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def ensemble_compare(
    count: int,
    n: int,
    sparsity: float,
    diag_dominance: float,
    eps: float,
    seed: int,
    workers: int | None = None,
    bins: int = 30,
    max_tries: int = 1000,
) -> dict:
    """Compare Lagrange and projection minimisers of entropy production.

    Draws ``count`` random mixing matrices (non-mixing draws are replaced;
    a draw counts as non-mixing when a diagonal entry is one or the spectral
    gap is below 1e-6; reversible draws, whose entropy production vanishes,
    are replaced too), solves both problems and reports the relative change
    ``(s(M + eps P) - s(M)) / s(M)`` per method, the relative Frobenius
    difference between the two perturbations and spectral-gap statistics.
    Draw ``k`` uses the ``k``-th child of ``SeedSequence(seed)``, so the
    report does not depend on the number of workers.
    """
    if count < 1 or n < 2:
        raise ParameterError("count must be >= 1 and n >= 2")
    if not 0.0 < sparsity < 1.0:
        raise ParameterError("sparsity must lie in (0, 1)")
    if not (np.isfinite(diag_dominance) and diag_dominance >= 0):
        raise ParameterError("diag_dominance must be finite and nonnegative")
    if eps <= 0:
        raise ParameterError("eps must be positive")
    children = np.random.SeedSequence(seed).spawn(count)
    jobs = [(n, sparsity, diag_dominance, eps, c, max_tries) for c in children]
    nworkers = min(_worker_count(workers), count)
    if nworkers > 1:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            out = list(pool.map(_ensemble_draw, jobs, chunksize=max(1, count // (4 * nworkers))))
    else:
        out = [_ensemble_draw(j) for j in jobs]
    if any(o is None for o in out):
        raise ParameterError(
            f"could not draw a mixing matrix in {max_tries} tries; sparsity/dominance infeasible"
        )
    gaps, ch1, ch2, diffs = (np.array(x, dtype=float) for x in zip(*out))
    with np.errstate(divide="ignore"):
        log_diff = np.log10(np.maximum(diffs, 1e-300))
    return {
        "count": int(count),
        "n": int(n),
        "sparsity": float(sparsity),
        "dominance": float(diag_dominance),
        "eps": float(eps),
        "seed": int(seed),
        "spectral_gap_mean": float(gaps.mean()),
        "spectral_gap_std": float(gaps.std()),
        "rel_change_hist": {
            "lagrange": _histogram(ch1, bins),
            "projection": _histogram(ch2, bins),
        },
        "method_diff_hist": {"log10": True, **_histogram(log_diff, bins)},
        "fraction_decreased": {
            "lagrange": float(np.mean(ch1 < 0)),
            "projection": float(np.mean(ch2 < 0)),
        },
        "median_method_diff": float(np.median(diffs)),
        "rel_change": {"lagrange": ch1.tolist(), "projection": ch2.tolist()},
        "method_diff": diffs.tolist(),
        "spectral_gaps": gaps.tolist(),
    }
