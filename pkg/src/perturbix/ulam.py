"""Ulam discretisation of sampled dynamics on regular box partitions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .errors import DomainError, EmptyEstimate, ParameterError
from .markov_core import StochasticMatrix

__all__ = [
    "OUT_OF_DOMAIN",
    "BoxPartition",
    "Trajectory",
    "UlamEstimate",
    "partition_index",
    "estimate_transition_matrix",
    "coarse_grain_observable",
    "marginal",
]

OUT_OF_DOMAIN = -1


class BoxPartition:
    """Regular grid of ``prod(counts)`` boxes on a 1 to 3 dimensional box.

    Boxes are half-open ``[lo, hi)`` along each axis except the last one,
    which also contains the upper edge. Box indices compose the per-axis
    indices in row-major (C) order, so the last axis varies fastest.
    """

    def __init__(self, bounds, counts):
        bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        counts = np.atleast_1d(np.asarray(counts, dtype=int))
        if bounds.shape != (counts.size, 2) or not 1 <= counts.size <= 3:
            raise ParameterError("need one (lo, hi) pair and one count per axis, 1 to 3 axes")
        if np.any(bounds[:, 0] >= bounds[:, 1]) or np.any(counts < 1):
            raise ParameterError("require lo < hi and counts >= 1 on every axis")
        self.bounds = bounds
        self.counts = counts
        self.dims = counts.size
        self.n = int(np.prod(counts))
        self.widths = (bounds[:, 1] - bounds[:, 0]) / counts

    def __repr__(self):
        return f"BoxPartition(bounds={self.bounds.tolist()}, counts={self.counts.tolist()})"

    def axis_indices(self, x) -> np.ndarray:
        """Per-axis bin of each point, ``-1`` when outside; shape ``(k, dims)``."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dims)
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        with np.errstate(invalid="ignore"):
            b = np.floor((x - lo) / (hi - lo) * self.counts)
            b = np.where(x == hi, self.counts - 1, b)
            # guard against rounding pushing an interior point onto the edge bin
            b = np.minimum(b, self.counts - 1)
            ok = (x >= lo) & (x <= hi)
        return np.where(ok, b, -1).astype(np.int64)

    def index(self, x) -> np.ndarray:
        ax = self.axis_indices(x)
        flat = np.ravel_multi_index(tuple(np.maximum(ax, 0).T), tuple(self.counts))
        return np.where(np.all(ax >= 0, axis=1), flat, OUT_OF_DOMAIN)

    def unravel(self, boxes) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(boxes, dtype=np.int64), tuple(self.counts)), axis=-1)

    def centers(self, boxes=None) -> np.ndarray:
        """Box centres, shape ``(len(boxes), dims)``."""
        if boxes is None:
            boxes = np.arange(self.n)
        return self.bounds[:, 0] + (self.unravel(boxes) + 0.5) * self.widths


def partition_index(p: BoxPartition, x):
    """Box containing ``x`` (a single point or an array of points).

    Returns ``OUT_OF_DOMAIN`` for points outside the partition.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and p.dims > 1 and x.size == p.dims)
    out = p.index(x)
    return int(out[0]) if single else out


@dataclass
class Trajectory:
    points: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if not np.all(np.isfinite(pts)):
            raise DomainError("trajectory has non-finite coordinates")
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        self.points = pts

    @property
    def dims(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


@dataclass
class UlamEstimate:
    """Result of :func:`estimate_transition_matrix`.

    ``occupancy`` counts, for every box of the partition, the samples that
    start a valid transition pair there. ``retained_index[k]`` is the
    partition box of chain state ``k``.
    """

    matrix: StochasticMatrix
    retained_index: np.ndarray
    occupancy: np.ndarray
    tau: float
    partition: BoxPartition
    counts: scipy.sparse.csr_array | None = None

    @property
    def retained_occupancy(self) -> np.ndarray:
        return self.occupancy[self.retained_index]

    def centers(self) -> np.ndarray:
        return self.partition.centers(self.retained_index)


def _lag(tau, dt) -> int:
    ratio = tau / dt
    lag = int(round(ratio))
    if lag < 1 or abs(ratio - lag) > 1e-9 * max(1.0, ratio):
        raise ParameterError(f"tau={tau} is not a positive integer multiple of dt={dt}")
    return lag


def _transition_counts(idx, lag, n):
    src, dst = idx[:-lag], idx[lag:]
    ok = (src >= 0) & (dst >= 0)
    src, dst = src[ok], dst[ok]
    c = scipy.sparse.coo_array((np.ones(src.size), (dst, src)), shape=(n, n)).tocsr()
    c.sum_duplicates()
    return c


def estimate_transition_matrix(
    traj: Trajectory,
    p: BoxPartition,
    tau: float,
    min_occupancy: int = 5,
    symmetric_mask: bool = False,
    strongly_connected: bool = True,
    min_count: int = 1,
) -> UlamEstimate:
    """Count box-to-box transitions at lag ``tau`` and normalise columns.

    ``M_ij`` is the fraction of samples in box ``j`` whose successor
    ``tau / dt`` steps later lies in box ``i``. Pairs with either point
    outside the partition are discarded. Boxes that are left with fewer
    than ``min_occupancy`` starting samples are removed, and (by default)
    the chain is restricted to its largest strongly connected component
    so that it has a unique positive stationary vector. Transitions into
    removed boxes are discarded and columns renormalised. With
    ``symmetric_mask`` transitions whose reverse was never observed are
    dropped as well, as entropy production requires. Transitions observed
    fewer than ``min_count`` times are discarded before normalisation.
    """
    if traj.dims != p.dims:
        raise ParameterError(f"trajectory has {traj.dims} coordinates, partition {p.dims}")
    lag = _lag(tau, traj.dt)
    if len(traj) <= lag:
        raise ParameterError("trajectory shorter than the transition lag")
    idx = p.index(traj.points)
    counts = _transition_counts(idx, lag, p.n)
    occupancy = np.asarray(counts.sum(axis=0)).ravel()
    if min_count > 1:
        counts = counts.multiply(counts >= min_count).tocsr()
    keep = np.flatnonzero(occupancy >= max(min_occupancy, 1))
    while keep.size:
        sub = counts[keep][:, keep]
        if symmetric_mask:
            sub = sub.multiply((sub > 0).multiply((sub > 0).T)).tocsr()
        col = np.asarray(sub.sum(axis=0)).ravel()
        ok = col > 0
        if strongly_connected and np.all(ok):
            ncomp, labels = scipy.sparse.csgraph.connected_components(sub, directed=True, connection="strong")
            if ncomp > 1:
                ok = labels == np.argmax(np.bincount(labels))
        if np.all(ok):
            break
        keep = keep[ok]
    if keep.size == 0:
        raise EmptyEstimate("no box retains enough transitions")
    sub = sub.toarray()
    m = StochasticMatrix(sub / sub.sum(axis=0))
    return UlamEstimate(m, keep, occupancy, float(tau), p, scipy.sparse.csr_array(sub))


def coarse_grain_observable(fn, p: BoxPartition, retained_index=None) -> np.ndarray:
    """``fn`` evaluated at retained box centres; called as ``fn(x)``, ``fn(x, y)`` ..."""
    c = p.centers(retained_index)
    vals = np.asarray(fn(*c.T), dtype=float)
    return np.broadcast_to(vals, (c.shape[0],)).copy()


def marginal(u, p: BoxPartition, retained_index=None, axis: int = 0) -> np.ndarray:
    """Sum ``u`` over boxes sharing the same bin along ``axis``.

    Works for any vector on retained boxes; a probability vector maps to a
    probability vector on ``p.counts[axis]`` bins.
    """
    if not 0 <= axis < p.dims:
        raise ParameterError(f"axis {axis} out of range for a {p.dims}-d partition")
    if retained_index is None:
        retained_index = np.arange(p.n)
    bins = p.unravel(retained_index)[:, axis]
    return np.bincount(bins, weights=np.asarray(u, dtype=float), minlength=p.counts[axis])


def marginal_bin_centers(p: BoxPartition, axis: int = 0) -> np.ndarray:
    lo = p.bounds[axis, 0]
    return lo + (np.arange(p.counts[axis]) + 0.5) * p.widths[axis]
