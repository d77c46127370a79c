"""Elimination of dependent variables and the reduced feasible polyhedron."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..qp import EmptyPolytopeError, chebyshev_center
from ..reformulations import polyhedron_offsets
from ..vpp import CompactProblem, _x_array
from .aggregate import AggregatedFeatures

# candidate interior points closer than this to a face are rejected
MIN_MARGIN = 1e-6


class EmptyReducedSetError(ValueError):
    """The p-tightened feasible set has no interior for this input."""


@dataclass(frozen=True)
class EqualityPartition:
    """Split of ``u`` into dependent and independent coordinates.

    ``u[dep_idx] = map_u @ u[ind_idx] + map_x @ x`` satisfies the equality rows
    for every choice of the independent block.
    """

    dep_idx: np.ndarray
    ind_idx: np.ndarray
    map_u: np.ndarray
    map_x: np.ndarray

    @property
    def n_u(self) -> int:
        return self.dep_idx.size + self.ind_idx.size

    def complete(self, u_ind, x) -> np.ndarray:
        """Full ``u`` in original variable order."""
        u_ind = np.asarray(u_ind, dtype=float)
        x = _x_array(x)
        u = np.empty(u_ind.shape[:-1] + (self.n_u,))
        u[..., self.ind_idx] = u_ind
        u[..., self.dep_idx] = u_ind @ self.map_u.T + x @ self.map_x.T
        return u

    def lift(self) -> np.ndarray:
        """Matrix ``M`` with ``u = M u_ind + (terms in x)``."""
        lift = np.zeros((self.n_u, self.ind_idx.size))
        lift[self.ind_idx, np.arange(self.ind_idx.size)] = 1.0
        lift[self.dep_idx] = self.map_u
        return lift

    def pullback(self, grad_u) -> np.ndarray:
        """Gradient w.r.t. ``u_ind`` given a gradient w.r.t. the full ``u``."""
        grad_u = np.asarray(grad_u, dtype=float)
        return grad_u[..., self.ind_idx] + grad_u[..., self.dep_idx] @ self.map_u


def equality_partition(cp: CompactProblem, tol: float = 1e-10) -> EqualityPartition:
    """Choose dependent columns by Gaussian elimination with largest-|pivot| search.

    Ties go to the lowest column index.  Raises ``ValueError`` if the equality
    matrix is rank deficient.
    """
    a_eq = np.array(cp.a_eq, dtype=float)
    m, n = a_eq.shape
    if m > n:
        raise ValueError(f"more equality rows ({m}) than variables ({n})")
    work = a_eq.copy()
    scale = max(np.max(np.abs(a_eq), initial=0.0), 1.0)
    dep = []
    for row in range(m):
        cand = np.abs(work[row])
        cand[dep] = -1.0
        col = int(np.argmax(cand))
        if cand[col] <= tol * scale:
            raise ValueError("equality rows are rank deficient")
        dep.append(col)
        for other in range(row + 1, m):
            work[other] -= work[other, col] / work[row, col] * work[row]
    dep_idx = np.array(sorted(dep), dtype=int)
    ind_idx = np.setdiff1d(np.arange(n), dep_idx)
    a_dep = a_eq[:, dep_idx]
    map_u = -np.linalg.solve(a_dep, a_eq[:, ind_idx])
    map_x = -np.linalg.solve(a_dep, np.asarray(cp.b_eq, dtype=float))
    return EqualityPartition(dep_idx, ind_idx, map_u, map_x)


@dataclass(frozen=True)
class ReducedPolyhedron:
    """``{u_ind : a_mat u_ind <= b_vec}`` with a strictly interior point."""

    a_mat: np.ndarray
    b_vec: np.ndarray
    interior: np.ndarray
    margins: np.ndarray


def reduced_rows(cp: CompactProblem, x, offsets, part: EqualityPartition):
    """Rows ``(A M, b(x))`` of the reduced set for given per-row offsets."""
    x = _x_array(x)
    a_mat = cp.a_ineq @ part.lift()
    # value of the rows at u_ind = 0
    u_zero = part.complete(np.zeros(part.ind_idx.size), x)
    b_vec = -(cp.a_ineq @ u_zero + cp.b_ineq_mat @ x + offsets + cp.b_ineq_vec)
    return a_mat, b_vec


def _single_variable_bounds(a_ineq, b_full):
    """Per-variable box implied by rows with exactly one nonzero entry."""
    n = a_ineq.shape[1]
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    nnz = np.count_nonzero(a_ineq, axis=1)
    for r in np.flatnonzero(nnz == 1):
        j = int(np.flatnonzero(a_ineq[r])[0])
        coef = a_ineq[r, j]
        bound = b_full[r] / coef
        if coef > 0:
            upper[j] = min(upper[j], bound)
        else:
            lower[j] = max(lower[j], bound)
    return lower, upper


def midpoint_candidate(cp: CompactProblem, x, offsets, part: EqualityPartition):
    """Cheap interior guess: box midpoint moved along the box toward the equality.

    Every variable shifts by the same fraction ``t`` of its half range, in the
    direction that changes the (single) equality row; ``|t| < 1`` keeps each
    variable strictly inside its own bounds.  Returns None when the guess is
    not applicable.
    """
    x = _x_array(x)
    if cp.a_eq.shape[0] != 1:
        return None
    b_full = -(cp.b_ineq_mat @ x + offsets + cp.b_ineq_vec)
    lower, upper = _single_variable_bounds(cp.a_ineq, b_full)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))) or np.any(upper <= lower):
        return None
    mid = 0.5 * (lower + upper)
    half = 0.5 * (upper - lower)
    a_eq = cp.a_eq[0]
    step = np.sign(a_eq) * half
    slope = a_eq @ step
    if slope == 0.0:
        return None
    t = -(a_eq @ mid + cp.b_eq[0] @ x) / slope
    if not abs(t) < 1.0:
        return None
    return (mid + t * step)[part.ind_idx]


def reduce_polyhedron(cp: CompactProblem, x, feats: AggregatedFeatures, p: float,
                      part: EqualityPartition) -> ReducedPolyhedron:
    """Reduced p-tightened set over the independent variables with an interior point.

    Raises
    ------
    EmptyReducedSetError
        If no strictly interior point exists (Chebyshev radius <= 1e-9).
    """
    offsets = polyhedron_offsets(feats.phi_avg, feats.phi_max, p)
    a_mat, b_vec = reduced_rows(cp, x, offsets, part)
    interior = midpoint_candidate(cp, x, offsets, part)
    if interior is not None:
        margins = b_vec - a_mat @ interior
        if np.min(margins) <= MIN_MARGIN:
            interior = None
    if interior is None:
        try:
            interior, _ = chebyshev_center(a_mat, b_vec)
        except EmptyPolytopeError as exc:
            raise EmptyReducedSetError(f"reduced set empty at p={p}") from exc
        margins = b_vec - a_mat @ interior
        if np.min(margins) <= 0.0:
            raise EmptyReducedSetError(f"reduced set empty at p={p}")
    return ReducedPolyhedron(a_mat, b_vec, interior, margins)
