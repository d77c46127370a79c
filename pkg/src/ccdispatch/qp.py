"""Convex quadratic programming by operator splitting (ADMM).

Solves

    minimize    1/2 u' P u + q' u
    subject to  G u <= h
                E u  = d

Equalities are carried as two-sided rows ``d <= E u <= d`` so every constraint
goes through the same projection.  The iteration follows the OSQP splitting:
one factorization of ``P + sigma I + A' diag(rho) A`` per penalty update,
Ruiz equilibration, over-relaxation and residual balancing of ``rho``.  Once
the residuals are moderately small an active-set polish solves the KKT system
on the guessed active rows, which recovers the solution to machine precision
whenever the guess (after a few add/drop corrections) is right.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

_SETTLED_BACKOFF = 1.5

__all__ = [
    "QpProblem",
    "QpSettings",
    "QpSolution",
    "QpStatus",
    "solve_qp",
    "chebyshev_center",
    "EmptyPolytopeError",
    "dump_qp",
    "load_qp",
]


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"


class EmptyPolytopeError(ValueError):
    """Raised when a polytope has no strictly interior point."""


@dataclass(frozen=True)
class QpProblem:
    """Data of ``min 1/2 u'Pu + q'u  s.t.  G u <= h, E u = d``.

    ``g_mat`` and ``e_mat`` may be dense arrays or scipy sparse matrices.
    Missing constraint blocks are represented by zero-row matrices.
    """

    p_mat: np.ndarray
    q_vec: np.ndarray
    g_mat: np.ndarray | sp.spmatrix
    h_vec: np.ndarray
    e_mat: np.ndarray | sp.spmatrix | None = None
    d_vec: np.ndarray | None = None

    def __post_init__(self):
        n = self.q_vec.shape[0]
        if self.p_mat.shape != (n, n):
            raise ValueError(f"p_mat shape {self.p_mat.shape} does not match q of length {n}")
        if np.max(np.abs(self.p_mat - self.p_mat.T), initial=0.0) > 1e-12:
            raise ValueError("p_mat must be symmetric")
        if np.any(np.diag(self.p_mat) < 0):
            raise ValueError("p_mat has a negative diagonal entry")
        if self.g_mat.shape != (self.h_vec.shape[0], n):
            raise ValueError(f"g_mat shape {self.g_mat.shape} inconsistent with h ({self.h_vec.shape[0]}) and n={n}")
        if self.e_mat is None:
            object.__setattr__(self, "e_mat", np.zeros((0, n)))
            object.__setattr__(self, "d_vec", np.zeros(0))
        if self.e_mat.shape != (self.d_vec.shape[0], n):
            raise ValueError(f"e_mat shape {self.e_mat.shape} inconsistent with d ({self.d_vec.shape[0]}) and n={n}")

    @property
    def n(self) -> int:
        return self.q_vec.shape[0]

    def objective(self, u: np.ndarray) -> float:
        return float(0.5 * u @ self.p_mat @ u + self.q_vec @ u)


@dataclass
class QpSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_prim_inf: float = 1e-8
    eps_dual_inf: float = 1e-8
    max_iter: int = 50000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 1000
    adaptive_rho_tolerance: float = 5.0
    check_interval: int = 25
    scaling_iter: int = 10
    polish: bool = True
    polish_max_rounds: int = 60
    polish_delta: float = 1e-10


@dataclass
class QpSolution:
    u: np.ndarray
    objective: float
    status: QpStatus
    iterations: int
    primal_res: float
    dual_res: float
    y: np.ndarray = field(repr=False, default=None)
    polished: bool = False


def _stack_constraints(qp: QpProblem):
    a_mat = sp.vstack([sp.csr_matrix(qp.g_mat), sp.csr_matrix(qp.e_mat)], format="csr")
    lower = np.concatenate([np.full(qp.h_vec.shape[0], -np.inf), qp.d_vec])
    upper = np.concatenate([qp.h_vec, qp.d_vec])
    return a_mat, lower, upper


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v), initial=0.0))


class _Residuals:
    """Unscaled KKT residuals and their tolerances for (x, z, y)."""

    def __init__(self, p_mat, q_vec, a_mat, x, z, y, settings):
        ax = a_mat @ x
        px = p_mat @ x
        aty = a_mat.T @ y
        self.primal = _inf_norm(ax - z)
        self.dual = _inf_norm(px + q_vec + aty)
        self.primal_scale = max(_inf_norm(ax), _inf_norm(z))
        self.dual_scale = max(_inf_norm(px), _inf_norm(aty), _inf_norm(q_vec))
        self.eps_primal = settings.eps_abs + settings.eps_rel * self.primal_scale
        self.eps_dual = settings.eps_abs + settings.eps_rel * self.dual_scale

    @property
    def converged(self) -> bool:
        return self.primal <= self.eps_primal and self.dual <= self.eps_dual


def _ruiz_equilibrate(p_mat, q_vec, a_mat, n_iter):
    """Return scaled data and the (D, E, c) scaling so that x = D x_s."""
    n = p_mat.shape[0]
    m = a_mat.shape[0]
    d_scale = np.ones(n)
    e_scale = np.ones(m)
    p_s = p_mat.copy()
    q_s = q_vec.copy()
    a_s = a_mat.copy()
    for _ in range(n_iter):
        col_p = np.max(np.abs(p_s), axis=0) if n else np.zeros(0)
        col_a = abs(a_s).max(axis=0).toarray().ravel() if m else np.zeros(n)
        col = np.maximum(col_p, col_a)
        row_a = abs(a_s).max(axis=1).toarray().ravel() if m else np.zeros(0)
        dd = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        dd[col == 0] = 1.0
        de = 1.0 / np.sqrt(np.clip(row_a, 1e-4, 1e4))
        de[row_a == 0] = 1.0
        p_s = dd[:, None] * p_s * dd[None, :]
        q_s = dd * q_s
        a_s = sp.diags(de) @ a_s @ sp.diags(dd)
        d_scale *= dd
        e_scale *= de
    mean_col = float(np.mean(np.max(np.abs(p_s), axis=0))) if n else 0.0
    cost = max(mean_col, _inf_norm(q_s))
    c_scale = 1.0 / np.clip(cost, 1e-4, 1e4) if cost > 0 else 1.0
    return p_s * c_scale, q_s * c_scale, a_s.tocsr(), d_scale, e_scale, c_scale


def _active_guess(lower, upper, z, y, is_eq):
    """+1 upper-active, -1 lower-active, 0 free."""
    side = np.zeros(lower.shape[0], dtype=np.int8)
    side[(upper - z < y) & np.isfinite(upper)] = 1
    side[(z - lower < -y) & np.isfinite(lower)] = -1
    side[is_eq & (side == 0)] = 1
    return side


def _dependent_rows(a_dense, order, tol=1e-9):
    """Rows of ``order`` that are linear combinations of earlier ones."""
    n = a_dense.shape[1]
    basis = np.zeros((min(n, len(order)), n))
    rank = 0
    dropped = []
    for row in order:
        v = a_dense[row].astype(float)
        scale = np.linalg.norm(v)
        if scale == 0.0 or rank == n:
            dropped.append(row)
            continue
        for _ in range(2):  # re-orthogonalize once for stability
            v = v - basis[:rank].T @ (basis[:rank] @ v)
        norm = np.linalg.norm(v)
        if norm <= tol * scale:
            dropped.append(row)
            continue
        basis[rank] = v / norm
        rank += 1
    return np.asarray(dropped, dtype=int)


def _polish(p_mat, q_vec, a_mat, lower, upper, z, y, settings, feas_tol):
    """Active-set refinement of an approximate ADMM solution.

    Starts from the active rows suggested by (z, y) and corrects the working
    set by adding the most violated inactive row or dropping the active row
    with the wrong-signed multiplier.  Returns (x, y) or None on failure.
    """
    n = p_mat.shape[0]
    m = a_mat.shape[0]
    a_dense = a_mat.toarray() if sp.issparse(a_mat) else np.asarray(a_mat)
    is_eq = np.isclose(lower, upper, rtol=0.0, atol=1e-12) & np.isfinite(lower)
    side = _active_guess(lower, upper, z, y, is_eq)
    # keep a linearly independent subset, strongest multipliers first, so the
    # KKT system stays well posed on degenerate vertices
    cand = np.flatnonzero(side)
    order = cand[np.lexsort((-np.abs(y[cand]), ~is_eq[cand]))]
    side[_dependent_rows(a_dense, order)] = 0
    delta = settings.polish_delta
    seen = set()
    for _ in range(settings.polish_max_rounds):
        key = side.tobytes()
        if key in seen:
            return None
        seen.add(key)
        work = np.flatnonzero(side)
        a_w = a_dense[work]
        rhs_w = np.where(side[work] > 0, upper[work], lower[work])
        k = work.size
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = p_mat
        kkt[:n, n:] = a_w.T
        kkt[n:, :n] = a_w
        reg = kkt.copy()
        reg[:n, :n] += delta * np.eye(n)
        reg[n:, n:] -= delta * np.eye(k)
        rhs = np.concatenate([-q_vec, rhs_w])
        try:
            lu = sla.lu_factor(reg, check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            return None
        sol = sla.lu_solve(lu, rhs)
        for _ in range(10):
            resid = rhs - kkt @ sol
            if _inf_norm(resid) <= 1e-14 * (1.0 + _inf_norm(rhs)):
                break
            sol = sol + sla.lu_solve(lu, resid)
        if not np.all(np.isfinite(sol)):
            return None
        x = sol[:n]
        y_w = sol[n:]
        ax = a_dense @ x
        viol = np.maximum(ax - upper, lower - ax)
        viol[work] = -np.inf
        worst = int(np.argmax(viol)) if m else -1
        if m and viol[worst] > feas_tol:
            side[worst] = 1 if ax[worst] > upper[worst] else -1
            continue
        # multiplier sign: upper-active needs y >= 0, lower-active y <= 0
        wrong = -y_w * side[work]
        wrong[is_eq[work]] = -np.inf
        if k and np.max(wrong) > 1e-9 * (1.0 + _inf_norm(y_w)):
            side[work[int(np.argmax(wrong))]] = 0
            continue
        y_full = np.zeros(m)
        y_full[work] = y_w
        return x, y_full
    return None


def solve_qp(qp: QpProblem, settings: QpSettings | None = None) -> QpSolution:
    """Solve a convex QP.

    Infeasibility is reported through ``status``; the solver never raises on
    infeasible data.  On ``max_iter`` the last iterate is returned.
    """
    settings = settings or QpSettings()
    n = qp.n
    p_mat = np.asarray(qp.p_mat, dtype=float)
    q_vec = np.asarray(qp.q_vec, dtype=float)
    a_mat, lower, upper = _stack_constraints(qp)
    m = a_mat.shape[0]

    if settings.scaling_iter > 0:
        p_s, q_s, a_s, d_scale, e_scale, c_scale = _ruiz_equilibrate(p_mat, q_vec, a_mat, settings.scaling_iter)
    else:
        p_s, q_s, a_s = p_mat, q_vec, a_mat
        d_scale, e_scale, c_scale = np.ones(n), np.ones(m), 1.0
    l_s = e_scale * lower
    u_s = e_scale * upper

    is_eq = np.isclose(lower, upper, rtol=0.0, atol=1e-12) & np.isfinite(lower)
    is_free = ~np.isfinite(lower) & ~np.isfinite(upper)

    def rho_vector(rho):
        vec = np.full(m, rho)
        vec[is_eq] = 1e3 * rho
        vec[is_free] = 1e-6
        return vec

    rho = settings.rho
    rho_vec = rho_vector(rho)
    sigma = settings.sigma
    a_s_t = a_s.T.tocsr()

    def factor(rvec):
        mat = p_s + sigma * np.eye(n) + (a_s_t @ sp.diags(rvec) @ a_s).toarray()
        return sla.cho_factor(mat, check_finite=False)

    chol = factor(rho_vec)
    x_s = np.zeros(n)
    z_s = np.zeros(m)
    y_s = np.zeros(m)
    alpha = settings.alpha
    feas_tol = 10.0 * np.finfo(float).eps * (1.0 + max(_inf_norm(np.where(np.isfinite(upper), upper, 0)),
                                                         _inf_norm(np.where(np.isfinite(lower), lower, 0))))
    feas_tol = max(feas_tol, 1e-12)

    def unscale(xs, zs, ys):
        return d_scale * xs, zs / e_scale, e_scale * ys / c_scale

    status = QpStatus.MAX_ITER
    next_polish_gap = 1e3
    prev_guess = tried_guess = None
    next_settled = 0
    res = None
    x_prev = x_s.copy()
    y_prev = y_s.copy()
    iteration = 0
    for iteration in range(1, settings.max_iter + 1):
        x_prev[:] = x_s
        y_prev[:] = y_s
        rhs = sigma * x_s - q_s + a_s_t @ (rho_vec * z_s - y_s)
        x_tilde = sla.cho_solve(chol, rhs, check_finite=False)
        z_tilde = a_s @ x_tilde
        x_s = alpha * x_tilde + (1.0 - alpha) * x_prev
        z_relax = alpha * z_tilde + (1.0 - alpha) * z_s
        z_new = np.clip(z_relax + y_s / rho_vec, l_s, u_s)
        y_s = y_s + rho_vec * (z_relax - z_new)
        z_s = z_new

        if iteration % settings.check_interval and iteration != settings.max_iter:
            continue
        x, z, y = unscale(x_s, z_s, y_s)
        res = _Residuals(p_mat, q_vec, a_mat, x, z, y, settings)
        if res.converged:
            status = QpStatus.OPTIMAL
            break
        # polish when residuals get small, or when the active-set guess has
        # settled between two checks (ADMM often identifies it long before
        # the residuals are small on degenerate problems)
        guess = _active_guess(lower, upper, z, y, is_eq) if settings.polish else None
        near = res.primal <= next_polish_gap * res.eps_primal and res.dual <= next_polish_gap * res.eps_dual
        settled = prev_guess is not None and iteration >= next_settled \
            and np.array_equal(guess, prev_guess) \
            and (tried_guess is None or not np.array_equal(guess, tried_guess))
        prev_guess = guess
        if settings.polish and (near or settled):
            polished = _polish(p_mat, q_vec, a_mat, lower, upper, z, y, settings, feas_tol)
            tried_guess = guess
            if settled:
                # back off geometrically so failed attempts stay a bounded share of the work
                next_settled = int(iteration * _SETTLED_BACKOFF)
            if near:
                next_polish_gap /= 10.0
            if polished is not None:
                sol = _finish_polished(qp, p_mat, q_vec, a_mat, lower, upper, polished, iteration, settings)
                if sol is not None:
                    return sol
        # infeasibility certificates
        dy = e_scale * (y_s - y_prev) / c_scale
        dy[(dy > 0) & ~np.isfinite(upper)] = 0.0
        dy[(dy < 0) & ~np.isfinite(lower)] = 0.0
        norm_dy = _inf_norm(dy)
        if norm_dy > 1e-30:
            support = np.sum(np.where(dy > 0, np.where(np.isfinite(upper), upper, 0.0) * dy, 0.0)) \
                + np.sum(np.where(dy < 0, np.where(np.isfinite(lower), lower, 0.0) * dy, 0.0))
            if _inf_norm(a_mat.T @ dy) <= settings.eps_prim_inf * norm_dy \
                    and support < -settings.eps_prim_inf * norm_dy:
                status = QpStatus.PRIMAL_INFEASIBLE
                break
        dx = d_scale * (x_s - x_prev)
        norm_dx = _inf_norm(dx)
        if norm_dx > 1e-30:
            eps = settings.eps_dual_inf * norm_dx
            adx = a_mat @ dx
            cone_ok = np.all(np.where(np.isfinite(upper), adx <= eps, True)) and \
                np.all(np.where(np.isfinite(lower), adx >= -eps, True))
            if cone_ok and _inf_norm(p_mat @ dx) <= eps and q_vec @ dx < -eps:
                status = QpStatus.DUAL_INFEASIBLE
                break
        if settings.adaptive_rho and iteration % settings.adaptive_rho_interval == 0:
            # balance residuals of the scaled problem, which is what rho acts on;
            # one update moves rho by at most 10x so early transients cannot
            # push it far from a workable value
            ax_s = a_s @ x_s
            px_s = p_s @ x_s
            aty_s = a_s_t @ y_s
            prim_ratio = _inf_norm(ax_s - z_s) / max(_inf_norm(ax_s), _inf_norm(z_s), 1e-30)
            dual_ratio = _inf_norm(px_s + q_s + aty_s) / max(_inf_norm(px_s), _inf_norm(aty_s),
                                                             _inf_norm(q_s), 1e-30)
            new_rho = rho * np.sqrt(prim_ratio / max(dual_ratio, 1e-30))
            new_rho = float(np.clip(new_rho, rho / 10.0, rho * 10.0))
            new_rho = float(np.clip(new_rho, 1e-6, 1e6))
            if new_rho > settings.adaptive_rho_tolerance * rho or new_rho < rho / settings.adaptive_rho_tolerance:
                rho = new_rho
                rho_vec = rho_vector(rho)
                chol = factor(rho_vec)

    x, z, y = unscale(x_s, z_s, y_s)
    if res is None:
        res = _Residuals(p_mat, q_vec, a_mat, x, z, y, settings)
    if status == QpStatus.OPTIMAL and settings.polish:
        polished = _polish(p_mat, q_vec, a_mat, lower, upper, z, y, settings, feas_tol)
        if polished is not None:
            sol = _finish_polished(qp, p_mat, q_vec, a_mat, lower, upper, polished, iteration, settings)
            if sol is not None:
                return sol
    return QpSolution(u=x, objective=qp.objective(x), status=status, iterations=iteration,
                      primal_res=res.primal, dual_res=res.dual, y=y)


def _finish_polished(qp, p_mat, q_vec, a_mat, lower, upper, polished, iteration, settings):
    x, y = polished
    ax = a_mat @ x
    z = np.clip(ax, lower, upper)
    res = _Residuals(p_mat, q_vec, a_mat, x, z, y, settings)
    if not res.converged:
        return None
    return QpSolution(u=x, objective=qp.objective(x), status=QpStatus.OPTIMAL, iterations=iteration,
                      primal_res=res.primal, dual_res=res.dual, y=y, polished=True)


def chebyshev_center(g_mat, h_vec, tol: float = 1e-9, settings: QpSettings | None = None):
    """Center and radius of the largest ball inside ``{u : G u <= h}``.

    Solved as ``max r  s.t.  G u + r ||G_i||_2 <= h`` with a 1e-8 quadratic
    regularization on ``u`` so the center is unique.

    Raises
    ------
    EmptyPolytopeError
        If the radius does not exceed ``tol`` or the program has no solution.
    ValueError
        If the polytope is unbounded.
    """
    g_mat = np.atleast_2d(np.asarray(g_mat, dtype=float))
    h_vec = np.asarray(h_vec, dtype=float)
    m, n = g_mat.shape
    norms = np.linalg.norm(g_mat, axis=1)
    p_mat = np.zeros((n + 1, n + 1))
    p_mat[:n, :n] = 1e-8 * np.eye(n)
    q_vec = np.zeros(n + 1)
    q_vec[n] = -1.0
    qp = QpProblem(p_mat, q_vec, np.hstack([g_mat, norms[:, None]]), h_vec)
    sol = solve_qp(qp, settings)
    if sol.status == QpStatus.DUAL_INFEASIBLE:
        raise ValueError("unbounded polytope: the inscribed ball has no finite maximum")
    if sol.status != QpStatus.OPTIMAL:
        raise EmptyPolytopeError(f"empty or degenerate polytope (solver status {sol.status.value})")
    radius = float(sol.u[n])
    if radius <= tol:
        raise EmptyPolytopeError(f"empty or degenerate polytope (radius {radius:.3e})")
    return sol.u[:n], radius


def _dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


def dump_qp(qp: QpProblem, path) -> None:
    """Write a QP as JSON with dense row-major matrices (debugging aid)."""
    payload = {
        "n": qp.n,
        "p_mat": _dense(qp.p_mat).tolist(),
        "q_vec": np.asarray(qp.q_vec).tolist(),
        "g_mat": _dense(qp.g_mat).tolist(),
        "h_vec": np.asarray(qp.h_vec).tolist(),
        "e_mat": _dense(qp.e_mat).tolist(),
        "d_vec": np.asarray(qp.d_vec).tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_qp(path) -> QpProblem:
    data = json.loads(Path(path).read_text())
    n = data["n"]

    def mat(key):
        arr = np.asarray(data[key], dtype=float)
        return arr.reshape(-1, n) if arr.size else np.zeros((0, n))

    return QpProblem(
        p_mat=np.asarray(data["p_mat"], dtype=float).reshape(n, n),
        q_vec=np.asarray(data["q_vec"], dtype=float),
        g_mat=mat("g_mat"),
        h_vec=np.asarray(data["h_vec"], dtype=float),
        e_mat=mat("e_mat"),
        d_vec=np.asarray(data["d_vec"], dtype=float),
    )
