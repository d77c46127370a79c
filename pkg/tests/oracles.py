"""Independent reference solvers used only by the tests."""

import itertools

import numpy as np


def enumerate_active_sets(p_mat, q_vec, g_mat, h_vec, e_mat=None, d_vec=None, tol=1e-9):
    """Exact minimizer of a strictly convex QP by trying every active set.

    For each subset S of inequality rows (|S| + n_eq <= n) the KKT system with
    S held at equality is solved; the first primal- and dual-feasible point is
    the unique optimum.  Exponential in the number of rows: keep m small.
    """
    n = q_vec.size
    e_mat = np.zeros((0, n)) if e_mat is None else np.atleast_2d(e_mat)
    d_vec = np.zeros(0) if d_vec is None else np.asarray(d_vec)
    m, me = g_mat.shape[0], e_mat.shape[0]
    for size in range(0, min(m, n - me) + 1):
        for active in itertools.combinations(range(m), size):
            rows = np.vstack([g_mat[list(active)], e_mat])
            rhs = np.concatenate([h_vec[list(active)], d_vec])
            k = rows.shape[0]
            kkt = np.block([[p_mat, rows.T], [rows, np.zeros((k, k))]])
            try:
                sol = np.linalg.solve(kkt, np.concatenate([-q_vec, rhs]))
            except np.linalg.LinAlgError:
                continue
            u, lam = sol[:n], sol[n:n + size]
            if np.all(g_mat @ u <= h_vec + tol) and np.all(lam >= -tol):
                return u
    raise ValueError("no KKT point found")


def random_strictly_convex_qp(rng, n, m, me=0):
    """Random feasible QP with a positive definite Hessian."""
    root = rng.normal(size=(n, n))
    p_mat = root @ root.T + 0.1 * np.eye(n)
    q_vec = rng.normal(size=n) * 3
    g_mat = rng.normal(size=(m, n))
    u0 = rng.normal(size=n)
    h_vec = g_mat @ u0 + rng.uniform(0.0, 1.0, m)
    e_mat = rng.normal(size=(me, n))
    d_vec = e_mat @ u0
    return p_mat, q_vec, g_mat, h_vec, e_mat, d_vec


def clarabel_qp(p_mat, q_vec, g_mat, h_vec, e_mat=None, d_vec=None):
    """Reference solution from an interior-point conic solver via cvxpy."""
    import cvxpy as cp

    n = q_vec.size
    u = cp.Variable(n)
    cons = [g_mat @ u <= h_vec]
    if e_mat is not None and np.size(e_mat):
        cons.append(e_mat @ u == d_vec)
    prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(u, cp.psd_wrap(p_mat)) + q_vec @ u), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return np.asarray(u.value), prob.value


def directional_fd(loss_fn, params, direction, h=1e-6):
    """Central difference of ``loss_fn`` along ``direction`` (lists of arrays, perturbed in place)."""
    for a, d in zip(params, direction):
        a += h * d
    up = loss_fn()
    for a, d in zip(params, direction):
        a -= 2 * h * d
    down = loss_fn()
    for a, d in zip(params, direction):
        a += h * d
    return (up - down) / (2 * h)


def direct_rows(inst, u, x, eps, literal=False):
    """Row values written out prosumer by prosumer (independent of the matrices)."""
    n = inst.n_prosumers
    pg, pl = u[:n], u[n:]
    p_ng, p_il = x[1:1 + n], x[1 + n:]
    total = eps.sum()
    pg_real = pg - inst.alpha_g * total
    pl_real = pl + inst.alpha_l * total
    p_o = pg_real - pl_real + (p_ng + eps) - p_il
    if literal:
        p_o = p_o + p_ng
    return np.concatenate([pg_real - inst.pg_max, inst.pg_min - pg_real, pl_real - inst.pl_max,
                           inst.pl_min - pl_real, p_o - inst.po_max, inst.po_min - p_o])
