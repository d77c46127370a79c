"""Evaluation metrics shared by training, selection and the benchmark."""

from __future__ import annotations

import numpy as np

from .vpp import CompactProblem, _x_array

VIOLATION_TOL = 1e-6


def violation_rate(cp: CompactProblem, u, x, scen, tol: float = VIOLATION_TOL) -> float:
    """Fraction of scenarios in which any inequality row exceeds ``tol``."""
    eps = scen.eps if hasattr(scen, "eps") else np.atleast_2d(np.asarray(scen, dtype=float))
    base = cp.a_ineq @ np.asarray(u, dtype=float) + cp.b_ineq_mat @ _x_array(x) + cp.b_ineq_vec
    rows = base[None, :] + eps @ cp.c_ineq.T
    violated = np.any(rows > tol, axis=1)
    return float(np.count_nonzero(violated)) / eps.shape[0]


def objective_cost_rate(f_method: float, f_sa: float) -> float:
    """Objective normalized by the scenario-approach objective."""
    if not f_sa > 0:
        raise ValueError(f"reference objective must be positive, got {f_sa}")
    return float(f_method) / float(f_sa)
