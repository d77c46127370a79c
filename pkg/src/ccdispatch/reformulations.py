"""Deterministic surrogates of the joint chance constraint, built as QPs.

* ``sa``   scenario approach: every sampled scenario must be feasible.
* ``cvar`` sample CVaR: per-scenario slack ``beta_k`` with an averaged bound.
* ``ro``   moment-based robust: rows tightened by a std-weighted norm.
* ``pr``   polyhedron: rows shifted by ``p * phi_max + (1 - p) * phi_avg``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .proxy.aggregate import AggregatedFeatures, set_aggregate
from .qp import QpProblem, QpSettings, QpStatus, solve_qp
from .vpp import CompactProblem, ScenarioSet, _x_array

METHODS = ("sa", "cvar", "ro", "pr")
NORM_MODES = ("elementwise", "literal")


@dataclass(frozen=True)
class MomentSummary:
    eps_avg: np.ndarray
    eps_std: np.ndarray

    @classmethod
    def from_scenarios(cls, scen: ScenarioSet) -> "MomentSummary":
        # population std (ddof=0) keeps single-scenario sets well defined
        return cls(scen.eps.mean(axis=0), scen.eps.std(axis=0))


@dataclass
class MethodParams:
    epsilon: float = 0.05
    s: float | None = None
    p: float | None = None
    norm_mode: str = "elementwise"


@dataclass
class MethodResult:
    u: np.ndarray
    objective: float
    build_time: float
    solve_time: float
    status: QpStatus
    method_tag: str
    parameter: float | None
    equality_residual: float
    iterations: int = 0

    @property
    def total_time(self) -> float:
        return self.build_time + self.solve_time


def _equality(cp, x):
    return cp.a_eq, -(cp.b_eq @ x)


def build_scenario_qp(cp: CompactProblem, x, scen: ScenarioSet) -> QpProblem:
    """One copy of the inequality block per scenario."""
    x = _x_array(x)
    k = scen.n_scen
    offset = cp.b_ineq_mat @ x + cp.b_ineq_vec              # (rows,)
    shifts = scen.eps @ cp.c_ineq.T                         # (k, rows)
    g_mat = sp.vstack([sp.csr_matrix(cp.a_ineq)] * k, format="csr")
    h_vec = -(offset[None, :] + shifts).ravel()
    e_mat, d_vec = _equality(cp, x)
    return QpProblem(cp.p_obj, cp.q_obj, g_mat, h_vec, e_mat, d_vec)


def build_cvar_qp(cp: CompactProblem, x, scen: ScenarioSet, epsilon: float) -> QpProblem:
    """Sample-CVaR program over ``[u, beta_1..beta_K, beta_0]``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    x = _x_array(x)
    k = scen.n_scen
    rows = cp.n_rows
    n_u = cp.n_u
    offset = cp.b_ineq_mat @ x + cp.b_ineq_vec
    shifts = scen.eps @ cp.c_ineq.T
    a_blocks = sp.vstack([sp.csr_matrix(cp.a_ineq)] * k)
    # -beta_k on every row of scenario k
    beta_cols = -sp.kron(sp.eye(k), np.ones((rows, 1)))
    scen_rows = sp.hstack([a_blocks, beta_cols, sp.csr_matrix((k * rows, 1))])
    avg_row = sp.hstack([sp.csr_matrix((1, n_u)), sp.csr_matrix(np.full((1, k), 1.0 / k)),
                         sp.csr_matrix([[-(1.0 - epsilon)]])])
    floor_rows = sp.hstack([sp.csr_matrix((k, n_u)), -sp.eye(k), sp.csr_matrix(np.ones((k, 1)))])
    g_mat = sp.vstack([scen_rows, avg_row, floor_rows], format="csr")
    h_vec = np.concatenate([-(offset[None, :] + shifts).ravel(), [0.0], np.zeros(k)])
    n_total = n_u + k + 1
    p_mat = np.zeros((n_total, n_total))
    p_mat[:n_u, :n_u] = cp.p_obj
    q_vec = np.concatenate([cp.q_obj, np.zeros(k + 1)])
    e_mat, d_vec = _equality(cp, x)
    e_mat = np.hstack([e_mat, np.zeros((e_mat.shape[0], k + 1))])
    return QpProblem(p_mat, q_vec, g_mat, h_vec, e_mat, d_vec)


def robust_margin(c_ineq, eps_std, norm_mode: str = "elementwise") -> np.ndarray:
    """Per-row ``||C_r o eps_std||_2`` (elementwise) or ``|C_r . eps_std|`` (literal)."""
    if norm_mode == "elementwise":
        return np.linalg.norm(c_ineq * eps_std[None, :], axis=1)
    if norm_mode == "literal":
        return np.abs(c_ineq @ eps_std)
    raise ValueError(f"unknown norm mode {norm_mode!r}")


def build_robust_qp(cp: CompactProblem, x, moments: MomentSummary, s: float, epsilon: float,
                    norm_mode: str = "elementwise") -> QpProblem:
    if not s > 0:
        raise ValueError(f"safety parameter s must be positive, got {s}")
    x = _x_array(x)
    margin = s * (1.0 - epsilon) * robust_margin(cp.c_ineq, moments.eps_std, norm_mode)
    h_vec = -(cp.b_ineq_mat @ x + cp.c_ineq @ moments.eps_avg + cp.b_ineq_vec + margin)
    e_mat, d_vec = _equality(cp, x)
    return QpProblem(cp.p_obj, cp.q_obj, cp.a_ineq, h_vec, e_mat, d_vec)


def polyhedron_offsets(phi_avg, phi_max, p: float) -> np.ndarray:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"safety parameter p must lie in [0, 1], got {p}")
    return p * np.asarray(phi_max) + (1.0 - p) * np.asarray(phi_avg)


def build_polyhedron_qp(cp: CompactProblem, x, phi_avg, phi_max, p: float) -> QpProblem:
    x = _x_array(x)
    if len(phi_avg) != cp.n_rows or len(phi_max) != cp.n_rows:
        raise ValueError("aggregated features must have one entry per inequality row")
    h_vec = -(cp.b_ineq_mat @ x + polyhedron_offsets(phi_avg, phi_max, p) + cp.b_ineq_vec)
    e_mat, d_vec = _equality(cp, x)
    return QpProblem(cp.p_obj, cp.q_obj, cp.a_ineq, h_vec, e_mat, d_vec)


def _build(method, cp, x, scen, params: MethodParams):
    if method == "sa":
        return build_scenario_qp(cp, x, scen)
    if method == "cvar":
        return build_cvar_qp(cp, x, scen, params.epsilon)
    if method == "ro":
        if params.s is None:
            raise ValueError("method 'ro' requires the safety parameter s")
        return build_robust_qp(cp, x, MomentSummary.from_scenarios(scen), params.s, params.epsilon,
                               params.norm_mode)
    if method == "pr":
        if params.p is None:
            raise ValueError("method 'pr' requires the safety parameter p")
        feats: AggregatedFeatures = set_aggregate(cp.c_ineq, scen)
        return build_polyhedron_qp(cp, x, feats.phi_avg, feats.phi_max, params.p)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def solve_method(method: str, cp: CompactProblem, x, scen: ScenarioSet, params: MethodParams | None = None,
                 repeats: int = 1, settings: QpSettings | None = None) -> MethodResult:
    """Build and solve one reformulation, timing each phase.

    Times are means over ``repeats`` independent build+solve runs; the
    solution of the last run is returned (runs are deterministic).
    """
    params = params or MethodParams()
    x_arr = _x_array(x)
    build_times, solve_times = [], []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        qp = _build(method, cp, x_arr, scen, params)
        t1 = time.perf_counter()
        sol = solve_qp(qp, settings)
        t2 = time.perf_counter()
        build_times.append(t1 - t0)
        solve_times.append(t2 - t1)
    u = sol.u[:cp.n_u]
    parameter = {"ro": params.s, "pr": params.p}.get(method)
    return MethodResult(
        u=u,
        objective=cp.objective(u),
        build_time=float(np.mean(build_times)),
        solve_time=float(np.mean(solve_times)),
        status=sol.status,
        method_tag=method,
        parameter=parameter,
        equality_residual=float(np.max(np.abs(cp.equality_residual(u, x_arr)))),
        iterations=sol.iterations,
    )
