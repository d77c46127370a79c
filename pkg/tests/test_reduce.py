import numpy as np
import pytest

from ccdispatch.proxy.aggregate import AggregatedFeatures, set_aggregate
from ccdispatch.proxy.reduce import (EmptyReducedSetError, equality_partition, midpoint_candidate,
                                     reduce_polyhedron, reduced_rows)
from ccdispatch.reformulations import polyhedron_offsets
from ccdispatch.vpp import CompactProblem, ScenarioSet


def _toy(a_eq, b_eq, n_rows=2):
    n = np.shape(a_eq)[1]
    nx = np.shape(b_eq)[1]
    return CompactProblem(np.atleast_2d(a_eq), np.atleast_2d(b_eq), np.zeros((n_rows, n)),
                          np.zeros((n_rows, nx)), np.zeros((n_rows, 1)), np.zeros(n_rows),
                          np.eye(n), np.zeros(n))


def test_hand_partition():
    # u1 + u2 = 10 written as [1, 1] u - 10 x = 0 with x = 1
    cp = _toy([[1.0, 1.0]], [[-10.0]])
    part = equality_partition(cp)
    assert list(part.dep_idx) == [0] and list(part.ind_idx) == [1]
    u = part.complete(np.array([3.0]), np.array([1.0]))
    np.testing.assert_allclose(u, [7.0, 3.0])


def test_vpp_pivot_picks_first_column(cp4):
    part = equality_partition(cp4)
    assert list(part.dep_idx) == [0]
    assert list(part.ind_idx) == list(range(1, 8))


def test_completion_identity(cp4, rng):
    part = equality_partition(cp4)
    for _ in range(100):
        u_ind = rng.normal(0, 50, 7)
        x = rng.uniform(0, 50, 9)
        u = part.complete(u_ind, x)
        assert abs(cp4.equality_residual(u, x)[0]) <= 1e-10


def test_batched_completion_and_pullback(cp4, rng):
    part = equality_partition(cp4)
    u_ind = rng.normal(size=(5, 7))
    x = rng.normal(size=(5, 9))
    full = part.complete(u_ind, x)
    np.testing.assert_allclose(full, np.vstack([part.complete(a, b) for a, b in zip(u_ind, x)]))
    g = rng.normal(size=8)
    np.testing.assert_allclose(part.pullback(g), part.lift().T @ g)


def test_rank_deficient():
    with pytest.raises(ValueError, match="rank deficient"):
        equality_partition(_toy([[1.0, 1.0], [2.0, 2.0]], [[0.0], [0.0]]))


def _rows_hold(cp, u, x, offsets, tol=0.0):
    return np.all(cp.a_ineq @ u + cp.b_ineq_mat @ x + offsets + cp.b_ineq_vec <= tol)


def test_membership_equivalence(cp4, point4, rng):
    x, scen, _ = point4
    x = x.as_array()
    part = equality_partition(cp4)
    feats = set_aggregate(cp4.c_ineq, scen)
    p = 0.6
    rp = reduce_polyhedron(cp4, x, feats, p, part)
    offsets = polyhedron_offsets(feats.phi_avg, feats.phi_max, p)
    hits = 0
    for _ in range(1000):
        u_ind = rp.interior + rng.normal(0, 8, 7)
        inside = np.all(rp.a_mat @ u_ind <= rp.b_vec)
        u = part.complete(u_ind, x)
        assert inside == _rows_hold(cp4, u, x, offsets, 1e-9)
        assert abs(cp4.equality_residual(u, x)[0]) <= 1e-9
        hits += inside
    assert 0 < hits < 1000


def test_zero_scenario_collapse(cp4, point4):
    x = point4[0]
    part = equality_partition(cp4)
    zero = set_aggregate(cp4.c_ineq, ScenarioSet(np.zeros((1, 4))))
    rp = reduce_polyhedron(cp4, x, zero, 0.0, part)
    a_det, b_det = reduced_rows(cp4, x.as_array(), np.zeros(cp4.n_rows), part)
    np.testing.assert_allclose(rp.a_mat, a_det)
    np.testing.assert_allclose(rp.b_vec, b_det)


def test_margins_positive(cp4, point4):
    x, scen, _ = point4
    part = equality_partition(cp4)
    feats = set_aggregate(cp4.c_ineq, scen)
    for p in (0.0, 0.5, 1.0):
        rp = reduce_polyhedron(cp4, x, feats, p, part)
        assert np.all(rp.margins > 0)
        np.testing.assert_allclose(rp.margins, rp.b_vec - rp.a_mat @ rp.interior)


def test_midpoint_candidate_is_interior(cp4, point4):
    x, scen, _ = point4
    part = equality_partition(cp4)
    feats = set_aggregate(cp4.c_ineq, scen)
    offsets = polyhedron_offsets(feats.phi_avg, feats.phi_max, 0.5)
    cand = midpoint_candidate(cp4, x, offsets, part)
    if cand is not None:
        u = part.complete(cand, x.as_array())
        assert abs(cp4.equality_residual(u, x)[0]) <= 1e-9


def test_empty_set_error(cp4, point4):
    x = point4[0]
    part = equality_partition(cp4)
    # every row tightened by far more than the operating ranges allow
    bad = AggregatedFeatures(np.full(cp4.n_rows, 500.0), np.full(cp4.n_rows, 500.0))
    with pytest.raises(EmptyReducedSetError, match="reduced set empty at p"):
        reduce_polyhedron(cp4, x, bad, 1.0, part)
