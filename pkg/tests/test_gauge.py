import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccdispatch.proxy.gauge import gauge_map, gauge_map_jacobian_vec, minkowski_gauge
from ccdispatch.proxy.reduce import ReducedPolyhedron

UNIT = ReducedPolyhedron(np.array([[1.0], [-1.0]]), np.array([1.0, 1.0]), np.array([0.0]),
                         np.array([1.0, 1.0]))


def random_polytope(rng, n=5, m=14):
    a = rng.normal(size=(m, n))
    u0 = rng.normal(size=n)
    b = a @ u0 + rng.uniform(0.5, 2.0, m)
    return ReducedPolyhedron(a, b, u0, b - a @ u0)


def test_zero_vector():
    assert minkowski_gauge(np.zeros(1), UNIT) == (0.0, 0)
    np.testing.assert_array_equal(gauge_map(np.zeros(1), UNIT), UNIT.interior)


def test_one_dimensional():
    psi, row = minkowski_gauge(np.array([4.0]), UNIT)
    assert psi == 4.0 and row == 0
    np.testing.assert_allclose(gauge_map(np.array([4.0]), UNIT), [1.0])
    assert minkowski_gauge(np.array([-3.0]), UNIT) == (3.0, 1)


def test_one_dimensional_derivative_pinned():
    np.testing.assert_allclose(gauge_map_jacobian_vec(np.array([4.0]), UNIT, np.array([1.0])), [0.0],
                               atol=1e-15)


def test_interior_branch_identity():
    u_hat = np.array([0.5])
    np.testing.assert_array_equal(gauge_map(u_hat, UNIT), u_hat + UNIT.interior)
    np.testing.assert_array_equal(gauge_map_jacobian_vec(u_hat, UNIT, np.array([2.5])), [2.5])


def test_tie_picks_lowest_row():
    rp = ReducedPolyhedron(np.eye(2), np.ones(2), np.zeros(2), np.ones(2))
    assert minkowski_gauge(np.array([3.0, 3.0]), rp)[1] == 0


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_positive_homogeneity(seed, scale):
    rng = np.random.default_rng(seed)
    rp = random_polytope(rng)
    u_hat = rng.normal(size=5)
    psi, _ = minkowski_gauge(u_hat, rp)
    psi_scaled, _ = minkowski_gauge(scale * u_hat, rp)
    if psi > 0:
        assert psi_scaled == pytest.approx(scale * psi, rel=1e-12)


@given(st.integers(0, 10_000), st.floats(0.01, 1e4))
def test_output_inside_set(seed, scale):
    rng = np.random.default_rng(seed)
    rp = random_polytope(rng)
    u = gauge_map(scale * rng.normal(size=5), rp)
    assert np.all(rp.a_mat @ u <= rp.b_vec + 1e-9)


@given(st.integers(0, 10_000))
def test_idempotent_inside(seed):
    rng = np.random.default_rng(seed)
    rp = random_polytope(rng)
    u_hat = rng.normal(size=5)
    psi, _ = minkowski_gauge(u_hat, rp)
    if psi <= 1.0:
        np.testing.assert_array_equal(gauge_map(u_hat, rp), u_hat + rp.interior)


def test_vjp_matches_central_differences():
    rng = np.random.default_rng(7)
    rp = random_polytope(rng)
    h = 1e-6
    checked = 0
    while checked < 20:
        u_hat = rng.normal(size=5) * rng.uniform(0.2, 5.0)
        psi, _ = minkowski_gauge(u_hat, rp)
        ratios = np.sort((rp.a_mat @ u_hat) / rp.margins)
        if abs(psi - 1.0) <= 1e-3 or ratios[-1] - ratios[-2] <= 1e-4:
            continue
        g = rng.normal(size=5)
        jac = np.column_stack([(gauge_map(u_hat + h * e, rp) - gauge_map(u_hat - h * e, rp)) / (2 * h)
                               for e in np.eye(5)])
        analytic = gauge_map_jacobian_vec(u_hat, rp, g)
        np.testing.assert_allclose(analytic, jac.T @ g, rtol=1e-4, atol=1e-8)
        checked += 1


def test_batched_vjp_matches_single():
    rng = np.random.default_rng(2)
    rp = random_polytope(rng)
    u_hat = rng.normal(size=(6, 5)) * 3
    g = rng.normal(size=(6, 5))
    batch = gauge_map_jacobian_vec(u_hat, rp, g)
    for i in range(6):
        np.testing.assert_allclose(batch[i], gauge_map_jacobian_vec(u_hat[i], rp, g[i]))
