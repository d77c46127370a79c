import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccdispatch.proxy.aggregate import set_aggregate
from ccdispatch.proxy.model import (HIDDEN_UNITS, MlpWeights, feature_vector, init_weights, load_weights,
                                    proxy_backward, proxy_forward, save_weights)
from ccdispatch.proxy.reduce import equality_partition
from ccdispatch.reformulations import polyhedron_offsets
from ccdispatch.vpp import GenConfig, assemble_compact, generate_instance, sample_input, sample_scenarios

from oracles import directional_fd


def weights_for(cp, seed=0, scale=1.0, hidden=32):
    n_feat = (cp.n_u + 1) + 2 * cp.n_rows  # x, phi_avg, phi_max
    w = init_weights(n_feat, cp.n_u - 1, seed=seed, hidden=hidden)
    for a in w.params():
        a *= scale
    return w


def test_default_shapes(cp4):
    w = init_weights(9 + 48, 7)
    assert w.dims == {"d": 57, "h": HIDDEN_UNITS, "o": 7}
    assert np.all(w.feature_std > 0)
    with pytest.raises(ValueError):
        MlpWeights(w.w1, w.b1[:3], w.w2, w.b2, w.feature_mean, w.feature_std)
    with pytest.raises(ValueError):
        MlpWeights(w.w1, w.b1, w.w2, w.b2, w.feature_mean, np.zeros_like(w.feature_std))


def test_feature_vector_layout(cp4, point4):
    x, scen, _ = point4
    feats = set_aggregate(cp4.c_ineq, scen)
    f = feature_vector(x, feats)
    assert f.size == 9 + 2 * 24
    np.testing.assert_array_equal(f[9:33], feats.phi_avg)


def test_zero_weights_give_interior_point(cp4, point4):
    x, scen, _ = point4
    part = equality_partition(cp4)
    w = weights_for(cp4, scale=0.0)
    u, trace = proxy_forward(w, cp4, x, scen, 0.5, part)
    np.testing.assert_allclose(u, part.complete(trace.rp.interior, x.as_array()), atol=1e-12)
    assert trace.psi == 0.0


def _check_feasible(cp, part, x, scen, p, u):
    feats = set_aggregate(cp.c_ineq, scen)
    rows = cp.a_ineq @ u + cp.b_ineq_mat @ x.as_array() + polyhedron_offsets(feats.phi_avg, feats.phi_max, p) \
        + cp.b_ineq_vec
    assert abs(cp.equality_residual(u, x)[0]) <= 1e-8
    assert np.max(rows) <= 1e-8


@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.sampled_from([0.0, 0.1, 1.0, 10.0, 1e3]))
def test_hard_feasibility_random_weights(seed, p, scale):
    inst = generate_instance(GenConfig(n_prosumers=3), seed=seed % 7)
    cp = assemble_compact(inst)
    part = equality_partition(cp)
    x = sample_input(inst, seed=seed)
    scen = sample_scenarios(inst, x, 1 + seed % 30, seed=seed + 1)
    w = weights_for(cp, seed=seed, scale=scale)
    u, _ = proxy_forward(w, cp, x, scen, p, part)
    _check_feasible(cp, part, x, scen, p, u)


def test_permutation_and_size_invariance(cp4, inst4, point4, rng):
    x, scen, _ = point4
    part = equality_partition(cp4)
    w = weights_for(cp4, seed=3, scale=5.0)
    base, _ = proxy_forward(w, cp4, x, scen, 0.7, part)
    for _ in range(5):
        other, _ = proxy_forward(w, cp4, x, scen.permuted(rng.permutation(scen.n_scen)), 0.7, part)
        np.testing.assert_allclose(other, base, rtol=0, atol=1e-9)
    for k in (1, 17, 200):
        u, _ = proxy_forward(w, cp4, x, sample_scenarios(inst4, x, k, seed=k), 0.7, part)
        assert u.shape == (8,)


def test_zero_upstream_zero_gradient(cp4, point4):
    x, scen, _ = point4
    part = equality_partition(cp4)
    w = weights_for(cp4, seed=1, scale=3.0)
    u, trace = proxy_forward(w, cp4, x, scen, 0.5, part)
    for g in proxy_backward(trace, u):
        assert np.all(g == 0.0)


def test_interior_branch_is_plain_regression(cp4, point4):
    x, scen, _ = point4
    part = equality_partition(cp4)
    w = weights_for(cp4, seed=2, scale=0.01)
    u, trace = proxy_forward(w, cp4, x, scen, 0.5, part)
    assert trace.psi < 1.0
    target = u + 1.0
    grads = proxy_backward(trace, target)
    # gradient of ||M (W2 relu(W1 f + b1) + b2) + c - t||^2 written out directly
    lift = part.lift()
    f = trace.cache.features[0]
    pre = w.w1 @ f + w.b1
    g_hat = lift.T @ (2.0 * (u - target))
    np.testing.assert_allclose(grads[3], g_hat, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(grads[2], np.outer(g_hat, np.maximum(pre, 0)), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    inst = generate_instance(GenConfig(n_prosumers=3), seed=seed)
    cp = assemble_compact(inst)
    part = equality_partition(cp)
    x = sample_input(inst, seed=seed)
    scen = sample_scenarios(inst, x, 25, seed=seed + 50)
    w = weights_for(cp, seed=seed, scale=float(rng.choice([0.3, 3.0, 30.0])))
    target = rng.normal(0, 20, cp.n_u)
    u, trace = proxy_forward(w, cp, x, scen, 0.5, part)
    grads = proxy_backward(trace, target)
    direction = [rng.normal(size=a.shape) for a in w.params()]

    def loss():
        out, _ = proxy_forward(w, cp, x, scen, 0.5, part)
        return float(np.sum((out - target) ** 2))

    fd = directional_fd(loss, w.params(), direction)
    analytic = sum(float(np.sum(g * d)) for g, d in zip(grads, direction))
    assert abs(fd - analytic) <= 1e-4 * max(abs(analytic), 1e-6)


def test_json_roundtrip(tmp_path, cp4):
    w = weights_for(cp4, seed=4)
    w.p = 0.68
    w.metadata["note"] = "x"
    save_weights(w, tmp_path / "w.json")
    back = load_weights(tmp_path / "w.json")
    for a, b in zip(back.params(), w.params()):
        np.testing.assert_array_equal(a, b)
    assert back.p == 0.68 and back.metadata == {"note": "x"} and back.seed == 4
    data = w.to_json()
    assert set(data) == {"dims", "w1", "b1", "w2", "b2", "feature_norm", "p", "seed", "metadata"}
    data["dims"] = {"d": 1, "h": 1, "o": 1}
    with pytest.raises(ValueError):
        MlpWeights.from_json(data)
