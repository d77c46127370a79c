import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ccdispatch.proxy.aggregate import set_aggregate
from ccdispatch.vpp import ScenarioSet


def test_singleton():
    c = np.array([[1.0, 2.0], [-1.0, 0.5]])
    eps = np.array([0.3, -0.7])
    f = set_aggregate(c, ScenarioSet(eps[None, :]))
    np.testing.assert_array_equal(f.phi_avg, c @ eps)
    np.testing.assert_array_equal(f.phi_max, c @ eps)


def test_hand_example():
    f = set_aggregate(np.eye(2), ScenarioSet(np.array([[1.0, 0.0], [0.0, 1.0]])))
    np.testing.assert_allclose(f.phi_avg, [0.5, 0.5])
    np.testing.assert_allclose(f.phi_max, [1.0, 1.0])


def test_empty_rejected():
    with pytest.raises(ValueError):
        set_aggregate(np.eye(2), np.zeros((0, 2)))


def test_blend():
    f = set_aggregate(np.eye(2), ScenarioSet(np.array([[1.0, 0.0], [0.0, 1.0]])))
    np.testing.assert_allclose(f.blend(0.25), [0.625, 0.625])


@given(arrays(float, st.tuples(st.integers(1, 40), st.just(3)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)),
       st.randoms(use_true_random=False))
def test_permutation_invariance_and_dominance(eps, rand):
    c = np.array([[1.0, -0.5, 0.2], [0.0, 1.0, 1.0], [-1.0, -1.0, -1.0], [0.3, 0.3, 0.3]])
    order = list(range(eps.shape[0]))
    rand.shuffle(order)
    a = set_aggregate(c, ScenarioSet(eps))
    b = set_aggregate(c, ScenarioSet(eps[order]))
    np.testing.assert_allclose(a.phi_avg, b.phi_avg, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(a.phi_max, b.phi_max)
    assert np.all(a.phi_max >= a.phi_avg - 1e-12)
