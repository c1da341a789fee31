import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_pseudo_label
from xmodal.adapt import pseudo_label


def _instance(seed, n=12, k=3, d=4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.dirichlet(np.ones(k), size=n)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**16), st.integers(3, 20), st.integers(2, 4))
def test_matches_oracle_on_random_instances(seed, n, k):
    f, p = _instance(seed, n, k)
    assert pseudo_label(f, p).labels.tolist() == brute_pseudo_label(f, p)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**16))
def test_permutation_equivariant(seed):
    f, p = _instance(seed)
    perm = np.random.default_rng(seed + 1).permutation(len(f))
    assert np.array_equal(pseudo_label(f[perm], p[perm]).labels, pseudo_label(f, p).labels[perm])


@pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0])
def test_scale_invariant(scale):
    f, p = _instance(4)
    assert np.array_equal(pseudo_label(scale * f, p).labels, pseudo_label(f, p).labels)


def test_consistent_one_hot_is_a_fixed_point():
    f = np.array([[1, 0.1], [1, -0.2], [0.1, 1], [-0.1, 1.2]])
    p = np.eye(2)[[0, 0, 1, 1]]
    res = pseudo_label(f, p)
    assert res.labels.tolist() == [0, 0, 1, 1] and res.rounds == 2


def test_separated_clusters_uniform_probs():
    f = np.array([[5, 0.1], [4, -0.1], [0.1, 3], [0, 6]])
    p = np.array([[0.51, 0.49]] * 2 + [[0.49, 0.51]] * 2)
    assert pseudo_label(f, p).labels.tolist() == [0, 0, 1, 1]


def test_errors():
    with pytest.raises(ValueError, match="zero feature"):
        pseudo_label(np.array([[0.0, 0.0], [1.0, 0.0]]), np.full((2, 2), 0.5))
    with pytest.raises(ValueError):
        pseudo_label(np.zeros((3, 2)) + 1, np.full((2, 2), 0.5))
