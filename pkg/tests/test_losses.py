import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import np_ce, np_im, np_kl, np_rec, np_two_pop
from xmodal.gradcore import ShapeError, Tensor, grad_check
from xmodal.losses import (
    LossWeights,
    l_d1,
    l_d2,
    l_f,
    l_im,
    l_kd,
    l_rec,
    l_self,
    l_tgkt,
    l_tgmb,
)

rng = np.random.default_rng(0)


def _probs(n, k, seed=0):
    return np.random.default_rng(seed).dirichlet(np.ones(k), size=n)


def test_values_match_numpy_references():
    a, b = rng.normal(size=(4, 3, 5, 5)), rng.normal(size=(4, 3, 5, 5))
    assert l_rec(Tensor(a), Tensor(b)).item() == pytest.approx(np_rec(a, b), rel=1e-12)
    real, fake = rng.uniform(0.05, 0.95, (6, 1)), rng.uniform(0.05, 0.95, (6, 1))
    assert l_d1(Tensor(real), Tensor(fake)).item() == pytest.approx(np_two_pop(real, fake), rel=1e-12)
    assert l_d2(Tensor(real), Tensor(fake)).item() == pytest.approx(np_two_pop(real, fake), rel=1e-12)
    p, q = _probs(5, 4, 1), _probs(5, 4, 2)
    ent, div, im = (t.item() for t in l_im(Tensor(p)))
    assert (ent, div, im) == pytest.approx(np_im(p), rel=1e-12)
    assert l_kd(Tensor(p), Tensor(q)).item() == pytest.approx(np_kl(p, q), rel=1e-12)
    assert l_kd(Tensor(p), Tensor(q), direction="teacher_student").item() == pytest.approx(np_kl(q, p), rel=1e-12)
    labels = np.array([0, 3, 1, 1, 2])
    assert l_self(Tensor(p), labels).item() == pytest.approx(np_ce(p, labels), rel=1e-12)
    f1, f2 = rng.normal(size=(3, 8)), rng.normal(size=(3, 8))
    assert l_f(Tensor(f1), Tensor(f2)).item() == pytest.approx(np_rec(f1, f2), rel=1e-12)


def test_kd_direction_unknown():
    p = Tensor(_probs(2, 3))
    with pytest.raises(ValueError):
        l_kd(p, p, direction="sideways")


def test_composites_weighting():
    rec, adv, im = Tensor(3.0), Tensor(0.5), Tensor(-0.25)
    w = LossWeights(alpha_d=1.0, alpha_im=0.2)
    assert l_tgmb(rec, adv, im, w).item() == pytest.approx(3.0 + 0.5 - 0.05)
    assert l_tgmb(rec, adv, im, LossWeights(alpha_d=0, alpha_im=0)).item() == 3.0
    base = l_tgmb(rec, adv, im, LossWeights(alpha_d=1.0, alpha_im=0.0)).item()
    one = l_tgmb(rec, adv, im, LossWeights(alpha_d=1.0, alpha_im=0.4)).item() - base
    two = l_tgmb(rec, adv, im, LossWeights(alpha_d=1.0, alpha_im=0.8)).item() - base
    assert two == pytest.approx(2 * one)
    kd, f, s = Tensor(1.0), Tensor(2.0), Tensor(4.0)
    assert l_tgkt(kd, f, s, LossWeights(beta_f=0.2, beta_self=1.0)).item() == pytest.approx(1.0 + 0.4 + 4.0)
    assert l_tgkt(kd, f, s, LossWeights(beta_f=0, beta_self=0)).item() == 1.0


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        LossWeights(alpha_d=-1.0)


def test_shape_errors():
    with pytest.raises(ShapeError):
        l_rec(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))
    with pytest.raises(ShapeError):
        l_f(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3))))
    with pytest.raises(ShapeError):
        l_d1(Tensor(np.full((2, 2), 0.5)), Tensor(np.full((2, 2), 0.5)))
    with pytest.raises(ShapeError):
        l_self(Tensor(_probs(3, 2)), np.array([0, 1]))


def test_bad_pseudo_labels_and_probs():
    with pytest.raises(ValueError):
        l_self(Tensor(_probs(2, 3)), np.array([0, 3]))
    with pytest.raises(ValueError):
        l_self(Tensor(_probs(2, 3)), np.array([0.5, 1]))
    with pytest.raises(ValueError):
        l_im(Tensor(np.full((2, 3), 0.5)))  # rows do not sum to one


def test_teacher_and_source_side_are_constants():
    p = Tensor(_probs(3, 4, 5), requires_grad=True)
    q = Tensor(_probs(3, 4, 6), requires_grad=True)
    l_kd(p, q).backward()
    assert q.grad is None and p.grad is not None
    fs = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
    ft = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
    l_f(fs, ft).backward()
    assert fs.grad is None
    np.testing.assert_allclose(ft.grad, 2 * (ft.data - fs.data) / 2)


def test_clamp_keeps_saturated_outputs_finite():
    ones = Tensor(np.ones((3, 1)))
    zeros = Tensor(np.zeros((3, 1)))
    assert np.isfinite(l_d1(zeros, ones).item())
    assert np.isfinite(l_kd(Tensor(np.eye(3)), Tensor(np.eye(3)[::-1])).item())


def test_input_gradients():
    p = _probs(4, 3, 9)
    assert grad_check(lambda x: l_rec(Tensor(p), x), Tensor(rng.normal(size=(4, 3)))) < 1e-7
    assert grad_check(lambda x: l_d1(x, Tensor(np.full((4, 1), 0.3))), Tensor(rng.uniform(0.2, 0.8, (4, 1)))) < 1e-7


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 5), st.integers(0, 2**16))
def test_kd_nonnegative_and_zero_on_self(n, k, seed):
    p, q = _probs(n, k, seed), _probs(n, k, seed + 1)
    assert l_kd(Tensor(p), Tensor(q)).item() >= -1e-12
    assert abs(l_kd(Tensor(p), Tensor(p)).item()) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 5), st.integers(0, 2**16))
def test_im_bounds(n, k, seed):
    ent, div, _ = (t.item() for t in l_im(Tensor(_probs(n, k, seed))))
    assert -1e-12 <= ent <= np.log(k) + 1e-9
    assert -1e-12 <= div <= np.log(k) + 1e-9
    assert ent <= div + 1e-9  # concavity: mean entropy never exceeds entropy of the mean


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)), arrays(np.float64, (3, 4), elements=st.floats(-5, 5)))
def test_rec_symmetric_nonnegative(a, b):
    ab, ba = l_rec(Tensor(a), Tensor(b)).item(), l_rec(Tensor(b), Tensor(a)).item()
    assert ab == ba and ab >= 0
