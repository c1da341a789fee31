"""Loss terms for modality bridging (translator stage) and knowledge transfer.

Each term is a plain function of tensors and returns a scalar tensor, so it
can be differentiated and gradient-checked on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gradcore import Tensor, ops
from .gradcore.tensor import ShapeError

EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    alpha_d: float = 1.0
    alpha_im: float = 0.2
    beta_f: float = 0.2
    beta_self: float = 1.0

    def __post_init__(self):
        for name in ("alpha_d", "alpha_im", "beta_f", "beta_self"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class ProbClamp:
    epsilon: float = EPS

    def __call__(self, p: Tensor) -> Tensor:
        return ops.clamp(p, self.epsilon, 1.0)


def _clamped_log(p: Tensor, eps: float = EPS) -> Tensor:
    return ops.log(ops.clamp(p, eps, 1.0))


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


def _check_rows(op: str, probs: Tensor, tol: float = 1e-6) -> None:
    if probs.data.ndim != 2:
        raise ShapeError(op, probs.shape, detail="expected [B, K] probabilities")
    dev = np.abs(probs.data.sum(axis=1) - 1.0)
    if dev.max(initial=0.0) > tol:
        raise ValueError(f"{op}: probability rows must sum to 1 (max deviation {dev.max():.2e})")


def l_rec(ti_src: Tensor, translated_ti: Tensor) -> Tensor:
    """Batch mean of per-sample squared L2 distance."""
    _same_shape("l_rec", ti_src, translated_ti)
    diff = ti_src - translated_ti
    return ops.scale(ops.sq_l2(diff), 1.0 / ti_src.shape[0])


def _two_population_loglik(real: Tensor, fake: Tensor, eps: float) -> Tensor:
    for t in (real, fake):
        if t.data.ndim != 2 or t.shape[1] != 1:
            raise ShapeError("discriminator loss", t.shape, detail="expected [B, 1]")
    return ops.mean(_clamped_log(real, eps)) + ops.mean(_clamped_log(1.0 - fake, eps))


def l_d1(d1_real: Tensor, d1_fake: Tensor, eps: float = EPS) -> Tensor:
    """Inter-modality log-likelihood: TI source features real, translated TI fake."""
    return _two_population_loglik(d1_real, d1_fake, eps)


def l_d2(d2_tr: Tensor, d2_ti: Tensor, eps: float = EPS) -> Tensor:
    """Intra-modality log-likelihood: translated TR real, translated TI fake."""
    return _two_population_loglik(d2_tr, d2_ti, eps)


def l_im(probs_tr: Tensor, eps: float = EPS) -> tuple[Tensor, Tensor, Tensor]:
    """Information maximization on source-model predictions.

    Returns (mean per-sample entropy, entropy of the mean prediction,
    their difference). Minimizing the difference makes predictions
    confident yet spread over classes.
    """
    _check_rows("l_im", probs_tr)
    n = probs_tr.shape[0]
    ent = ops.scale(ops.sum(probs_tr * _clamped_log(probs_tr, eps)), -1.0 / n)
    p_bar = ops.mean(probs_tr, axis=0)
    div = -ops.sum(p_bar * _clamped_log(p_bar, eps))
    return ent, div, ent - div


def l_tgmb(rec: Tensor, adv: Tensor | float, im: Tensor | float, w: LossWeights) -> Tensor:
    """rec + alpha_d * adv + alpha_im * im; zero-weighted terms drop out of the graph."""
    total = rec
    if w.alpha_d:
        total = total + ops.scale(ops.as_tensor(adv), w.alpha_d)
    if w.alpha_im:
        total = total + ops.scale(ops.as_tensor(im), w.alpha_im)
    return total


def l_kd(probs_student: Tensor, probs_teacher: Tensor, eps: float = EPS,
         direction: str = "student_teacher") -> Tensor:
    """Mean KL divergence between student and teacher rows.

    The default argument order is KL(student || teacher). ``direction=
    "teacher_student"`` gives the classic distillation order. The teacher is
    always treated as a constant.
    """
    _same_shape("l_kd", probs_student, probs_teacher)
    _check_rows("l_kd", probs_student)
    _check_rows("l_kd", probs_teacher)
    t = probs_teacher.detach()
    log_t = np.log(np.clip(t.data, eps, 1.0))
    n = probs_student.shape[0]
    if direction == "student_teacher":
        s = probs_student
        return ops.scale(ops.sum(s * (_clamped_log(s, eps) - log_t)), 1.0 / n)
    if direction == "teacher_student":
        return ops.scale(ops.sum(t * (log_t - _clamped_log(probs_student, eps))), 1.0 / n)
    raise ValueError(f"unknown kd direction {direction!r}")


def l_f(feat_src_ti: Tensor, feat_tgt_ti: Tensor) -> Tensor:
    """Batch mean squared L2 distance between paired features; source side is constant."""
    if feat_src_ti.shape[0] != feat_tgt_ti.shape[0]:
        raise ShapeError("l_f", feat_src_ti.shape, feat_tgt_ti.shape, detail="pairs misaligned")
    _same_shape("l_f", feat_src_ti, feat_tgt_ti)
    diff = feat_tgt_ti - feat_src_ti.detach()
    return ops.scale(ops.sq_l2(diff), 1.0 / feat_tgt_ti.shape[0])


def l_self(probs_student: Tensor, pseudo: np.ndarray, eps: float = EPS) -> Tensor:
    """Cross-entropy of student predictions against pseudo labels."""
    pseudo = np.asarray(pseudo)
    n, k = probs_student.shape
    if pseudo.shape != (n,):
        raise ShapeError("l_self", probs_student.shape, pseudo.shape)
    if pseudo.size and (pseudo.min() < 0 or pseudo.max() >= k or not np.all(pseudo == np.round(pseudo))):
        raise ValueError(f"l_self: pseudo labels must be integers in [0, {k})")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), pseudo.astype(np.int64)] = 1.0
    return ops.scale(ops.sum(_clamped_log(probs_student, eps) * onehot), -1.0 / n)


def l_tgkt(kd: Tensor, f: Tensor | float, self_: Tensor | float, w: LossWeights) -> Tensor:
    total = kd
    if w.beta_f:
        total = total + ops.scale(ops.as_tensor(f), w.beta_f)
    if w.beta_self:
        total = total + ops.scale(ops.as_tensor(self_), w.beta_self)
    return total
