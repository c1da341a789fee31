"""Translator training guided by paired TI data and the frozen source model.

Each iteration alternates two updates:

1. translator step on reconstruction + adversarial + information-maximization
   terms, with the discriminators held fixed;
2. discriminator step on the features of the images translated at the start
   of the iteration (detached), with the translator held fixed.

The discriminator objectives are the two-population log-likelihoods,
maximized by the discriminators. The translator uses the non-saturating
flip: it minimizes -log D(fake) for the population it is trying to pass off.
"""

from __future__ import annotations

import numpy as np

from ..forge import DatasetBundle, training_stage
from ..forge.batching import BatchStream
from ..gradcore import OptimState, Tensor, no_grad, ops, sgd_step
from ..losses import EPS, l_d1, l_d2, l_im, l_rec, l_tgmb
from ..nets import (
    DiscriminatorParams,
    ModelBundle,
    TranslatorParams,
    forward_classifier,
    forward_discriminator,
    forward_encoder,
    forward_translator,
)
from .common import RunState, check_finite, frozen_features
from .config import TrainConfig


LOGGED = ("l_rec", "l_ent", "l_div", "l_im", "total")


def _neg_log(p: Tensor) -> Tensor:
    return -ops.mean(ops.log(ops.clamp(p, EPS, 1.0)))


def translator_objective(bundle: ModelBundle, x_ti_s: np.ndarray, x_ti_t: np.ndarray,
                         x_t: np.ndarray, cfg: TrainConfig) -> dict[str, Tensor]:
    """Translator-side loss terms for one TI batch and one TR target batch."""
    w = cfg.weights
    t = bundle.t
    tti = forward_translator(t, Tensor(x_ti_t))
    ttr = forward_translator(t, Tensor(x_t))
    rec = l_rec(Tensor(x_ti_s), tti)
    use_adv = w.alpha_d > 0 and (cfg.use_d1 or cfg.use_d2)
    need_tr_feats = w.alpha_im > 0 or (use_adv and cfg.use_d2 and cfg.d2_push == "symmetric")
    f_tti = forward_encoder(bundle.f_s, tti, train=False) if use_adv else None
    f_ttr = forward_encoder(bundle.f_s, ttr, train=False) if need_tr_feats else None
    adv = None
    if use_adv:
        terms = []
        if cfg.use_d1:
            terms.append(_neg_log(forward_discriminator(bundle.d1, f_tti)))
        if cfg.use_d2:
            terms.append(_neg_log(forward_discriminator(bundle.d2, f_tti)))
            if cfg.d2_push == "symmetric":
                terms.append(_neg_log(1.0 - forward_discriminator(bundle.d2, f_ttr)))
        adv = terms[0]
        for term in terms[1:]:
            adv = adv + term
    ent = div = im = None
    if w.alpha_im > 0:
        probs = ops.softmax(forward_classifier(bundle.c, f_ttr))
        ent, div, im = l_im(probs)
    total = l_tgmb(rec, adv if adv is not None else 0.0, im if im is not None else 0.0, w)
    # detached features for the discriminator step
    with no_grad():
        if f_tti is None and use_adv:
            f_tti = forward_encoder(bundle.f_s, tti, train=False)
        if f_ttr is None and use_adv and cfg.use_d2:
            f_ttr = forward_encoder(bundle.f_s, ttr, train=False)
    return {"l_rec": rec, "adv": adv, "l_ent": ent, "l_div": div, "l_im": im, "total": total,
            "f_tti": None if f_tti is None else f_tti.data.copy(),
            "f_ttr": None if f_ttr is None else f_ttr.data.copy()}


def discriminator_objective(bundle: ModelBundle, f_ti_s: np.ndarray | None, f_tti: np.ndarray,
                            f_ttr: np.ndarray | None) -> dict:
    """Two-population log-likelihoods on detached features (the caller maximizes them).

    A discriminator whose population is passed as None is skipped.
    """
    out = {"means": {}}
    if f_ti_s is not None:
        d1_real = forward_discriminator(bundle.d1, Tensor(f_ti_s))
        d1_fake = forward_discriminator(bundle.d1, Tensor(f_tti))
        out["l_d1"] = l_d1(d1_real, d1_fake)
        out["means"].update(d1_real=float(d1_real.data.mean()), d1_fake=float(d1_fake.data.mean()))
    if f_ttr is not None:
        d2_tr = forward_discriminator(bundle.d2, Tensor(f_ttr))
        d2_ti = forward_discriminator(bundle.d2, Tensor(f_tti))
        out["l_d2"] = l_d2(d2_tr, d2_ti)
        out["means"].update(d2_tr=float(d2_tr.data.mean()), d2_ti=float(d2_ti.data.mean()))
    return out


def run_tgmb(data: DatasetBundle, bundle: ModelBundle, cfg: TrainConfig) -> tuple[TranslatorParams, RunState]:
    """Train ``bundle.t`` (and the discriminators) in place; F_s and C stay frozen."""
    if cfg.stage != "tgmb":
        raise ValueError(f"run_tgmb needs a tgmb config, got stage {cfg.stage!r}")
    for part in (bundle.f_s, bundle.c):
        part.requires_grad_(False)
    ti = data.ti_pairs
    x_t = data.tr_target.unlabeled().images
    f_ti_s_all = frozen_features(bundle.f_s, ti.source)

    t_params = bundle.t.params()
    d_params = (bundle.d1.params() if cfg.use_d1 else []) + (bundle.d2.params() if cfg.use_d2 else [])
    t_opt = OptimState(cfg.lr_translator, cfg.momentum)
    d_opt = OptimState(cfg.lr_discriminator, cfg.momentum)
    train_d = cfg.weights.alpha_d > 0 and (cfg.use_d1 or cfg.use_d2)
    ti_stream = BatchStream(len(ti), cfg.batch_size, np.random.default_rng([cfg.seed, 2]))
    tr_stream = BatchStream(len(x_t), cfg.batch_size, np.random.default_rng([cfg.seed, 3]))
    state = RunState("tgmb")
    with training_stage("tgmb"):
        for it in range(cfg.iterations):
            i_ti, i_tr = ti_stream.next(), tr_stream.next()

            _set_trainable(bundle.d1, bundle.d2, False)
            parts = translator_objective(bundle, ti.source[i_ti], ti.target[i_ti], x_t[i_tr], cfg)
            check_finite("tgmb", it, **{k: v for k, v in parts.items() if k in LOGGED})
            parts["total"].backward()
            sgd_step(t_params, t_opt)

            d_terms = {}
            means = {}
            if train_d:
                _set_trainable(bundle.d1, bundle.d2, True)
                d = discriminator_objective(bundle, f_ti_s_all[i_ti] if cfg.use_d1 else None,
                                            parts["f_tti"], parts["f_ttr"] if cfg.use_d2 else None)
                d_terms = {k: d[k] for k in ("l_d1", "l_d2") if k in d}
                check_finite("tgmb", it, **d_terms)
                loss = None
                for term in d_terms.values():
                    loss = -term if loss is None else loss - term
                loss.backward()
                sgd_step(d_params, d_opt)
                means = d["means"]
            state.log({"l_rec": parts["l_rec"], "l_ent": parts["l_ent"], "l_div": parts["l_div"],
                       "l_im": parts["l_im"], "total": parts["total"], **d_terms}, **means)
    _set_trainable(bundle.d1, bundle.d2, True)
    return bundle.t, state


def _set_trainable(d1: DiscriminatorParams, d2: DiscriminatorParams, flag: bool) -> None:
    d1.requires_grad_(flag)
    d2.requires_grad_(flag)
