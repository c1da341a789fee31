from dataclasses import replace

import numpy as np
import pytest

from xmodal.adapt import (
    MissingArtifactError,
    NonFiniteLoss,
    RunState,
    SourceAccuracyError,
    TargetTerms,
    TrainConfig,
    default_config,
    holdout_split,
    run_tgkt,
    run_tgmb,
    teacher_probs,
    train_source,
    train_target_model,
)
from xmodal.adapt.common import translate
from xmodal.adapt.tgmb import discriminator_objective, translator_objective
from xmodal.forge import hygiene
from xmodal.gradcore import Tensor
from xmodal.losses import l_rec
from xmodal.nets import init_bundle


@pytest.fixture(scope="module")
def source(tiny_data):
    cfg = replace(default_config("source", 5), iterations=40, batch_size=16)
    return train_source(tiny_data, cfg, enforce_floor=False)


def _bundle(data, source):
    f_s, c, _ = source
    b = init_bundle(5, channel_mean=data.channel_mean, channel_std=data.channel_std)
    b.f_s, b.c = f_s.clone(), c.clone()
    return b


def _tgmb_cfg(**kw):
    return replace(default_config("tgmb", 5), iterations=kw.pop("iterations", 8), batch_size=8, **kw)


def test_holdout_split_is_seeded_and_disjoint():
    a, b = holdout_split(50, 0.1, 3)
    assert len(b) == 5 and not set(a) & set(b) and len(a) + len(b) == 50
    assert np.array_equal(holdout_split(50, 0.1, 3)[1], b)


def test_source_floor(tiny_data):
    cfg = replace(default_config("source", 5), iterations=2, batch_size=8)
    with pytest.raises(SourceAccuracyError, match="floor"):
        train_source(tiny_data, cfg)


def test_source_learns(tiny_data, source):
    _, _, rep = source
    assert rep["history"].series("l_self")[-5:].mean() < rep["history"].series("l_self")[:5].mean()


def test_reconstruction_only_improves_heldout_rec(tiny_data, source):
    b = _bundle(tiny_data, source)
    ti = tiny_data.ti_pairs
    held = slice(len(ti) - 8, len(ti))

    def held_rec():
        return l_rec(Tensor(ti.source[held]), Tensor(translate(b.t, ti.target[held]))).item()

    before = held_rec()
    cfg = _tgmb_cfg(iterations=60).with_weights(alpha_d=0.0, alpha_im=0.0)
    _, state = run_tgmb(tiny_data, b, cfg)
    assert held_rec() < before
    assert state.series("l_d1").size == 0  # no discriminator step without adversarial terms


def test_tgmb_keeps_source_frozen_and_trains_discriminators(tiny_data, source):
    b = _bundle(tiny_data, source)
    frozen = (b.f_s.content_hash(), b.c.content_hash())
    d1, t = b.d1.content_hash(), b.t.content_hash()
    _, state = run_tgmb(tiny_data, b, _tgmb_cfg())
    assert (b.f_s.content_hash(), b.c.content_hash()) == frozen
    assert b.d1.content_hash() != d1 and b.t.content_hash() != t
    assert len(state.history) == 8 and state.series("l_d1").size == 8 and state.series("l_d2").size == 8
    assert {"d1_real", "d1_fake", "d2_tr", "d2_ti"} <= set(state.extras[0])


def test_translator_step_leaves_discriminators_untouched(tiny_data, source):
    """Alternation: translator gradients never land on D, and D's loss never reaches T."""
    b = _bundle(tiny_data, source)
    b.d1.requires_grad_(False)
    b.d2.requires_grad_(False)
    ti, x_t = tiny_data.ti_pairs, tiny_data.tr_target.unlabeled().images
    parts = translator_objective(b, ti.source[:8], ti.target[:8], x_t[:8], _tgmb_cfg())
    parts["total"].backward()
    assert all(p.grad is None for p in b.d1.params() + b.d2.params())
    assert all(p.grad is not None for p in b.t.params())
    for p in b.t.params():
        p.grad = None
    b.d1.requires_grad_(True)
    b.d2.requires_grad_(True)
    f_ti_s = np.random.default_rng(0).normal(size=(8, 32))
    d = discriminator_objective(b, f_ti_s, parts["f_tti"], parts["f_ttr"])
    (-(d["l_d1"] + d["l_d2"])).backward()
    assert all(p.grad is None for p in b.t.params())
    assert all(p.grad is not None for p in b.d1.params() + b.d2.params())


def test_disabled_discriminator_is_skipped(tiny_data, source):
    b = _bundle(tiny_data, source)
    d2 = b.d2.content_hash()
    _, state = run_tgmb(tiny_data, b, _tgmb_cfg(use_d2=False))
    assert b.d2.content_hash() == d2 and state.series("l_d2").size == 0


def test_tgmb_is_deterministic(tiny_data, source):
    runs = []
    for _ in range(2):
        b = _bundle(tiny_data, source)
        run_tgmb(tiny_data, b, _tgmb_cfg())
        runs.append(b.t.content_hash())
    assert runs[0] == runs[1]


def test_tgmb_wrong_stage(tiny_data, source):
    with pytest.raises(ValueError):
        run_tgmb(tiny_data, _bundle(tiny_data, source), default_config("tgkt"))


@pytest.mark.parametrize("frozen", [True, False])
def test_tgkt_frozen_integrity(tiny_data, source, frozen):
    b = _bundle(tiny_data, source)
    t, _ = run_tgmb(tiny_data, b, _tgmb_cfg())
    before = (b.f_s.content_hash(), b.c.content_hash(), t.content_hash())
    cfg = replace(default_config("tgkt", 5), iterations=10, batch_size=8, classifier_frozen=frozen)
    f_t, c_t, state = run_tgkt(tiny_data, b, t, cfg)
    assert (b.f_s.content_hash(), b.c.content_hash(), t.content_hash()) == before
    assert f_t.in_channels == 1
    assert (c_t is b.c) == frozen
    assert state.series("l_kd").size == 10 and state.pseudo_hist


def test_tgkt_needs_translator(tiny_data, source):
    with pytest.raises(MissingArtifactError, match="translator"):
        run_tgkt(tiny_data, _bundle(tiny_data, source), None, default_config("tgkt"))
    with pytest.raises(MissingArtifactError):
        train_target_model(tiny_data, _bundle(tiny_data, source), default_config("tgkt"), TargetTerms(), None)


def test_pseudo_labels_refresh_once_per_epoch(tiny_data, source):
    b = _bundle(tiny_data, source)
    cfg = replace(default_config("tgkt", 5), iterations=13, batch_size=8)
    teacher = teacher_probs(b, b.t, tiny_data.tr_target.unlabeled().images)
    _, _, state = train_target_model(tiny_data, b, cfg, TargetTerms(), teacher)
    per_epoch = len(tiny_data.tr_target) // 8
    assert [e for e, _ in state.pseudo_hist] == list(range(0, 13 // per_epoch + 1))
    assert state.pseudo_hist[0][1] == 1.0


def test_baseline_terms_run_without_teacher(tiny_data, source):
    b = _bundle(tiny_data, source)
    cfg = replace(default_config("tgkt", 5), iterations=4, batch_size=8)
    _, _, state = train_target_model(tiny_data, b, cfg, TargetTerms(kd=0, f=1.0, self_=0, im=1.0), None)
    assert state.series("l_kd").size == 0 and state.series("l_f").size == 4 and state.series("l_im").size == 4


def test_non_finite_loss_names_the_term(tiny_data, source):
    b = _bundle(tiny_data, source)
    b.t.out_w.data = b.t.out_w.data * np.nan
    with pytest.raises(NonFiniteLoss) as exc:
        run_tgmb(tiny_data, b, _tgmb_cfg())
    assert exc.value.term == "l_rec" and exc.value.stage == "tgmb" and exc.value.iteration == 0


def test_runstate_log():
    s = RunState("x")
    s.log({"l_rec": Tensor(2.0), "l_kd": None})
    assert s.history[0]["l_rec"] == 2.0 and s.history[0]["l_kd"] == ""
    with pytest.raises(NonFiniteLoss):
        s.log({"l_f": float("inf")})


@pytest.mark.parametrize("kw", [dict(stage="x"), dict(iterations=0), dict(batch_size=1), dict(lr_target=0),
                                dict(d2_push="both"), dict(kd_direction="up")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_config_roundtrip():
    cfg = default_config("tgkt", 3).with_weights(beta_f=0.5)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"bogus": 1})


def test_training_never_reads_target_labels(tiny_data, source):
    before = len(hygiene.access_log())
    b = _bundle(tiny_data, source)
    t, _ = run_tgmb(tiny_data, b, _tgmb_cfg(iterations=3))
    run_tgkt(tiny_data, b, t, replace(default_config("tgkt", 5), iterations=3, batch_size=8))
    assert hygiene.access_log()[before:] == []
