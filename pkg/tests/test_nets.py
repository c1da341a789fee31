import numpy as np
import pytest

from xmodal.forge import PackError, replicate_channels
from xmodal.gradcore import ShapeError, Tensor, no_grad, ops
from xmodal.nets import (
    ArchConfig,
    bundle_arrays,
    forward_classifier,
    forward_discriminator,
    forward_encoder,
    forward_translator,
    init_bundle,
    load_bundle,
    load_params,
    save_bundle,
    save_params,
    single_channel_encoder,
    translator_raw,
)

rng = np.random.default_rng(0)


def test_init_is_seeded():
    a, b, c = init_bundle(1), init_bundle(1), init_bundle(2)
    assert bundle_arrays(a).keys() == bundle_arrays(b).keys()
    assert all(np.array_equal(v, bundle_arrays(b)[k]) for k, v in bundle_arrays(a).items())
    assert a.f_s.content_hash() != c.f_s.content_hash()
    # the target encoder starts as a copy, not an alias
    assert a.f_t.content_hash() == a.f_s.content_hash() and a.f_t.conv1_w is not a.f_s.conv1_w


def test_forward_shapes():
    b = init_bundle(0)
    x = Tensor(rng.normal(size=(5, 3, 16, 16)))
    z = forward_encoder(b.f_s, x)
    assert z.shape == (5, 32)
    assert forward_classifier(b.c, z).shape == (5, 6)
    d = forward_discriminator(b.d1, z).data
    assert d.shape == (5, 1) and np.all((d > 0) & (d < 1))
    t = forward_translator(b.t, Tensor(rng.uniform(size=(5, 1, 16, 16))))
    assert t.shape == (5, 3, 16, 16)


def test_training_mode_standardizes_and_freezes_stats():
    b = init_bundle(0)
    x = rng.normal(size=(8, 3, 16, 16))
    z = forward_encoder(b.f_s, Tensor(x), train=True).data
    np.testing.assert_allclose(z.mean(0), 0, atol=1e-9)
    v = b.f_s.stat_var
    np.testing.assert_allclose(z.var(0), v / (v + b.f_s.bn_eps), rtol=1e-9)
    z_eval = forward_encoder(b.f_s, Tensor(x), train=False).data
    np.testing.assert_allclose(z_eval, z, atol=1e-12)
    with pytest.raises(RuntimeError, match="statistics"):
        forward_encoder(init_bundle(1).f_s, Tensor(x), train=False)


def test_weight_norm_ignores_direction_scale():
    b = init_bundle(0)
    feats = Tensor(rng.normal(size=(4, 32)))
    before = forward_classifier(b.c, feats).data
    b.c.direction.data = b.c.direction.data * 3.7
    np.testing.assert_allclose(forward_classifier(b.c, feats).data, before, atol=1e-12)
    w = b.c.effective_weight().data
    np.testing.assert_allclose(np.linalg.norm(w, axis=1), np.abs(b.c.gain.data))


def test_translator_output_matches_source_standardization():
    mean, std = np.array([0.4, 0.5, 0.6]), np.array([0.2, 0.25, 0.3])
    b = init_bundle(0, channel_mean=mean, channel_std=std)
    x = Tensor(rng.uniform(size=(2, 1, 16, 16)))
    raw = translator_raw(b.t, x).data
    assert np.all((raw > 0) & (raw < 1))
    np.testing.assert_allclose(forward_translator(b.t, x).data,
                               (raw - mean[None, :, None, None]) / std[None, :, None, None])


def test_single_channel_encoder_matches_on_replicated_input():
    mean, std = np.array([0.4, 0.5, 0.6]), np.array([0.2, 0.25, 0.3])
    b = init_bundle(3)
    x1 = rng.uniform(size=(3, 1, 16, 16))
    x3 = replicate_channels(x1, mean, std)
    f1 = single_channel_encoder(b.f_s, mean, std)
    with no_grad():
        a = ops.conv2d(Tensor(x3), b.f_s.conv1_w, b.f_s.conv1_b).data
        c = ops.conv2d(Tensor(x1), f1.conv1_w, f1.conv1_b).data
    assert f1.in_channels == 1
    # zero padding differs at the border only
    np.testing.assert_allclose(c[..., 1:-1, 1:-1], a[..., 1:-1, 1:-1], atol=1e-12)
    assert np.array_equal(f1.conv2_w.data, b.f_s.conv2_w.data)


def test_shape_errors():
    b = init_bundle(0)
    with pytest.raises(ShapeError):
        forward_encoder(b.f_s, Tensor(np.zeros((2, 1, 16, 16))))
    with pytest.raises(ShapeError):
        forward_classifier(b.c, Tensor(np.zeros((2, 7))))
    with pytest.raises(ShapeError):
        forward_discriminator(b.d1, Tensor(np.zeros((2, 5))))
    with pytest.raises(ShapeError):
        forward_translator(b.t, Tensor(np.zeros((2, 3, 16, 16))))


def test_bundle_roundtrip(tmp_path):
    b = init_bundle(4, ArchConfig(n_classes=5))
    forward_encoder(b.f_s, Tensor(rng.normal(size=(4, 3, 16, 16))))
    save_bundle(b, tmp_path / "b")
    c = load_bundle(tmp_path / "b")
    assert c.arch.n_classes == 5
    for part in ("f_s", "f_t", "c", "t", "d1", "d2"):
        assert getattr(c, part).content_hash() == getattr(b, part).content_hash()
    assert np.array_equal(c.f_s.stat_mean, b.f_s.stat_mean)


def test_params_roundtrip_and_kind_check(tmp_path):
    b = init_bundle(0)
    save_params(b.c, tmp_path / "c", "classifier")
    assert load_params(tmp_path / "c", "classifier").content_hash() == b.c.content_hash()
    with pytest.raises(PackError):
        load_params(tmp_path / "c", "encoder")
    with pytest.raises(PackError):
        load_bundle(tmp_path / "c")


def test_clone_is_deep_and_freezing_works():
    b = init_bundle(0)
    c = b.t.clone()
    c.c1_w.data[...] = 0
    assert b.t.c1_w.data.any()
    b.f_s.requires_grad_(False)
    assert not any(p.requires_grad for p in b.f_s.params())
