"""The five desk-scale networks: encoders, classifier, translator, discriminators."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .gradcore import Tensor, ops
from .gradcore.tensor import ShapeError


@dataclass(frozen=True)
class ArchConfig:
    image_size: int = 16
    source_channels: int = 3
    target_channels: int = 1
    enc_c1: int = 8
    enc_c2: int = 16
    feat_dim: int = 32
    bottleneck_dim: int = 32
    disc_hidden: int = 32
    trans_hidden: int = 8
    n_classes: int = 6
    bn_eps: float = 1e-5


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


class _Params:
    """Shared plumbing: trainable list, named arrays, hashing."""

    _trainable: tuple[str, ...] = ()
    _buffers: tuple[str, ...] = ()

    def params(self) -> list[Tensor]:
        return [getattr(self, n) for n in self._trainable]

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {n: getattr(self, n).data for n in self._trainable}
        for n in self._buffers:
            val = getattr(self, n)
            if val is not None:
                out[n] = np.asarray(val, dtype=np.float64)
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for n in self._trainable:
            getattr(self, n).data = np.array(arrays[n], dtype=np.float64)
        for n in self._buffers:
            setattr(self, n, None if n not in arrays else np.array(arrays[n], dtype=np.float64))

    def content_hash(self) -> str:
        return content_hash(self.named_arrays())

    def clone(self):
        return copy.deepcopy(self)

    def requires_grad_(self, flag: bool):
        for p in self.params():
            p.requires_grad = flag
            p.grad = None
        return self


def content_hash(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        h.update(name.encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass(eq=False)
class EncoderParams(_Params):
    conv1_w: Tensor
    conv1_b: Tensor
    conv2_w: Tensor
    conv2_b: Tensor
    proj_w: Tensor
    proj_b: Tensor
    bott_w: Tensor
    bott_b: Tensor
    bn_gamma: Tensor
    bn_beta: Tensor
    bn_eps: float = 1e-5
    # frozen statistics from the most recent training-mode batch
    stat_mean: np.ndarray | None = None
    stat_var: np.ndarray | None = None

    _trainable = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "proj_w", "proj_b",
                  "bott_w", "bott_b", "bn_gamma", "bn_beta")
    _buffers = ("stat_mean", "stat_var")

    @property
    def in_channels(self) -> int:
        return self.conv1_w.shape[1]


@dataclass(eq=False)
class ClassifierParams(_Params):
    direction: Tensor  # V, [K, d_b]
    gain: Tensor  # g, [K]

    _trainable = ("direction", "gain")

    def effective_weight(self) -> Tensor:
        norms = ops.sqrt(ops.sum(self.direction * self.direction, axis=1, keepdims=True))
        return self.direction / norms * ops.reshape(self.gain, (-1, 1))


@dataclass(eq=False)
class TranslatorParams(_Params):
    c1_w: Tensor
    c1_b: Tensor
    c2_w: Tensor
    c2_b: Tensor
    out_w: Tensor
    out_b: Tensor
    channel_mean: np.ndarray = field(default_factory=lambda: np.full(3, 0.5))
    channel_std: np.ndarray = field(default_factory=lambda: np.full(3, 0.25))

    _trainable = ("c1_w", "c1_b", "c2_w", "c2_b", "out_w", "out_b")
    _buffers = ("channel_mean", "channel_std")


@dataclass(eq=False)
class DiscriminatorParams(_Params):
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    _trainable = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass(eq=False)
class ModelBundle:
    f_s: EncoderParams
    f_t: EncoderParams
    c: ClassifierParams
    t: TranslatorParams
    d1: DiscriminatorParams
    d2: DiscriminatorParams
    arch: ArchConfig = field(default_factory=ArchConfig)

    def parts(self) -> dict[str, _Params]:
        return {"f_s": self.f_s, "f_t": self.f_t, "c": self.c, "t": self.t, "d1": self.d1, "d2": self.d2}


# ---------------------------------------------------------------------------
# initialization


def init_encoder(rng: np.random.Generator, arch: ArchConfig, in_channels: int) -> EncoderParams:
    c1, c2, d, db = arch.enc_c1, arch.enc_c2, arch.feat_dim, arch.bottleneck_dim
    return EncoderParams(
        conv1_w=_he_uniform(rng, (c1, in_channels, 3, 3), in_channels * 9),
        conv1_b=_zeros(c1),
        conv2_w=_he_uniform(rng, (c2, c1, 3, 3), c1 * 9),
        conv2_b=_zeros(c2),
        proj_w=_he_uniform(rng, (c2, d), c2),
        proj_b=_zeros(d),
        bott_w=_fan_in_uniform(rng, (d, db), d),
        bott_b=_zeros(db),
        bn_gamma=Tensor(np.ones(db), requires_grad=True),
        bn_beta=_zeros(db),
        bn_eps=arch.bn_eps,
    )


def init_classifier(rng: np.random.Generator, arch: ArchConfig) -> ClassifierParams:
    v = _fan_in_uniform(rng, (arch.n_classes, arch.bottleneck_dim), arch.bottleneck_dim)
    return ClassifierParams(direction=v, gain=Tensor(np.ones(arch.n_classes), requires_grad=True))


def init_translator(rng: np.random.Generator, arch: ArchConfig,
                    channel_mean=None, channel_std=None) -> TranslatorParams:
    h = arch.trans_hidden
    return TranslatorParams(
        c1_w=_he_uniform(rng, (h, arch.target_channels, 3, 3), arch.target_channels * 9),
        c1_b=_zeros(h),
        c2_w=_he_uniform(rng, (h, h, 3, 3), h * 9),
        c2_b=_zeros(h),
        out_w=_fan_in_uniform(rng, (arch.source_channels, h, 1, 1), h),
        out_b=_zeros(arch.source_channels),
        channel_mean=np.full(arch.source_channels, 0.5) if channel_mean is None else np.asarray(channel_mean, float),
        channel_std=np.full(arch.source_channels, 0.25) if channel_std is None else np.asarray(channel_std, float),
    )


def init_discriminator(rng: np.random.Generator, arch: ArchConfig) -> DiscriminatorParams:
    db, h = arch.bottleneck_dim, arch.disc_hidden
    return DiscriminatorParams(
        w1=_he_uniform(rng, (db, h), db), b1=_zeros(h),
        w2=_he_uniform(rng, (h, h), h), b2=_zeros(h),
        w3=_fan_in_uniform(rng, (h, 1), h), b3=_zeros(1),
    )


def init_bundle(seed: int, arch: ArchConfig = ArchConfig(), channel_mean=None, channel_std=None) -> ModelBundle:
    """Deterministic fresh bundle; ``f_t`` starts as an exact copy of ``f_s``."""
    root = np.random.SeedSequence(seed)
    enc_ss, c_ss, t_ss, d1_ss, d2_ss = root.spawn(5)
    f_s = init_encoder(np.random.default_rng(enc_ss), arch, arch.source_channels)
    return ModelBundle(
        f_s=f_s,
        f_t=f_s.clone(),
        c=init_classifier(np.random.default_rng(c_ss), arch),
        t=init_translator(np.random.default_rng(t_ss), arch, channel_mean, channel_std),
        d1=init_discriminator(np.random.default_rng(d1_ss), arch),
        d2=init_discriminator(np.random.default_rng(d2_ss), arch),
        arch=arch,
    )


def single_channel_encoder(f_s: EncoderParams, channel_mean, channel_std) -> EncoderParams:
    """Copy a 3-channel encoder into one that reads raw 1-channel images.

    The first conv absorbs channel replication and the source standardization
    ((x - mean) / std per channel), so on a replicated input the copy matches
    the original everywhere except the zero-padded border.
    """
    mean = np.asarray(channel_mean, float)
    std = np.asarray(channel_std, float)
    out = f_s.clone().requires_grad_(True)
    w = f_s.conv1_w.data  # [O, C, 3, 3]
    out.conv1_w = Tensor((w / std[None, :, None, None]).sum(axis=1, keepdims=True), requires_grad=True)
    shift = (w * (mean / std)[None, :, None, None]).sum(axis=(1, 2, 3))
    out.conv1_b = Tensor(f_s.conv1_b.data - shift, requires_grad=True)
    return out


# ---------------------------------------------------------------------------
# forward passes


def forward_encoder(p: EncoderParams, batch: Tensor, train: bool = True) -> Tensor:
    """Bottleneck features, batch-standardized.

    In training mode the batch's own statistics are used and stored on ``p``;
    otherwise the stored statistics are reused.
    """
    if batch.data.ndim != 4 or batch.shape[1] != p.in_channels:
        raise ShapeError("forward_encoder", batch.shape, p.conv1_w.shape,
                         detail=f"encoder expects {p.in_channels} input channels")
    h = ops.relu(ops.conv2d(batch, p.conv1_w, p.conv1_b))
    h = ops.relu(ops.conv2d(h, p.conv2_w, p.conv2_b))
    h = ops.global_avg_pool(h)
    h = ops.relu(h @ p.proj_w + p.proj_b)
    z = h @ p.bott_w + p.bott_b
    if train:
        zhat, mu, var = ops.batch_standardize(z, p.bn_eps)
        p.stat_mean, p.stat_var = mu, var
    else:
        if p.stat_mean is None:
            raise RuntimeError("encoder has no frozen statistics; run it in training mode first")
        zhat = (z - p.stat_mean) * (1.0 / np.sqrt(p.stat_var + p.bn_eps))
    return zhat * p.bn_gamma + p.bn_beta


def encoder_prestandardized(p: EncoderParams, batch: Tensor) -> Tensor:
    """Bottleneck activations before batch standardization."""
    h = ops.relu(ops.conv2d(batch, p.conv1_w, p.conv1_b))
    h = ops.relu(ops.conv2d(h, p.conv2_w, p.conv2_b))
    h = ops.relu(ops.global_avg_pool(h) @ p.proj_w + p.proj_b)
    return h @ p.bott_w + p.bott_b


def forward_classifier(p: ClassifierParams, feats: Tensor) -> Tensor:
    if feats.data.ndim != 2 or feats.shape[1] != p.direction.shape[1]:
        raise ShapeError("forward_classifier", feats.shape, p.direction.shape)
    return feats @ p.effective_weight().T


def translator_raw(p: TranslatorParams, batch: Tensor) -> Tensor:
    """Sigmoid output of the translator, before standardization; in (0, 1)."""
    if batch.data.ndim != 4 or batch.shape[1] != p.c1_w.shape[1]:
        raise ShapeError("forward_translator", batch.shape, p.c1_w.shape)
    h = ops.relu(ops.conv2d(batch, p.c1_w, p.c1_b))
    h = ops.relu(ops.conv2d(h, p.c2_w, p.c2_b))
    return ops.sigmoid(ops.conv2d(h, p.out_w, p.out_b))


def forward_translator(p: TranslatorParams, batch: Tensor) -> Tensor:
    s = translator_raw(p, batch)
    mean = p.channel_mean.reshape(1, -1, 1, 1)
    inv_std = 1.0 / p.channel_std.reshape(1, -1, 1, 1)
    return (s - mean) * inv_std


def forward_discriminator(p: DiscriminatorParams, feats: Tensor) -> Tensor:
    if feats.data.ndim != 2 or feats.shape[1] != p.w1.shape[0]:
        raise ShapeError("forward_discriminator", feats.shape, p.w1.shape)
    h = ops.relu(feats @ p.w1 + p.b1)
    h = ops.relu(h @ p.w2 + p.b2)
    return ops.sigmoid(h @ p.w3 + p.b3)


# ---------------------------------------------------------------------------
# persistence


def bundle_arrays(b: ModelBundle) -> dict[str, np.ndarray]:
    out = {}
    for part, params in b.parts().items():
        for name, arr in params.named_arrays().items():
            out[f"{part}.{name}"] = arr
    return out


def save_bundle(b: ModelBundle, directory: str | Path) -> None:
    from .forge.pack import write_pack

    write_pack(directory, bundle_arrays(b), meta={"kind": "model_bundle", "arch": asdict(b.arch),
                                                  "bn_eps": b.f_s.bn_eps})


def load_bundle(directory: str | Path) -> ModelBundle:
    from .forge.pack import PackError, read_pack

    arrays, meta = read_pack(directory, with_meta=True)
    if meta.get("kind") != "model_bundle":
        raise PackError("manifest", "not a model bundle")
    arch = ArchConfig(**meta["arch"])
    b = init_bundle(0, arch)
    for part, params in b.parts().items():
        prefix = part + "."
        sub = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
        missing = [n for n in params._trainable if n not in sub]
        if missing:
            raise PackError(f"{part}.{missing[0]}", "missing from bundle")
        params.load_arrays(sub)
    return b


def save_params(p: _Params, directory: str | Path, kind: str) -> None:
    from .forge.pack import write_pack

    write_pack(directory, p.named_arrays(), meta={"kind": kind, "bn_eps": getattr(p, "bn_eps", None)})


def load_params(directory: str | Path, kind: str) -> _Params:
    from .forge.pack import PackError, read_pack

    arrays, meta = read_pack(directory, with_meta=True)
    if meta.get("kind") != kind:
        raise PackError("manifest", f"expected {kind}, found {meta.get('kind')}")
    cls = {"encoder": EncoderParams, "classifier": ClassifierParams,
           "translator": TranslatorParams, "discriminator": DiscriminatorParams}[kind]
    kwargs = {}
    for f in fields(cls):
        if f.name in cls._trainable:
            if f.name not in arrays:
                raise PackError(f.name, "missing from pack")
            kwargs[f.name] = Tensor(arrays[f.name], requires_grad=True)
    obj = cls(**kwargs)
    for n in cls._buffers:
        if n in arrays:
            setattr(obj, n, arrays[n])
    if kind == "encoder" and meta.get("bn_eps") is not None:
        obj.bn_eps = float(meta["bn_eps"])
    return obj
