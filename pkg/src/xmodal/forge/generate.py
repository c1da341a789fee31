"""Procedural paired-modality benchmark.

Every sample comes from a latent scene: a class (pattern family + palette)
plus per-sample jitter. The source view is a colored 3-channel rendering;
the target view is a single-channel, class-agnostic transform of the
scene's luminance whose severity is set by ``gamma``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import hygiene
from .pack import read_pack, write_pack

FAMILIES = ("stripes", "checker", "blobs", "rings", "gradient", "cross")
PALETTE_SLOTS = 2
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GenConfig:
    n_s: int = 600
    n_t: int = 600
    n_ti: int = 1200
    k_tr: int = 6
    k_ti: int = 6
    noise: float = 0.05
    gamma: float = 1.0
    image_size: int = 16
    palette_overlap: float = 1.0
    color_jitter: float = 0.15

    def validate(self) -> None:
        if min(self.n_s, self.n_t, self.n_ti) < 2:
            raise ValueError("every population needs at least 2 samples")
        if self.k_tr < 2 or self.k_ti < 1:
            raise ValueError("need k_tr >= 2 and k_ti >= 1")
        if self.k_tr + self.k_ti > len(FAMILIES) * PALETTE_SLOTS:
            raise ValueError(
                f"k_tr + k_ti = {self.k_tr + self.k_ti} exceeds the {len(FAMILIES)} pattern families "
                f"x {PALETTE_SLOTS} palette slots available")
        if self.noise < 0 or self.gamma < 0:
            raise ValueError("noise and gamma must be non-negative")
        if self.color_jitter < 0:
            raise ValueError("color_jitter must be non-negative")
        if not 0.0 <= self.palette_overlap <= 1.0:
            raise ValueError("palette_overlap must lie in [0, 1]")


@dataclass(frozen=True)
class SceneSpec:
    class_id: int
    family: str
    palette: tuple[tuple[float, float, float], ...]
    frequency: float
    orientation: float


# ---------------------------------------------------------------------------
# dataset containers


@dataclass(frozen=True, eq=False)
class LabeledSplit:
    images: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.images)


@dataclass(frozen=True, eq=False)
class UnlabeledView:
    images: np.ndarray

    def __len__(self) -> int:
        return len(self.images)


@dataclass(frozen=True, eq=False)
class TargetSplit:
    """Unlabeled target-modality TR data; labels exist only for evaluation."""

    images: np.ndarray
    _labels: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.images)

    def unlabeled(self) -> UnlabeledView:
        return UnlabeledView(self.images)

    def eval_labels(self) -> np.ndarray:
        hygiene.request_labels("tr_target")
        return self._labels.copy()


@dataclass(frozen=True, eq=False)
class PairedSplit:
    source: np.ndarray
    target: np.ndarray
    latent: np.ndarray  # class id of the shared scene, per pair

    def __len__(self) -> int:
        return len(self.source)


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    tr_source: LabeledSplit
    tr_target: TargetSplit
    ti_pairs: PairedSplit
    channel_mean: np.ndarray
    channel_std: np.ndarray
    seed: int
    config: GenConfig
    scenes: tuple[SceneSpec, ...] = ()

    @property
    def n_classes(self) -> int:
        return self.config.k_tr


# ---------------------------------------------------------------------------
# rendering


def _palettes(rng: np.random.Generator, cfg: GenConfig) -> list[np.ndarray]:
    """Three colors per class; background/foreground luminance kept apart."""
    n = cfg.k_tr + cfg.k_ti

    def draw():
        while True:
            cols = rng.uniform(0.05, 0.95, size=(3, 3))
            lum = cols @ _LUMA
            if abs(lum[0] - lum[1]) >= 0.3:
                return cols

    tr = [draw() for _ in range(cfg.k_tr)]
    # TI class j borrows the palette of a TR class with a different pattern
    # family; each color is swapped for a fresh one with prob 1 - overlap.
    ti = []
    for j in range(cfg.k_ti):
        base = tr[(j + len(FAMILIES) // 2) % cfg.k_tr].copy()
        fresh = draw()
        for c in range(3):
            if rng.uniform() >= cfg.palette_overlap:
                base[c] = fresh[c]
        ti.append(base)
    assert len(tr) + len(ti) == n
    return tr + ti


def make_scenes(rng: np.random.Generator, cfg: GenConfig) -> tuple[SceneSpec, ...]:
    palettes = _palettes(rng, cfg)
    scenes = []
    for c in range(cfg.k_tr + cfg.k_ti):
        fam = FAMILIES[c % len(FAMILIES)]
        scenes.append(SceneSpec(
            class_id=c,
            family=fam,
            palette=tuple(tuple(float(v) for v in col) for col in palettes[c]),
            frequency=float(rng.uniform(2.0, 3.5)),
            orientation=float(rng.uniform(0, np.pi)),
        ))
    return tuple(scenes)


def _pattern(rng: np.random.Generator, scene: SceneSpec, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / size
    freq = scene.frequency * rng.uniform(0.9, 1.1)
    theta = scene.orientation + rng.normal(0, 0.15)
    phase = rng.uniform(0, 2 * np.pi)
    cx, cy = rng.uniform(0.3, 0.7, size=2)
    fam = scene.family
    if fam == "stripes":
        m = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (np.cos(theta) * x + np.sin(theta) * y) + phase)
    elif fam == "checker":
        px, py = rng.uniform(0, 2 * np.pi, size=2)
        m = 0.5 + 0.5 * np.tanh(4 * np.sin(2 * np.pi * freq * x + px) * np.sin(2 * np.pi * freq * y + py))
    elif fam == "blobs":
        m = np.zeros((size, size))
        for _ in range(3):
            bx, by = rng.uniform(0.1, 0.9, size=2)
            m += np.exp(-((x - bx) ** 2 + (y - by) ** 2) / (2 * 0.1 ** 2))
        m = np.clip(m, 0, 1)
    elif fam == "rings":
        r = np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
        m = 0.5 + 0.5 * np.cos(2 * np.pi * freq * 1.5 * r + phase)
    elif fam == "gradient":
        u = np.cos(theta) * (x - 0.5) + np.sin(theta) * (y - 0.5)
        m = np.clip(u / 1.2 + 0.5 + rng.normal(0, 0.05), 0, 1)
    elif fam == "cross":
        w = 0.08
        m = np.maximum(np.exp(-((x - cx) ** 2) / (2 * w ** 2)), np.exp(-((y - cy) ** 2) / (2 * w ** 2)))
    else:  # pragma: no cover
        raise ValueError(fam)
    return m


def _render_clean(rng: np.random.Generator, scene: SceneSpec, size: int, jitter: float = 0.0) -> np.ndarray:
    """Noise-free RGB in [0, 1], shape [3, H, W]."""
    m = _pattern(rng, scene, size)
    pal = np.array(scene.palette)
    if jitter > 0:
        pal = np.clip(pal + rng.normal(0, jitter, size=pal.shape), 0.0, 1.0)
    c0, c1, c2 = (c[:, None, None] for c in pal)
    img = c0 * (1 - m) + c1 * m
    y, x = np.mgrid[0:size, 0:size] / size
    ax, ay = rng.uniform(0.15, 0.85, size=2)
    spot = 0.6 * np.exp(-((x - ax) ** 2 + (y - ay) ** 2) / (2 * 0.08 ** 2))
    img = img * (1 - spot) + c2 * spot
    return np.clip(img, 0.0, 1.0)


def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / size
    f = np.zeros((size, size))
    for _ in range(3):
        kx, ky = rng.normal(0, 1.5, size=2)
        f += np.sin(2 * np.pi * (kx * x + ky * y) + rng.uniform(0, 2 * np.pi))
    return f / np.sqrt(3 * 0.5)


def modality_transform(rgb: np.ndarray, rng: np.random.Generator, gamma: float, noise: float) -> np.ndarray:
    """Class-agnostic map from a clean RGB scene to the target view in [0, 1].

    gamma in [0, 1] morphs plain luminance into vignetted inverted luminance
    (dark scenes read bright, as near objects do in a depth map); gamma above 1 additionally mixes in a smooth random
    field, drowning the scene as gamma grows.
    """
    size = rgb.shape[-1]
    lum = np.tensordot(_LUMA, rgb, axes=1)
    a = min(gamma, 1.0)
    b = max(gamma - 1.0, 0.0)
    y, x = np.mgrid[0:size, 0:size] / (size - 1)
    vignette = 1.0 - 0.35 * ((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.5
    response = 1.0 - lum
    out = (1 - a) * lum + a * vignette * response
    if b > 0:
        out = out + b * 0.5 * _smooth_field(rng, size)
    out = out + noise * rng.normal(size=out.shape)
    return np.clip(out, 0.0, 1.0)[None]


def generate(seed: int, cfg: GenConfig = GenConfig()) -> DatasetBundle:
    cfg.validate()
    root = np.random.SeedSequence(seed)
    ss_world, ss_src, ss_tgt, ss_ti = root.spawn(4)
    scenes = make_scenes(np.random.default_rng(ss_world), cfg)
    size = cfg.image_size

    def population(ss, n: int, classes: np.ndarray, views: str):
        rng = np.random.default_rng(ss)
        labels = classes[np.arange(n) % len(classes)]
        rng.shuffle(labels)
        src = np.empty((n, 3, size, size)) if "s" in views else None
        tgt = np.empty((n, 1, size, size)) if "t" in views else None
        for i, c in enumerate(labels):
            clean = _render_clean(rng, scenes[c], size, cfg.color_jitter)
            if src is not None:
                src[i] = np.clip(clean + cfg.noise * rng.normal(size=clean.shape), 0.0, 1.0)
            if tgt is not None:
                tgt[i] = modality_transform(clean, rng, cfg.gamma, cfg.noise)
        return labels, src, tgt

    tr_classes = np.arange(cfg.k_tr)
    ti_classes = np.arange(cfg.k_tr, cfg.k_tr + cfg.k_ti)
    ys, xs, _ = population(ss_src, cfg.n_s, tr_classes, "s")
    yt, _, xt = population(ss_tgt, cfg.n_t, tr_classes, "t")
    yti, xti_s, xti_t = population(ss_ti, cfg.n_ti, ti_classes, "st")

    mean = xs.mean(axis=(0, 2, 3))
    std = xs.std(axis=(0, 2, 3))
    standardize = lambda a: (a - mean[None, :, None, None]) / std[None, :, None, None]  # noqa: E731

    def frozen(a):
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        return a

    return DatasetBundle(
        tr_source=LabeledSplit(frozen(standardize(xs)), frozen(ys)),
        tr_target=TargetSplit(frozen(xt), frozen(yt)),
        ti_pairs=PairedSplit(frozen(standardize(xti_s)), frozen(xti_t), frozen(yti)),
        channel_mean=frozen(mean),
        channel_std=frozen(std),
        seed=seed,
        config=cfg,
        scenes=scenes,
    )


def replicate_channels(target: np.ndarray, channel_mean, channel_std) -> np.ndarray:
    """1-channel target in [0, 1] -> 3-channel input under source standardization."""
    rep = np.repeat(target, 3, axis=1)
    return (rep - np.asarray(channel_mean)[None, :, None, None]) / np.asarray(channel_std)[None, :, None, None]


# ---------------------------------------------------------------------------
# persistence


def save_dataset(data: DatasetBundle, directory: str | Path) -> Path:
    directory = Path(directory)
    write_pack(directory / "tr_source", {"images": data.tr_source.images, "labels": data.tr_source.labels})
    write_pack(directory / "tr_target", {"images": data.tr_target.images,
                                         "eval_labels": data.tr_target._labels})
    write_pack(directory / "ti_pairs", {"source": data.ti_pairs.source, "target": data.ti_pairs.target,
                                        "latent": data.ti_pairs.latent})
    meta = {
        "seed": data.seed,
        "spec": asdict(data.config),
        "gamma": data.config.gamma,
        "channel_mean": [float(v) for v in data.channel_mean],
        "channel_std": [float(v) for v in data.channel_std],
        "scenes": [asdict(s) for s in data.scenes],
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return directory


def load_dataset(directory: str | Path) -> DatasetBundle:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no dataset at {directory} (missing meta.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    src = read_pack(directory / "tr_source")
    tgt = read_pack(directory / "tr_target")
    ti = read_pack(directory / "ti_pairs")

    def frozen(a):
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        return a

    scenes = tuple(SceneSpec(**{**s, "palette": tuple(tuple(c) for c in s["palette"])}) for s in meta["scenes"])
    return DatasetBundle(
        tr_source=LabeledSplit(frozen(src["images"]), frozen(src["labels"].astype(np.int64))),
        tr_target=TargetSplit(frozen(tgt["images"]), frozen(tgt["eval_labels"].astype(np.int64))),
        ti_pairs=PairedSplit(frozen(ti["source"]), frozen(ti["target"]), frozen(ti["latent"].astype(np.int64))),
        channel_mean=frozen(np.array(meta["channel_mean"])),
        channel_std=frozen(np.array(meta["channel_std"])),
        seed=int(meta["seed"]),
        config=GenConfig(**meta["spec"]),
        scenes=scenes,
    )


def with_gamma(cfg: GenConfig, gamma: float) -> GenConfig:
    return replace(cfg, gamma=gamma)
