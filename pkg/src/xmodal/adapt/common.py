from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..gradcore import Tensor, no_grad, ops
from ..nets import ClassifierParams, EncoderParams, TranslatorParams, forward_classifier, forward_encoder, forward_translator

METRIC_COLUMNS = ("iteration", "l_rec", "l_d1", "l_d2", "l_ent", "l_div", "l_im",
                  "l_kd", "l_f", "l_self", "total", "wall_ms")


class NonFiniteLoss(FloatingPointError):
    def __init__(self, stage: str, iteration: int, term: str):
        self.stage, self.iteration, self.term = stage, iteration, term
        super().__init__(f"{stage}: non-finite {term} at iteration {iteration}")


@dataclass
class RunState:
    """Per-iteration loss history for one training stage."""

    stage: str
    iteration: int = 0
    history: list[dict] = field(default_factory=list)
    extras: list[dict] = field(default_factory=list)
    pseudo_hist: list[tuple[int, float]] = field(default_factory=list)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def log(self, terms: dict[str, Tensor | float | None], **extras) -> None:
        row = {c: "" for c in METRIC_COLUMNS}
        row["iteration"] = self.iteration
        for name, val in terms.items():
            if val is None:
                continue
            v = val.item() if isinstance(val, Tensor) else float(val)
            if not np.isfinite(v):
                raise NonFiniteLoss(self.stage, self.iteration, name)
            row[name] = v
        row["wall_ms"] = round((time.perf_counter() - self._t0) * 1000.0, 3)
        self.history.append(row)
        if extras:
            self.extras.append({"iteration": self.iteration, **extras})
        self.iteration += 1

    def series(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.history if r[name] != ""], dtype=float)


def check_finite(stage: str, iteration: int, **terms: Tensor | None) -> None:
    for name, t in terms.items():
        if t is not None and not np.all(np.isfinite(t.data)):
            raise NonFiniteLoss(stage, iteration, name)


def source_logits(f_s: EncoderParams, c: ClassifierParams, x: np.ndarray) -> np.ndarray:
    with no_grad():
        return forward_classifier(c, forward_encoder(f_s, Tensor(x), train=False)).data


def translate(t: TranslatorParams, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    with no_grad():
        return np.concatenate([forward_translator(t, Tensor(x[i:i + chunk])).data
                               for i in range(0, len(x), chunk)])


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def frozen_features(f: EncoderParams, x: np.ndarray) -> np.ndarray:
    with no_grad():
        return forward_encoder(f, Tensor(x), train=False).data


def full_batch_features(f: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Features with statistics of the whole population; stored stats are left untouched."""
    saved = (f.stat_mean, f.stat_var)
    try:
        with no_grad():
            return forward_encoder(f, Tensor(x), train=True).data
    finally:
        f.stat_mean, f.stat_var = saved


def probs_of(logits: Tensor) -> Tensor:
    return ops.softmax(logits)
