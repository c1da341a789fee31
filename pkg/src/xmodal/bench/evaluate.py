"""Accuracy under the four evaluation modes."""

from __future__ import annotations

import numpy as np

from ..adapt.common import source_logits, translate
from ..forge import DatasetBundle, evaluation, replicate_channels
from ..gradcore import Tensor, no_grad
from ..nets import ClassifierParams, ModelBundle, forward_classifier, forward_encoder

MODES = ("source_test", "source_only_target", "tgmb_translated", "target_model")


def accuracy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def target_logits(model: ModelBundle, x: np.ndarray, classifier: ClassifierParams | None = None) -> np.ndarray:
    with no_grad():
        return forward_classifier(classifier or model.c, forward_encoder(model.f_t, Tensor(x), train=False)).data


def evaluate(model: ModelBundle, data: DatasetBundle, mode: str, *, holdout: np.ndarray | None = None,
             classifier: ClassifierParams | None = None) -> float:
    """Fraction of correct argmax predictions.

    ``source_test`` scores the labeled source split (restricted to ``holdout``
    when given); the other modes score the TR target split, whose labels are
    read inside an evaluation context. ``classifier`` overrides ``model.c``
    for the target model (used when the classifier was trained too).
    """
    if mode not in MODES:
        raise ValueError(f"unknown evaluation mode {mode!r}; expected one of {MODES}")
    if mode == "source_test":
        idx = np.arange(len(data.tr_source)) if holdout is None else np.asarray(holdout)
        logits = source_logits(model.f_s, model.c, data.tr_source.images[idx])
        return accuracy_from_logits(logits, data.tr_source.labels[idx])

    x_t = data.tr_target.images
    if mode == "source_only_target":
        logits = source_logits(model.f_s, model.c, replicate_channels(x_t, data.channel_mean, data.channel_std))
    elif mode == "tgmb_translated":
        logits = source_logits(model.f_s, model.c, translate(model.t, x_t))
    else:
        if model.f_t.in_channels != x_t.shape[1]:
            raise ValueError("target model has not been adapted to the target modality")
        logits = target_logits(model, x_t, classifier)
    with evaluation():
        labels = data.tr_target.eval_labels()
    return accuracy_from_logits(logits, labels)
