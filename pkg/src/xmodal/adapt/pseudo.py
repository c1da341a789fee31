"""Nearest-centroid pseudo labels in feature space (two clustering passes)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PseudoLabels:
    labels: np.ndarray
    centroids: np.ndarray
    active: np.ndarray
    rounds: int


def _cosine_assign(feats: np.ndarray, centroids: np.ndarray, active: np.ndarray) -> np.ndarray:
    fn = feats / np.linalg.norm(feats, axis=1, keepdims=True)
    cnorm = np.linalg.norm(centroids, axis=1, keepdims=True)
    usable = active & (cnorm[:, 0] > 0)
    cn = np.where(cnorm > 0, centroids / np.where(cnorm > 0, cnorm, 1.0), 0.0)
    dist = 1.0 - fn @ cn.T
    dist[:, ~usable] = np.inf
    return np.argmin(dist, axis=1)


def pseudo_label(feats: np.ndarray, probs: np.ndarray, rounds: int = 2) -> PseudoLabels:
    """Soft-weighted centroids, cosine assignment, then hard-label refinement."""
    feats = np.asarray(feats, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if feats.ndim != 2 or probs.ndim != 2 or len(feats) != len(probs):
        raise ValueError(f"pseudo_label: shapes {feats.shape} and {probs.shape} do not align")
    if np.any(np.linalg.norm(feats, axis=1) == 0):
        raise ValueError("pseudo_label: zero feature vector, cosine distance undefined")
    weights = probs
    for _ in range(rounds):
        mass = weights.sum(axis=0)
        active = mass > 0
        centroids = (weights.T @ feats) / np.where(active, mass, 1.0)[:, None]
        labels = _cosine_assign(feats, centroids, active)
        weights = np.eye(probs.shape[1])[labels]
    return PseudoLabels(labels=labels, centroids=centroids, active=active, rounds=rounds)
