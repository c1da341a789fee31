"""Independent reference implementations used as test oracles.

Written with plain Python loops (or plain numpy, no autodiff) so they share
no code with the package.
"""

import math

import numpy as np


def _cos_dist(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    return 1.0 - dot / (na * nb)


def _assign(feats, centroids):
    labels = []
    for f in feats:
        best, best_d = None, None
        for k, c in enumerate(centroids):
            if c is None:
                continue
            d = _cos_dist(f, c)
            if best is None or d < best_d:  # strict: ties keep the smaller class index
                best, best_d = k, d
        labels.append(best)
    return labels


def _centroids(feats, weights, n_classes):
    dim = len(feats[0])
    out = []
    for k in range(n_classes):
        mass = sum(w[k] for w in weights)
        if mass == 0:
            out.append(None)
            continue
        c = [sum(w[k] * f[j] for w, f in zip(weights, feats)) / mass for j in range(dim)]
        out.append(c if any(v != 0 for v in c) else None)
    return out


def brute_pseudo_label(feats, probs):
    """Two passes: soft-weighted centroids, then hard-label centroids."""
    feats = [list(map(float, f)) for f in feats]
    probs = [list(map(float, p)) for p in probs]
    k = len(probs[0])
    labels = _assign(feats, _centroids(feats, probs, k))
    onehot = [[1.0 if j == lab else 0.0 for j in range(k)] for lab in labels]
    return _assign(feats, _centroids(feats, onehot, k))


# --- plain numpy loss references -------------------------------------------


def np_rec(a, b):
    return float(np.mean(np.sum((a - b).reshape(len(a), -1) ** 2, axis=1)))


def np_two_pop(real, fake):
    return float(np.mean(np.log(real)) + np.mean(np.log(1 - fake)))


def np_entropy_rows(p):
    return float(np.mean(-np.sum(p * np.log(p), axis=1)))


def np_im(p):
    ent = np_entropy_rows(p)
    pb = p.mean(0)
    div = float(-np.sum(pb * np.log(pb)))
    return ent, div, ent - div


def np_kl(s, t):
    return float(np.mean(np.sum(s * (np.log(s) - np.log(t)), axis=1)))


def np_ce(p, labels):
    return float(-np.mean(np.log(p[np.arange(len(p)), labels])))
