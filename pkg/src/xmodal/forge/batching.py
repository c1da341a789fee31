"""Seeded mini-batch iteration."""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np


def _check(n: int, batch_size: int) -> None:
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2 for batch standardization, got {batch_size}")
    if n < batch_size:
        raise ValueError(f"population of {n} is smaller than one batch of {batch_size}")


def epoch_indices(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One shuffled pass over ``range(n)``; the short tail batch is dropped."""
    _check(n, batch_size)
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


def batches(arrays: np.ndarray | Sequence[np.ndarray], batch_size: int, seed: int,
            epochs: int = 1) -> Iterator:
    """Yield index-aligned batches from one array or a tuple of arrays."""
    single = isinstance(arrays, np.ndarray)
    cols = (arrays,) if single else tuple(arrays)
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("arrays must share their first dimension")
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        for idx in epoch_indices(n, batch_size, rng):
            yield cols[0][idx] if single else tuple(c[idx] for c in cols)


class BatchStream:
    """Endless batch source that reshuffles at every epoch boundary."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self.epoch = 0
        self._queue: list[np.ndarray] = []
        _check(n, batch_size)

    @property
    def batches_per_epoch(self) -> int:
        return self.n // self.batch_size

    def next(self) -> np.ndarray:
        if not self._queue:
            self._queue = epoch_indices(self.n, self.batch_size, self.rng)
            self.epoch += 1
        return self._queue.pop(0)
