"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def _eval(f, *args) -> float:
    with no_grad():
        v = f(*args).item()
    if not np.isfinite(v):
        raise FloatingPointError(f"non-finite function value {v}")
    return v


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central| / max(1, |central|)."""
    x0 = np.array(x.data, dtype=np.float64)
    xt = Tensor(x0.copy(), requires_grad=True)
    out = f(xt)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite function value")
    out.backward()
    analytic = xt.grad.reshape(-1) if xt.grad is not None else np.zeros(x0.size)
    flat = x0.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        xp = flat.copy()
        xp[i] += step
        xm = flat.copy()
        xm[i] -= step
        num = (_eval(f, Tensor(xp.reshape(x0.shape))) - _eval(f, Tensor(xm.reshape(x0.shape)))) / (2 * step)
        worst = max(worst, abs(analytic[i] - num) / max(1.0, abs(num)))
    return worst


def grad_check_params(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    n_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Like :func:`grad_check`, but perturbs parameters in place.

    ``f`` closes over ``params``. With ``n_coords`` set, that many coordinates
    per parameter are sampled instead of sweeping every entry.
    """
    for p in params:
        p.grad = None
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite function value")
    out.backward()
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p in params:
        analytic = np.zeros(p.size) if p.grad is None else p.grad.reshape(-1).copy()
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if n_coords is not None and n_coords < flat.size:
            idx = rng.choice(flat.size, size=n_coords, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = _eval(f)
            flat[i] = orig - step
            fm = _eval(f)
            flat[i] = orig
            num = (fp - fm) / (2 * step)
            worst = max(worst, abs(analytic[i] - num) / max(1.0, abs(num)))
        p.grad = None
    return worst
