"""Random finite instances for property tests and experiments."""

from __future__ import annotations

from typing import Optional

import numpy as np

from dyninfer.model import Scenario


def random_rows(rng: np.random.Generator, shape, zero_frac: float = 0.0) -> np.ndarray:
    """Random stochastic rows over the last axis; ``zero_frac`` of entries are zeroed.

    Every row keeps at least one positive entry.
    """
    a = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
    if zero_frac > 0:
        mask = rng.random(a.shape) < zero_frac
        keep = rng.integers(0, shape[-1], size=shape[:-1])
        np.put_along_axis(mask, keep[..., None], False, axis=-1)
        a = np.where(mask, 0.0, a)
        a = a / a.sum(axis=-1, keepdims=True)
    return a


def random_scenario(
    rng: np.random.Generator,
    n_x: int = 2,
    n_y: int = 2,
    n_yhat: int = 2,
    horizon: int = 2,
    n_w: Optional[int] = None,
    shared_kernel: bool = False,
    zero_frac: float = 0.0,
) -> Scenario:
    """A random scenario; ``n_w=None`` gives known-model mode, otherwise a learning one."""
    n_k = 1 if shared_kernel or horizon == 1 else horizon - 1
    init = random_rows(rng, (n_x,), zero_frac)
    kernels = [random_rows(rng, (n_x, n_yhat, n_x), zero_frac) for _ in range(n_k)]
    loss = rng.random((n_x, n_y, n_yhat))
    if n_w is None:
        return Scenario(n_x, n_y, n_yhat, horizon, init, kernels, loss,
                        quantity=random_rows(rng, (n_x, n_y), zero_frac))
    family = random_rows(rng, (n_w, n_x, n_y), zero_frac)
    prior = random_rows(rng, (n_w,))
    return Scenario(n_x, n_y, n_yhat, horizon, init, kernels, loss, family=family, prior=prior)
