"""Backward induction for dynamic inference with a known quantity model.

Once the hidden quantity is averaged out of the loss, the problem is a
finite-horizon MDP on the observation space with the estimate as the action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dyninfer.model import Scenario, ensure_valid


@dataclass(frozen=True, eq=False)
class KnownPolicy:
    psi: np.ndarray  # [round, x] -> yhat
    v: np.ndarray  # [round, x]
    q: np.ndarray  # [round, x, yhat]


def bar_loss_table(s: Scenario, quantity=None) -> np.ndarray:
    """``[x, yhat]`` table of the loss averaged over the quantity kernel."""
    k = s.quantity if quantity is None else np.asarray(quantity, dtype=float)
    return np.einsum("xy,xyh->xh", k, s.loss)


def bar_loss(s: Scenario, x: int, yhat: int) -> float:
    return float(bar_loss_table(s)[x, yhat])


def expected_next(kernel: np.ndarray, v_next: np.ndarray) -> np.ndarray:
    """``E[v_next(X') | x, yhat]`` as an ``[x, yhat]`` table.

    Elementwise product then a reduction over the last axis, so the summation
    order over ``x'`` is fixed and independent of BLAS threading.
    """
    return (kernel * v_next[None, None, :]).sum(axis=-1)


def backward_induction(s: Scenario, stage_loss: np.ndarray):
    """Solve the finite-horizon MDP with per-round cost ``stage_loss[x, yhat]``.

    Returns ``(psi, v, q)`` with rounds 0-indexed. Ties in the argmin go to the
    lowest estimate index.
    """
    n = s.horizon
    q = np.empty((n,) + stage_loss.shape)
    v = np.empty((n, stage_loss.shape[0]))
    psi = np.empty((n, stage_loss.shape[0]), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        if i == n - 1:
            q[i] = stage_loss
        else:
            q[i] = stage_loss + expected_next(s.kernel(i), v[i + 1])
        psi[i] = np.argmin(q[i], axis=1)
        v[i] = np.take_along_axis(q[i], psi[i][:, None], axis=1)[:, 0]
    for a in (psi, v, q):
        a.setflags(write=False)
    return psi, v, q


def solve_known(s: Scenario) -> KnownPolicy:
    ensure_valid(s, "known")
    psi, v, q = backward_induction(s, bar_loss_table(s))
    return KnownPolicy(psi, v, q)


def value_known(s: Scenario, p: KnownPolicy) -> float:
    if p.v.shape != (s.horizon, s.n_x):
        raise ValueError(f"policy tables {p.v.shape} do not match scenario {(s.horizon, s.n_x)}")
    return float(s.init @ p.v[0])


def loss_to_go_known(s: Scenario, psi: np.ndarray, i: int, x: int) -> float:
    """Expected loss from round ``i`` to the end under Markov estimators ``psi``, given ``X_i = x``.

    Computed by enumerating every observation path forward from ``(i, x)``
    and summing ``l(x, y, yhat)`` over the quantity kernel on each path.
    """
    if not (0 <= i < s.horizon and 0 <= x < s.n_x):
        raise IndexError(f"(round {i}, x {x}) out of range")
    total = 0.0
    stack = [(i, x, 1.0)]
    while stack:
        j, xj, p = stack.pop()
        yh = int(psi[j][xj])
        total += p * float(np.dot(s.quantity[xj], s.loss[xj, :, yh]))
        if j + 1 < s.horizon:
            row = s.kernel(j)[xj, yh]
            for xn in np.flatnonzero(row):
                stack.append((j + 1, int(xn), p * row[xn]))
    return total
