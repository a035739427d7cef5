"""Bayesian offline learning: a posterior from training data, then a fixed-belief DP.

No information about the parameter arrives during inference, so the posterior
stays constant and the problem reduces to an MDP on ``x`` whose per-round
cost is the belief-averaged loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from dyninfer.errors import ImpossibleDataset
from dyninfer.known_dp import backward_induction
from dyninfer.model import Dataset, Scenario, enumerate_datasets, ensure_valid, renormalize


@dataclass(frozen=True, eq=False)
class OfflinePolicy:
    belief: np.ndarray
    psi: np.ndarray  # [round, x] -> yhat
    v: np.ndarray  # [round, x]
    q: np.ndarray  # [round, x, yhat]
    dataset: Optional[Dataset] = None


def _check_belief(family, b):
    b = np.asarray(b, dtype=float)
    if b.shape != (family.shape[0],):
        raise ValueError(f"belief of length {b.size} does not match |W|={family.shape[0]}")
    if np.any(b < 0) or abs(b.sum() - 1.0) > 1e-9:
        raise ValueError("belief must be non-negative and sum to 1")
    return b


def posterior_from_dataset(family, prior, d: Dataset) -> np.ndarray:
    """Posterior over the parameter given imitation-style training data.

    The observation marginals of the data do not depend on the parameter, so
    the likelihood is the product of ``family[w, x_j, y_j]``. Log-likelihoods
    are accumulated in dataset order.
    """
    family = np.asarray(family, dtype=float)
    prior = np.asarray(prior, dtype=float)
    loglik = np.zeros(family.shape[0])
    with np.errstate(divide="ignore"):
        for x, y in d.pairs:
            if not (0 <= x < family.shape[1] and 0 <= y < family.shape[2]):
                raise IndexError(f"pair ({x}, {y}) outside the spaces")
            loglik = loglik + np.log(family[:, x, y])
    support = (prior > 0) & np.isfinite(loglik)
    if not np.any(support):
        raise ImpossibleDataset("every parameter assigns zero likelihood to the dataset")
    scaled = np.where(support, np.exp(loglik - loglik[support].max()), 0.0)
    post = prior * scaled
    return renormalize(post)


def tilde_loss_table(family, loss, belief) -> np.ndarray:
    """``[x, yhat]`` table of the loss averaged over ``w ~ belief`` and ``y ~ family[w, x]``."""
    return np.einsum("w,wxy,xyh->xh", np.asarray(belief, dtype=float), family, loss)


def tilde_loss(family, loss, belief, x: int, yhat: int) -> float:
    family = np.asarray(family, dtype=float)
    b = np.asarray(belief, dtype=float)
    total = 0.0
    for w in range(family.shape[0]):
        total += b[w] * float(np.dot(family[w, x], loss[x, :, yhat]))
    return total


def solve_offline(s: Scenario, belief) -> OfflinePolicy:
    ensure_valid(s, "learning")
    b = _check_belief(s.family, belief)
    psi, v, q = backward_induction(s, tilde_loss_table(s.family, s.loss, b))
    b = b.copy()
    b.setflags(write=False)
    return OfflinePolicy(b, psi, v, q)


def offline_pipeline(s: Scenario, d: Dataset) -> OfflinePolicy:
    ensure_valid(s, "learning")
    post = posterior_from_dataset(s.family, s.prior, d)
    p = solve_offline(s, post)
    return OfflinePolicy(p.belief, p.psi, p.v, p.q, dataset=d)


def value_offline(s: Scenario, p: OfflinePolicy) -> float:
    if p.v.shape != (s.horizon, s.n_x):
        raise ValueError(f"policy tables {p.v.shape} do not match scenario {(s.horizon, s.n_x)}")
    return float(s.init @ p.v[0])


def expected_value_offline(s: Scenario, m: int) -> float:
    """Minimum inference loss averaged over training sets of size ``m``.

    Sums ``P(Z^m = d) * E[V_1(pi_m(d), X_1)]`` over every dataset of positive
    probability under the prior mixture.
    """
    ensure_valid(s, "learning")
    total = 0.0
    for d, lik in enumerate_datasets(s, m):
        pd = float(s.prior @ lik)
        if pd > 0:
            total += pd * value_offline(s, solve_offline(s, s.prior * lik / pd))
    return total


def loss_to_go_offline(s: Scenario, p: OfflinePolicy, i: int, x: int) -> float:
    """Expected loss from round ``i`` to the end given the posterior ``p.belief`` and ``X_i = x``.

    Forward enumeration over ``w`` and every observation path, with the raw
    loss summed over the quantity at each round; ``p.psi`` supplies the
    estimates, so perturbed policies are evaluated as given.
    """
    if not (0 <= i < s.horizon and 0 <= x < s.n_x):
        raise IndexError(f"(round {i}, x {x}) out of range")
    total = 0.0
    for w in np.flatnonzero(p.belief):
        member = s.family[w]
        stack = [(i, x, float(p.belief[w]))]
        while stack:
            j, xj, prob = stack.pop()
            yh = int(p.psi[j][xj])
            total += prob * float(np.dot(member[xj], s.loss[xj, :, yh]))
            if j + 1 < s.horizon:
                row = s.kernel(j)[xj, yh]
                for xn in np.flatnonzero(row):
                    stack.append((j + 1, int(xn), prob * row[xn]))
    return total
