"""Bayesian online learning over the reachable belief set.

The true quantity is revealed after every round, so the posterior over the
parameter moves with each ``(x, y)``. The pair ``(belief, x)`` is a
controlled Markov chain: the belief moves by a deterministic Bayes update
on ``(x, y)`` and the observation moves by the kernel on ``(x, yhat)``. With
a finite parameter set and a finite horizon the reachable beliefs form a
finite tree, which is enumerated exactly and solved by backward induction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from dyninfer.errors import CapExceeded, ImpossibleObservation, NodeNotFound
from dyninfer.model import Scenario, ensure_valid

DEDUP_TOL = 1e-9
GRID = 1e-10
NODE_CAP = 10**6
_MAX_PROBE_DIM = 8


def belief_update(family, belief, x: int, y: int) -> np.ndarray:
    family = np.asarray(family, dtype=float)
    b = np.asarray(belief, dtype=float)
    joint = b * family[:, x, y]
    z = joint.sum()
    if z <= 0:
        raise ImpossibleObservation(f"(x={x}, y={y}) has zero probability under the current belief")
    post = joint / z
    return post / post.sum()


class BeliefIndex:
    """Deduplicating store of beliefs for one round.

    Beliefs are bucketed on a ``GRID`` lattice; a lookup probes the bucket and
    its immediate neighbours and accepts the first stored belief within
    ``DEDUP_TOL`` in the max norm. Neighbour probing is skipped above
    ``_MAX_PROBE_DIM`` parameters, where only the exact bucket is checked.
    """

    def __init__(self, n_w: int):
        self.beliefs = []
        self._buckets = {}
        if n_w <= _MAX_PROBE_DIM:
            self._offsets = [np.array(o) for o in itertools.product((-1, 0, 1), repeat=n_w)]
        else:
            self._offsets = [np.zeros(n_w, dtype=np.int64)]

    def __len__(self):
        return len(self.beliefs)

    @staticmethod
    def _cell(b):
        return np.rint(np.asarray(b) / GRID).astype(np.int64)

    def find(self, b) -> Optional[int]:
        cell = self._cell(b)
        for off in self._offsets:
            for k in self._buckets.get(tuple(cell + off), ()):
                if np.max(np.abs(self.beliefs[k] - b)) <= DEDUP_TOL:
                    return k
        return None

    def add(self, b) -> int:
        k = self.find(b)
        if k is None:
            k = len(self.beliefs)
            self.beliefs.append(np.asarray(b, dtype=float))
            self._buckets.setdefault(tuple(self._cell(b)), []).append(k)
        return k


@dataclass(frozen=True)
class BeliefNode:
    id: int
    belief: np.ndarray
    round: int


@dataclass(frozen=True, eq=False)
class BeliefTree:
    beliefs: tuple  # per round: [node, w]
    transitions: tuple  # per round < n-1: [node, x, y] -> next node id, -1 where pruned
    indexes: tuple

    def counts(self):
        return [b.shape[0] for b in self.beliefs]

    def node(self, i, k) -> BeliefNode:
        return BeliefNode(k, self.beliefs[i][k], i)

    def nodes(self, i):
        return [self.node(i, k) for k in range(self.beliefs[i].shape[0])]

    def transition(self, i, node, x, y) -> Optional[int]:
        t = int(self.transitions[i][node, x, y])
        return None if t < 0 else t


def reachable_beliefs(s: Scenario, node_cap: int = NODE_CAP) -> BeliefTree:
    """Enumerate the posteriors reachable at each round from the prior.

    Zero-probability ``(x, y)`` branches are pruned. Node ids are assigned in
    order of discovery: parent node, then ``x``, then ``y``.
    """
    ensure_valid(s, "learning")
    fam = s.family
    n_w = fam.shape[0]
    root = BeliefIndex(n_w)
    root.add(np.array(s.prior, dtype=float))
    indexes = [root]
    transitions = []
    for i in range(s.horizon - 1):
        cur = indexes[-1].beliefs
        nxt = BeliefIndex(n_w)
        trans = np.full((len(cur), s.n_x, s.n_y), -1, dtype=np.int64)
        for k, b in enumerate(cur):
            joint = b[:, None, None] * fam  # [w, x, y]
            marg = joint.sum(axis=0)
            for x in range(s.n_x):
                for y in range(s.n_y):
                    if marg[x, y] <= 0:
                        continue
                    post = joint[:, x, y] / marg[x, y]
                    trans[k, x, y] = nxt.add(post / post.sum())
                    if len(nxt) > node_cap:
                        raise CapExceeded("reachable belief nodes", len(nxt), node_cap, round=i + 1)
        trans.setflags(write=False)
        transitions.append(trans)
        indexes.append(nxt)
    beliefs = []
    for idx in indexes:
        arr = np.array(idx.beliefs)
        arr.setflags(write=False)
        beliefs.append(arr)
    return BeliefTree(tuple(beliefs), tuple(transitions), tuple(indexes))


@dataclass(frozen=True, eq=False)
class OnlinePolicy:
    tree: BeliefTree
    family: np.ndarray
    psi: tuple  # per round: [node, x] -> yhat
    v: tuple  # per round: [node, x]
    q: tuple  # per round: [node, x, yhat]

    @property
    def nodes(self):
        return [self.tree.nodes(i) for i in range(len(self.psi))]

    def transition(self, i, node, x, y):
        return self.tree.transition(i, node, x, y)

    def find_node(self, i, belief) -> Optional[int]:
        return self.tree.indexes[i].find(np.asarray(belief, dtype=float))


def solve_online(s: Scenario, node_cap: int = NODE_CAP) -> OnlinePolicy:
    """Backward induction over ``(belief node, x)``.

    ``q[i][k, x, yhat]`` is the belief-averaged loss plus, for ``i < n-1``,
    ``sum_y m_k(y|x) sum_x' K(x'|x, yhat) v[i+1][next(k, x, y), x']`` where
    ``m_k`` is the predictive mixture of node ``k``.
    """
    tree = reachable_beliefs(s, node_cap)
    fam, loss, n = s.family, s.loss, s.horizon
    psi, v, q = [None] * n, [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        B = tree.beliefs[i]
        qi = np.einsum("nw,wxy,xyh->nxh", B, fam, loss)
        if i < n - 1:
            pred = np.einsum("nw,wxy->nxy", B, fam)
            trans = tree.transitions[i]
            v_next = v[i + 1][np.maximum(trans, 0)]  # [node, x, y, x']
            v_next = np.where((trans >= 0)[..., None], v_next, 0.0)
            K = s.kernel(i)  # [x, yhat, x']
            cont = (K[None, :, None, :, :] * v_next[:, :, :, None, :]).sum(axis=-1)  # [node, x, y, yhat]
            qi = qi + (pred[..., None] * cont).sum(axis=2)
        pi = np.argmin(qi, axis=2)
        vi = np.take_along_axis(qi, pi[..., None], axis=2)[..., 0]
        for a in (qi, pi, vi):
            a.setflags(write=False)
        psi[i], v[i], q[i] = pi, vi, qi
    return OnlinePolicy(tree, s.family, tuple(psi), tuple(v), tuple(q))


def value_online(s: Scenario, p: OnlinePolicy) -> float:
    if len(p.v) != s.horizon or p.v[0].shape != (1, s.n_x):
        raise ValueError("policy tables do not match scenario")
    return float(s.init @ p.v[0][0])


def act_online(p: OnlinePolicy, history, x_now: int):
    """Optimal estimate at the current round given the revealed ``(x, y)`` history.

    Returns ``(yhat, belief)``.
    """
    i = len(history)
    if i >= len(p.psi):
        raise ValueError(f"history of length {i} leaves no round to play (horizon {len(p.psi)})")
    b = p.tree.beliefs[0][0]
    for x, y in history:
        b = belief_update(p.family, b, x, y)
    k = p.find_node(i, b)
    if k is None:
        raise NodeNotFound(f"belief {b.tolist()} matches no node at round {i + 1}")
    return int(p.psi[i][k, x_now]), p.tree.beliefs[i][k]


def loss_to_go_online(s: Scenario, p: OnlinePolicy, i: int, node: int, x: int) -> float:
    """Expected loss from round ``i`` to the end given belief node ``node`` and ``X_i = x``.

    Enumerates ``w`` from the node's belief, then every ``(y, x')`` path forward,
    following the recorded belief transitions and the policy's estimates.
    """
    if not (0 <= i < s.horizon and 0 <= node < p.tree.beliefs[i].shape[0] and 0 <= x < s.n_x):
        raise IndexError(f"(round {i}, node {node}, x {x}) out of range")
    b = p.tree.beliefs[i][node]
    total = 0.0
    for w in np.flatnonzero(b):
        member = s.family[w]
        stack = [(i, node, x, float(b[w]))]
        while stack:
            j, k, xj, prob = stack.pop()
            yh = int(p.psi[j][k, xj])
            for y in np.flatnonzero(member[xj]):
                py = prob * member[xj, y]
                total += py * s.loss[xj, y, yh]
                if j + 1 < s.horizon:
                    k_next = p.transition(j, k, xj, int(y))
                    row = s.kernel(j)[xj, yh]
                    for xn in np.flatnonzero(row):
                        stack.append((j + 1, k_next, int(xn), py * row[xn]))
    return float(total)
