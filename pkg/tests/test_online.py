from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyninfer import oracle
from dyninfer.errors import CapExceeded, ImpossibleObservation, NodeNotFound
from dyninfer.instances import random_rows, random_scenario
from dyninfer.known_dp import solve_known, value_known
from dyninfer.model import Scenario
from dyninfer.offline import tilde_loss_table
from dyninfer.online import (
    BeliefIndex,
    BeliefTree,
    OnlinePolicy,
    act_online,
    belief_update,
    loss_to_go_online,
    reachable_beliefs,
    solve_online,
    value_online,
)


def _rational_counts(s):
    """Distinct reachable posteriors per round, in exact rational arithmetic."""
    fam = [[[Fraction(float(p)) for p in row] for row in mem] for mem in s.family]
    cur = {tuple(Fraction(float(p)) for p in s.prior)}
    counts = [1]
    for _ in range(s.horizon - 1):
        nxt = set()
        for b in cur:
            for x in range(s.n_x):
                for y in range(s.n_y):
                    joint = [b[w] * fam[w][x][y] for w in range(len(b))]
                    z = sum(joint)
                    if z > 0:
                        nxt.add(tuple(j / z for j in joint))
        counts.append(len(nxt))
        cur = nxt
    return counts


# -- belief update -------------------------------------------------------------------


def test_update_dirac_fixed_point(rng):
    fam = random_rows(rng, (3, 2, 3))
    for w in range(3):
        np.testing.assert_array_equal(belief_update(fam, np.eye(3)[w], 1, 2), np.eye(3)[w])


def test_update_bayes_arithmetic():
    fam = np.array([[[0.1, 0.9]], [[0.9, 0.1]]])
    np.testing.assert_allclose(belief_update(fam, [0.5, 0.5], 0, 1), [0.9, 0.1], atol=1e-15)


def test_update_impossible():
    fam = np.array([[[1.0, 0.0]], [[1.0, 0.0]]])
    with pytest.raises(ImpossibleObservation):
        belief_update(fam, [0.5, 0.5], 0, 1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_martingale_and_normalisation(seed):
    r = np.random.default_rng(seed)
    n_w = int(r.integers(1, 4))
    fam = random_rows(r, (n_w, 3, 3), zero_frac=0.3)
    b = r.dirichlet(np.ones(n_w))
    x = int(r.integers(3))
    pred = b @ fam[:, x, :]
    avg = np.zeros(n_w)
    for y in range(3):
        if pred[y] > 0:
            post = belief_update(fam, b, x, y)
            assert abs(post.sum() - 1.0) <= 1e-12
            avg += pred[y] * post
    np.testing.assert_allclose(avg, b, atol=1e-9, rtol=0)


# -- reachable set -----------------------------------------------------------------------


def test_single_parameter_one_node_per_round(rng):
    s = random_scenario(rng, 3, 3, 2, 4, n_w=1)
    assert reachable_beliefs(s).counts() == [1, 1, 1, 1]


def test_identical_members_one_node_per_round(rng):
    s = random_scenario(rng, 2, 3, 2, 4, n_w=2)
    s = s.with_family(np.stack([s.family[0], s.family[0]]), s.prior)
    tree = reachable_beliefs(s)
    assert tree.counts() == [1, 1, 1, 1]
    np.testing.assert_allclose(tree.beliefs[3][0], s.prior, atol=1e-12)


def test_counts_match_rational_enumeration(rng):
    for _ in range(10):
        s = random_scenario(rng, 2, 2, 2, 3, n_w=2)
        assert reachable_beliefs(s).counts() == _rational_counts(s)
    # Sparse families exercise pruning and posterior collisions.
    for _ in range(10):
        s = random_scenario(rng, 2, 2, 2, 4, n_w=3, zero_frac=0.4)
        assert reachable_beliefs(s).counts() == _rational_counts(s)


def test_transitions_follow_bayes_update(rng):
    s = random_scenario(rng, 2, 3, 2, 3, n_w=3, zero_frac=0.3)
    tree = reachable_beliefs(s)
    assert tree.counts()[0] == 1
    for i in range(2):
        for node in tree.nodes(i):
            pred = np.einsum("w,wxy->xy", node.belief, s.family)
            for x in range(2):
                for y in range(3):
                    nxt = tree.transition(i, node.id, x, y)
                    if pred[x, y] == 0:
                        assert nxt is None
                        continue
                    post = belief_update(s.family, node.belief, x, y)
                    assert np.max(np.abs(tree.beliefs[i + 1][nxt] - post)) <= 1e-9
        b = tree.beliefs[i + 1]
        gaps = [np.max(np.abs(b[j] - b[k])) for j in range(len(b)) for k in range(j)]
        assert not gaps or min(gaps) > 1e-9


def test_node_cap():
    r = np.random.default_rng(5)
    s = random_scenario(r, 3, 3, 2, 3, n_w=3)
    with pytest.raises(CapExceeded) as exc:
        reachable_beliefs(s, node_cap=4)
    assert exc.value.round == 1 and exc.value.count == 5


def test_index_merges_float_drift():
    idx = BeliefIndex(2)
    a = idx.add(np.array([0.3, 0.7]))
    assert idx.add(np.array([0.3 + 4e-17, 0.7 - 4e-17])) == a
    assert idx.add(np.array([0.3 + 0.5e-10, 0.7 - 0.5e-10])) == a
    assert idx.add(np.array([0.3 + 1e-6, 0.7 - 1e-6])) != a


# -- solver ------------------------------------------------------------------------------


def test_single_parameter_matches_known(rng):
    s = random_scenario(rng, 3, 2, 3, 3, n_w=1)
    on = solve_online(s)
    kn = solve_known(s.with_quantity(s.family[0]))
    for i in range(3):
        np.testing.assert_allclose(on.q[i][0], kn.q[i], atol=1e-12)
        np.testing.assert_array_equal(on.psi[i][0], kn.psi[i])
    assert abs(value_online(s, on) - value_known(s.with_quantity(s.family[0]), kn)) <= 1e-12


def test_single_round_prior_predictive(rng):
    s = random_scenario(rng, 3, 3, 3, 1, n_w=3)
    on = solve_online(s)
    np.testing.assert_array_equal(on.psi[0][0], np.argmin(tilde_loss_table(s.family, s.loss, s.prior), axis=1))


def test_recursion_as_written(rng):
    s = random_scenario(rng, 2, 2, 2, 3, n_w=2, zero_frac=0.2)
    p = solve_online(s)
    for i in range(2):
        for k, b in enumerate(p.tree.beliefs[i]):
            pred = np.einsum("w,wxy->xy", b, s.family)
            tl = tilde_loss_table(s.family, s.loss, b)
            for x in range(2):
                for yh in range(2):
                    cont = 0.0
                    for y in range(2):
                        if pred[x, y] == 0:
                            continue
                        nxt = p.transition(i, k, x, y)
                        cont += pred[x, y] * sum(s.kernel(i)[x, yh, xn] * p.v[i + 1][nxt, xn] for xn in range(2))
                    assert abs(p.q[i][k, x, yh] - (tl[x, yh] + cont)) <= 1e-12


def test_online_matches_brute_force(rng):
    for _ in range(3):
        s = random_scenario(rng, 2, 2, 2, 2, n_w=2)
        v = value_online(s, solve_online(s))
        _, best = oracle.brute_force_optimum(s, "history-online")
        assert abs(v - best) <= 1e-9


def test_value_zero_loss_and_joint_enumeration(rng):
    s = random_scenario(rng, 2, 3, 2, 3, n_w=2)
    assert value_online(s.with_loss(np.zeros((2, 3, 2))), solve_online(s.with_loss(np.zeros((2, 3, 2))))) == 0
    p = solve_online(s)
    t = oracle.strategy_from_policy(s, p)
    assert abs(oracle.exact_loss(s, t) - value_online(s, p)) <= 1e-9


def test_uninformative_family_matches_known_every_round(rng):
    s = random_scenario(rng, 3, 2, 2, 3, n_w=3)
    s = s.with_family(np.stack([s.family[1]] * 3), s.prior)
    on = solve_online(s)
    kn = solve_known(s.with_quantity(s.family[1]))
    for i in range(3):
        np.testing.assert_allclose(on.v[i][0], kn.v[i], atol=1e-9)


# -- acting ------------------------------------------------------------------------------


def test_act_empty_history(rng):
    s = random_scenario(rng, 3, 2, 2, 3, n_w=2)
    p = solve_online(s)
    for x in range(3):
        yh, b = act_online(p, [], x)
        assert yh == p.psi[0][0, x]
        np.testing.assert_array_equal(b, s.prior)


def test_act_single_parameter_ignores_history(rng):
    s = random_scenario(rng, 2, 3, 2, 3, n_w=1)
    p = solve_online(s)
    for hist in ([(0, 1)], [(1, 2)], [(0, 0)]):
        assert act_online(p, hist, 1)[0] == p.psi[1][0, 1]


def test_act_errors(rng):
    fam = np.array([[[1.0, 0.0], [0.5, 0.5]], [[1.0, 0.0], [0.2, 0.8]]])
    s = Scenario(2, 2, 2, 2, [0.5, 0.5], [np.full((2, 2, 2), 0.5)], rng.random((2, 2, 2)),
                 family=fam, prior=[0.5, 0.5])
    p = solve_online(s)
    with pytest.raises(ImpossibleObservation):
        act_online(p, [(0, 1)], 0)
    with pytest.raises(ValueError):
        act_online(p, [(0, 0), (1, 1)], 0)
    # A tree built from another prior lacks the folded belief.
    other = solve_online(s.with_family(fam, [0.9, 0.1]))
    tree = BeliefTree((p.tree.beliefs[0], other.tree.beliefs[1]), p.tree.transitions,
                      (p.tree.indexes[0], other.tree.indexes[1]))
    hacked = OnlinePolicy(tree, p.family, p.psi, p.v, p.q)
    with pytest.raises(NodeNotFound):
        act_online(hacked, [(1, 1)], 0)


def test_act_agrees_with_oracle_optimum(rng):
    for _ in range(5):
        s = random_scenario(rng, 2, 2, 2, 2, n_w=2)
        p = solve_online(s)
        table, _ = oracle.brute_force_optimum(s, "history-online")
        for x0 in range(2):
            for y0 in range(2):
                pred = s.prior @ s.family[:, x0, y0]
                if pred == 0:
                    continue
                for x1 in range(2):
                    prev = table.act((0, (x0,), ()))
                    if s.init[x0] == 0 or s.kernel(0)[x0, prev, x1] == 0:
                        continue
                    yh, b = act_online(p, [(x0, y0)], x1)
                    q = np.sort(p.q[1][p.find_node(1, b), x1])
                    if q[1] - q[0] > 1e-9:
                        assert table.act((1, (x0, x1), (y0,))) == yh


# -- loss-to-go ----------------------------------------------------------------------


def test_loss_to_go_equals_value_and_dominance(rng):
    s = random_scenario(rng, 2, 2, 2, 3, n_w=2)
    p = solve_online(s)
    for i in range(3):
        for k in range(p.tree.beliefs[i].shape[0]):
            for x in range(2):
                assert abs(loss_to_go_online(s, p, i, k, x) - p.v[i][k, x]) <= 1e-9
    strict = False
    for _ in range(10):
        psi = [a.copy() for a in p.psi]
        i = int(rng.integers(3))
        k = int(rng.integers(psi[i].shape[0]))
        x = int(rng.integers(2))
        psi[i][k, x] = 1 - psi[i][k, x]
        bad = type(p)(p.tree, p.family, tuple(psi), p.v, p.q)
        for j in range(3):
            for kk in range(p.tree.beliefs[j].shape[0]):
                for xx in range(2):
                    ltg = loss_to_go_online(s, bad, j, kk, xx)
                    assert ltg >= p.v[j][kk, xx] - 1e-9
                    strict |= ltg > p.v[j][kk, xx] + 1e-9
    assert strict
