import numpy as np
import pytest

from conftest import zero_one_loss
from dyninfer import oracle
from dyninfer.errors import ImpossibleDataset
from dyninfer.instances import random_rows, random_scenario
from dyninfer.known_dp import bar_loss_table, solve_known, value_known
from dyninfer.model import Dataset, Scenario, generate_dataset, mixture_kernel
from dyninfer.offline import (
    expected_value_offline,
    loss_to_go_offline,
    offline_pipeline,
    posterior_from_dataset,
    solve_offline,
    tilde_loss,
    tilde_loss_table,
    value_offline,
)
from dyninfer.online import belief_update


def _random_dataset(rng, s, m):
    return Dataset([(int(rng.integers(s.n_x)), int(rng.integers(s.n_y))) for _ in range(m)])


# -- posterior -----------------------------------------------------------------------


def test_empty_dataset_keeps_prior(rng):
    s = random_scenario(rng, 2, 2, 2, 2, n_w=3)
    np.testing.assert_array_equal(posterior_from_dataset(s.family, s.prior, Dataset(())), s.prior)


def test_dirac_prior_is_fixed_point(rng):
    s = random_scenario(rng, 2, 3, 3, 2, n_w=3)
    d = generate_dataset(s, 2, 4, 11)
    np.testing.assert_array_equal(posterior_from_dataset(s.family, [0, 0, 1.0], d), [0, 0, 1.0])


def test_one_step_bayes():
    fam = np.array([[[0.1, 0.9]], [[0.9, 0.1]]])
    post = posterior_from_dataset(fam, [0.5, 0.5], Dataset([(0, 1)]))
    np.testing.assert_allclose(post, [0.9, 0.1], atol=1e-15)


def test_impossible_dataset():
    fam = np.array([[[1.0, 0.0]], [[1.0, 0.0]]])
    with pytest.raises(ImpossibleDataset):
        posterior_from_dataset(fam, [0.5, 0.5], Dataset([(0, 1)]))


def test_posterior_order_invariant(rng):
    s = random_scenario(rng, 3, 3, 3, 2, n_w=3)
    d = _random_dataset(rng, s, 6)
    base = posterior_from_dataset(s.family, s.prior, d)
    for _ in range(10):
        perm = Dataset([d.pairs[k] for k in rng.permutation(6)])
        np.testing.assert_allclose(posterior_from_dataset(s.family, s.prior, perm), base,
                                   atol=1e-12, rtol=0)


def test_sequential_fold_matches_batch(rng):
    for _ in range(50):
        s = random_scenario(rng, 3, 3, 2, 1, n_w=3)
        d = _random_dataset(rng, s, int(rng.integers(0, 6)))
        b = s.prior
        for x, y in d.pairs:
            b = belief_update(s.family, b, x, y)
        np.testing.assert_allclose(b, posterior_from_dataset(s.family, s.prior, d), atol=1e-12, rtol=0)


# -- tilde loss ----------------------------------------------------------------------


def test_tilde_dirac_is_bar_loss(rng):
    s = random_scenario(rng, 3, 2, 3, 1, n_w=3)
    for w in range(3):
        bar = bar_loss_table(s.with_quantity(s.family[w]))
        for x in range(3):
            for yh in range(3):
                assert tilde_loss(s.family, s.loss, np.eye(3)[w], x, yh) == pytest.approx(bar[x, yh], abs=1e-15)


def test_tilde_half_half_zero_one():
    fam = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    for yh in (0, 1):
        assert tilde_loss(fam, zero_one_loss(1, 2, 2), [0.5, 0.5], 0, yh) == 0.5


def test_tilde_equals_bar_of_mixture(rng):
    for _ in range(20):
        s = random_scenario(rng, 3, 3, 3, 1, n_w=3)
        b = rng.dirichlet(np.ones(3))
        bar = bar_loss_table(s.with_quantity(mixture_kernel(s.family, b)))
        np.testing.assert_allclose(tilde_loss_table(s.family, s.loss, b), bar, atol=1e-12, rtol=0)
        assert abs(tilde_loss(s.family, s.loss, b, 1, 2) - bar[1, 2]) <= 1e-12


# -- solver ----------------------------------------------------------------------------


def test_dirac_belief_reduces_to_known(rng):
    s = random_scenario(rng, 3, 2, 3, 3, n_w=3)
    for w in range(3):
        off = solve_offline(s, np.eye(3)[w])
        kn = solve_known(s.with_quantity(s.family[w]))
        np.testing.assert_allclose(off.q, kn.q, atol=1e-12, rtol=0)
        np.testing.assert_array_equal(off.psi, kn.psi)


def test_mixture_reduction(rng):
    for _ in range(10):
        s = random_scenario(rng, 3, 3, 2, 3, n_w=3)
        b = rng.dirichlet(np.ones(3))
        off = solve_offline(s, b)
        kn = solve_known(s.with_quantity(mixture_kernel(s.family, b)))
        np.testing.assert_allclose(off.v, kn.v, atol=1e-12, rtol=0)
        np.testing.assert_allclose(off.q, kn.q, atol=1e-12, rtol=0)


def test_offline_matches_brute_force(rng):
    for _ in range(5):
        s = random_scenario(rng, 2, 2, 2, 2, n_w=2)
        d = _random_dataset(rng, s, 2)
        p = offline_pipeline(s, d)
        _, best = oracle.brute_force_optimum(s, "markov-offline", d=d)
        assert abs(value_offline(s, p) - best) <= 1e-9


def test_bad_belief_rejected(rng):
    s = random_scenario(rng, 2, 2, 2, 2, n_w=2)
    with pytest.raises(ValueError):
        solve_offline(s, [0.5, 0.6])
    with pytest.raises(ValueError):
        solve_offline(s, [1.0])


# -- pipeline --------------------------------------------------------------------------


def test_pipeline_empty_dataset(rng):
    s = random_scenario(rng, 2, 2, 2, 3, n_w=3)
    p = offline_pipeline(s, Dataset(()))
    np.testing.assert_array_equal(p.v, solve_offline(s, s.prior).v)


def test_pipeline_forced_dirac():
    # Only member 1 can emit y=1 at x=0.
    fam = np.array([[[1.0, 0.0], [0.5, 0.5]], [[0.5, 0.5], [0.2, 0.8]]])
    kern = np.full((2, 2, 2), 0.5)
    loss = np.random.default_rng(3).random((2, 2, 2))
    s = Scenario(2, 2, 2, 2, [0.5, 0.5], [kern], loss, family=fam, prior=[0.7, 0.3])
    p = offline_pipeline(s, Dataset([(0, 1)]))
    np.testing.assert_array_equal(p.belief, [0.0, 1.0])
    kn = solve_known(s.with_quantity(fam[1]))
    np.testing.assert_allclose(p.v, kn.v, atol=1e-12)
    assert p.dataset == Dataset([(0, 1)])


def test_pipeline_loss_dual_forms(rng):
    for _ in range(5):
        s = random_scenario(rng, 2, 2, 2, 2, n_w=3)
        d = generate_dataset(s, int(rng.integers(3)), 2, int(rng.integers(1000)))
        p = offline_pipeline(s, d)
        t = oracle.strategy_from_policy(s, p)
        raw = oracle.exact_loss(s, t, d=d, form="loss")
        red = oracle.exact_loss(s, t, d=d, form="reduced")
        assert abs(raw - red) <= 1e-9
        assert abs(raw - value_offline(s, p)) <= 1e-9


def test_expected_value_matches_unconditional_brute_force(rng):
    s = random_scenario(rng, 2, 2, 2, 2, n_w=2)
    _, best = oracle.brute_force_optimum(s, "markov-offline", m=1)
    assert abs(expected_value_offline(s, 1) - best) <= 1e-9


# -- loss-to-go --------------------------------------------------------------------------


def test_loss_to_go_last_round(rng):
    s = random_scenario(rng, 3, 2, 3, 2, n_w=2)
    b = rng.dirichlet(np.ones(2))
    p = solve_offline(s, b)
    for x in range(3):
        expect = tilde_loss(s.family, s.loss, b, x, p.psi[1][x])
        assert abs(loss_to_go_offline(s, p, 1, x) - expect) <= 1e-12


def test_loss_to_go_optimal_equals_value(rng):
    s = random_scenario(rng, 3, 2, 2, 3, n_w=3)
    p = solve_offline(s, rng.dirichlet(np.ones(3)))
    for i in range(3):
        for x in range(3):
            assert abs(loss_to_go_offline(s, p, i, x) - p.v[i][x]) <= 1e-9


def test_loss_to_go_perturbed_dominates(rng):
    s = random_scenario(rng, 3, 2, 3, 3, n_w=2)
    p = solve_offline(s, rng.dirichlet(np.ones(2)))
    strict = False
    for _ in range(10):
        psi = p.psi.copy()
        i, x = int(rng.integers(3)), int(rng.integers(3))
        psi[i, x] = (psi[i, x] + 1 + int(rng.integers(2))) % 3
        bad = type(p)(p.belief, psi, p.v, p.q)
        for j in range(3):
            for xx in range(3):
                ltg = loss_to_go_offline(s, bad, j, xx)
                assert ltg >= p.v[j][xx] - 1e-9
                strict |= ltg > p.v[j][xx] + 1e-9
    assert strict
