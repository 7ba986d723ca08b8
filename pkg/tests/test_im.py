import math

import numpy as np
import pytest

from cmawm.cma import CMAwM, CmaState, default_params
from cmawm.im import (
    CMAESIM,
    box_penalty,
    integer_mutation,
    masked_sigma_update,
    mutation_count,
    mutation_index_set,
    sigma_mask,
)
from cmawm.numerics import RngStream, expected_norm
from cmawm.space import MixedIntegerSpace


class TestIndexSet:
    def test_zero_granularity(self):
        st = CmaState.initial(np.zeros(3), 0.1)
        assert mutation_index_set(st, np.zeros(3), RngStream(0)).size == 0

    def test_huge_sigma(self):
        st = CmaState.initial(np.zeros(3), 1e3)
        assert mutation_index_set(st, np.ones(3), RngStream(0)).size == 0

    def test_single_dim(self):
        st = CmaState.initial(np.zeros(2), 0.1)
        assert mutation_index_set(st, np.array([0.0, 1.0]), RngStream(0)).tolist() == [1]

    def test_is_a_shuffle(self):
        st = CmaState.initial(np.zeros(6), 0.1)
        s = np.array([0, 1, 1, 0, 1, 1.0])
        orders = {tuple(mutation_index_set(st, s, RngStream(k))) for k in range(30)}
        assert all(sorted(o) == [1, 2, 4, 5] for o in orders)
        assert len(orders) > 1


@pytest.mark.parametrize("n_sel, n, lam, want", [
    (0, 20, 12, 0), (20, 20, 12, 6), (2, 20, 12, 4), (10, 20, 12, 5), (1, 40, 15, 3),
    (1, 3, 4, 1), (1, 3, 2, 0),
])
def test_mutation_count(n_sel, n, lam, want):
    assert mutation_count(n_sel, n, lam) == want


class TestIntegerMutation:
    def test_nothing_mutated(self):
        st = CmaState.initial(np.zeros(4), 0.01)
        r = integer_mutation(st, np.array([1, 2]), 0, RngStream(0), np.ones(4), np.ones(4), 8)
        assert np.array_equal(r, np.zeros((8, 4)))

    def test_single_index_one_hot(self):
        st = CmaState.initial(np.zeros(3), 0.01)
        s = np.array([0.0, 0.0, 1.0])
        r = integer_mutation(st, np.array([2]), 5, RngStream(4), None, s, 10)
        assert np.all(np.abs(r[:5, 2]) >= 1)
        assert np.all(r[:5, :2] == 0)
        assert np.all(r[5:] == 0)

    def test_step6_magnitude(self):
        st = CmaState.initial(np.array([0.0, 1.2]), 0.01)
        s = np.array([0.0, 1.0])
        for seed in range(20):
            r = integer_mutation(st, np.array([1]), 2, RngStream(seed), np.array([9.0, 3.7]), s, 6)
            assert abs(r[-1, 1]) == 2.0
            assert r[-1, 0] == 0.0

    def test_step6_skipped_at_start(self):
        st = CmaState.initial(np.array([0.0, 1.2]), 0.01)
        r = integer_mutation(st, np.array([1]), 2, RngStream(0), None, np.array([0.0, 1.0]), 6)
        assert np.all(r[2:] == 0)

    def test_sign_symmetry(self):
        st = CmaState.initial(np.zeros(3), 0.01)
        s = np.ones(3)
        rng = RngStream(123)
        rows = np.vstack([
            integer_mutation(st, rng.permutation(np.arange(3)), 6, rng, None, s, 12)[:6]
            for _ in range(10**4 // 6 + 1)
        ])
        se = rows.std(axis=0, ddof=1) / math.sqrt(len(rows))
        assert np.all(np.abs(rows.mean(axis=0)) < 3 * se)


class TestMaskedSigma:
    def test_all_kept_matches_csa(self):
        p = default_params(4)
        st = CmaState.initial(np.zeros(4), 1.0)
        ps = np.array([0.3, -1.2, 0.5, 2.0])
        got = masked_sigma_update(st, p, ps, np.zeros(4))
        want = math.exp(p.c_sigma / p.d_sigma * (np.linalg.norm(ps) / expected_norm(4) - 1))
        assert got == pytest.approx(want, rel=1e-14)

    def test_all_masked_freezes(self):
        p = default_params(2)
        st = CmaState.initial(np.zeros(2), 1e-3)
        assert masked_sigma_update(st, p, np.array([5.0, 5.0]), np.ones(2)) == 1e-3

    def test_one_masked(self):
        p = default_params(2)
        st = CmaState.initial(np.zeros(2), 1e-3)
        s = np.array([0.0, 1.0])
        assert sigma_mask(st, p, s).tolist() == [True, False]
        assert expected_norm(1) == pytest.approx(0.7976, abs=1e-4)
        ps = np.array([1.5, 100.0])
        got = masked_sigma_update(st, p, ps, s)
        want = 1e-3 * math.exp(p.c_sigma / p.d_sigma * (1.5 / expected_norm(1) - 1))
        assert got == pytest.approx(want, rel=1e-14)


class TestBox:
    def test_inside(self):
        x, pen = box_penalty(np.array([0.2, -0.3]), -np.ones(2), np.ones(2))
        assert pen == 0.0 and np.array_equal(x, [0.2, -0.3])

    def test_outside(self):
        x, pen = box_penalty(np.array([2.0, 0.0]), -np.ones(2), np.ones(2))
        assert np.array_equal(x, [1.0, 0.0]) and pen == 0.5

    def test_idempotent(self):
        x, _ = box_penalty(np.array([2.0, -7.0, 0.1]), -np.ones(3), np.ones(3))
        x2, pen = box_penalty(x, -np.ones(3), np.ones(3))
        assert np.array_equal(x, x2) and pen == 0.0


def test_zero_granularity_is_plain_cma():
    space = MixedIntegerSpace(5)
    sphere = lambda v: float(np.sum(v**2))
    a = CMAESIM(space, np.full(5, 1.5), 0.8, rng=RngStream(21))
    b = CMAwM(space, np.full(5, 1.5), 0.8, alpha=0.0, rng=RngStream(21))
    for _ in range(20):
        a.step(sphere)
        b.step(sphere)
        for got, want in [(a.state.mean, b.state.mean), (a.state.C, b.state.C),
                          (a.state.p_sigma, b.state.p_sigma), (a.state.sigma, b.state.sigma)]:
            assert np.max(np.abs(np.asarray(got) - want)) < 1e-12


def test_granularity_validated():
    with pytest.raises(ValueError):
        CMAESIM(MixedIntegerSpace(2), np.zeros(2), 1.0, granularity=[1.0, -1.0])


def test_box_penalty_enters_fitness():
    space = MixedIntegerSpace(2)
    opt = CMAESIM(space, np.full(2, 5.0), 0.1, box=(-np.ones(2), np.ones(2)), rng=3)
    gen = opt.step(lambda v: 0.0)
    assert np.all(gen.population.fitness > 0)
    assert np.all(np.abs(gen.population.encoded) <= 1)
