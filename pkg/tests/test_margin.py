import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmawm.margin import (
    MarginContext,
    binary_minority_probability,
    confidence_halfwidth,
    correct_binary_dim,
    correct_integer_dim,
    margin_correction,
    marginal_tail_masses,
)
from cmawm.numerics import DefinitenessError
from cmawm.space import Discrete, MixedIntegerSpace

from oracles import gaussian_tail_above, gaussian_tail_below

INTS = tuple(range(0, 11))
BIN = MixedIntegerSpace(0, (Discrete((0, 1)),))
INT = MixedIntegerSpace(0, (Discrete(INTS),))


def ctx(var=0.01, alpha=0.1, A=1.0, n=1):
    return MarginContext(1.0, np.eye(n) * var, np.full(n, A), alpha)


class TestHalfwidth:
    def test_one_sigma(self):
        one_sigma = math.erf(1 / math.sqrt(2))
        assert confidence_halfwidth(ctx(), 0, one_sigma) == pytest.approx(0.1, abs=1e-12)

    def test_alpha_point_one(self):
        assert confidence_halfwidth(ctx(), 0, 0.8) == pytest.approx(0.12816, abs=1e-5)
        assert confidence_halfwidth(ctx(), 0, 0.8) == pytest.approx(math.sqrt(1.6424 * 0.01), rel=1e-4)

    def test_zero_probability(self):
        assert confidence_halfwidth(ctx(), 0, 0.0) == 0.0

    def test_degenerate_variance(self):
        c = MarginContext(1.0, np.zeros((1, 1)), np.ones(1), 0.1)
        with pytest.raises(DefinitenessError):
            confidence_halfwidth(c, 0, 0.5)

    @pytest.mark.parametrize("alpha", [0.5, -0.1, 0.7])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            MarginContext(1.0, np.eye(1), np.ones(1), alpha)


class TestBinary:
    def test_pulls_to_threshold(self):
        m = correct_binary_dim(ctx(), 2.0, BIN, 0)
        assert m == pytest.approx(0.62816, abs=1e-5)
        assert gaussian_tail_below(m, 0.1, 0.5) == pytest.approx(0.1, abs=1e-9)

    def test_within_interval_untouched(self):
        assert correct_binary_dim(ctx(), 0.55, BIN, 0) == 0.55

    def test_on_threshold_fixed(self):
        assert correct_binary_dim(ctx(), 0.5, BIN, 0) == 0.5

    def test_negative_side(self):
        m = correct_binary_dim(ctx(), -3.0, BIN, 0)
        assert m == pytest.approx(0.5 - 0.12816, abs=1e-5)

    @settings(max_examples=300, deadline=None)
    @given(m=st.floats(-50, 50), var=st.floats(1e-8, 10), alpha=st.floats(1e-6, 0.49))
    def test_never_crosses_threshold(self, m, var, alpha):
        new = correct_binary_dim(ctx(var, alpha), m, BIN, 0)
        assert np.sign(new - 0.5) == np.sign(m - 0.5) or new == 0.5


class TestInteger:
    def test_symmetric_interior(self):
        m, A = correct_integer_dim(ctx(1e-6), 1.0, INT, 0)
        assert m == pytest.approx(1.0, abs=1e-12)
        assert A * math.sqrt(1e-6) == pytest.approx(1 / (2 * 1.6448536), rel=1e-6)
        assert A * math.sqrt(1e-6) == pytest.approx(1 / (2 * math.sqrt(2.7055434)), rel=1e-6)

    def test_clamp_inactive_reproduces(self):
        c = ctx(0.25, 0.1)
        m, A = correct_integer_dim(c, 1.2, INT, 0)
        assert (m, A) == (1.2, 1.0)
        sd = 0.5
        assert gaussian_tail_below(m, A * sd, 0.5) == pytest.approx(
            gaussian_tail_below(1.2, sd, 0.5), abs=1e-9)

    def test_exterior_routed_to_binary_rule(self):
        c = ctx(0.01, 0.1)
        m, A = correct_integer_dim(c, -4.0, INT, 0)
        assert A == 1.0
        assert m == pytest.approx(0.5 - 0.12816, abs=1e-5)
        m, A = correct_integer_dim(c, 14.0, INT, 0)
        assert m == pytest.approx(9.5 + 0.12816, abs=1e-5)

    def test_binary_rejected(self):
        with pytest.raises(ValueError):
            correct_integer_dim(ctx(), 0.2, BIN, 0)

    def test_asymmetric_interior_hits_targets(self):
        alpha = 0.02
        m, A = correct_integer_dim(ctx(1e-4, alpha), 1.3, INT, 0)
        sd = A * 0.01
        lo = gaussian_tail_below(m, sd, 0.5)
        up = gaussian_tail_above(m, sd, 1.5)
        assert min(lo, up) == pytest.approx(alpha / 2, abs=1e-9)
        assert lo >= alpha / 2 - 1e-9 and up >= alpha / 2 - 1e-9
        assert 0.5 < m <= 1.5


def _random_state(rng):
    n_co, n_bi, n_in = rng.integers(0, 3), rng.integers(0, 4), rng.integers(0, 4)
    if n_bi + n_in == 0:
        n_bi = 1
    values = [tuple(range(0, int(rng.integers(3, 12)))) for _ in range(n_in)]
    space = MixedIntegerSpace.build(n_co, n_bi, values)
    n = space.n
    M = rng.standard_normal((n, n))
    C = M @ M.T / n + np.diag(10.0 ** rng.uniform(-8, 1, n))
    sigma = 10.0 ** rng.uniform(-3, 0.5)
    mean = rng.uniform(-3, 12, n)
    A = np.ones(n)
    A[space.integer_slice] = 10.0 ** rng.uniform(-1, 1, space.n_integer)
    alpha = 10.0 ** rng.uniform(-5, math.log10(0.4))
    return space, mean, A, sigma, C, alpha


def audit(space, mean, A, sigma, C, alpha, tol=1e-9):
    b = binary_minority_probability(mean, A, sigma, C, space)
    assert np.all(b >= alpha - tol), (b, alpha)
    sl = space.integer_slice
    thr = space.threshold_table[space.n_binary:]
    for k, j in enumerate(range(sl.start, sl.stop)):
        t = thr[k][np.isfinite(thr[k])]
        sd = sigma * A[j] * math.sqrt(C[j, j])
        m = mean[j]
        if t[0] < m <= t[-1]:
            lo = t[np.searchsorted(t, m) - 1]
            up = t[np.searchsorted(t, m)]
            assert gaussian_tail_below(m, sd, lo) >= alpha / 2 - tol
            assert gaussian_tail_above(m, sd, up) >= alpha / 2 - tol
        else:
            edge = t[0] if m <= t[0] else t[-1]
            inner = gaussian_tail_above(m, sd, edge) if m <= t[0] else gaussian_tail_below(m, sd, edge)
            assert inner >= alpha - tol


def test_post_condition_audit_1000_states():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        space, mean, A, sigma, C, alpha = _random_state(rng)
        m2, A2 = margin_correction(mean, A, sigma, C, alpha, space)
        audit(space, m2, A2, sigma, C, alpha)
        assert np.all(A2 > 0)
        assert np.array_equal(m2[: space.n_continuous], mean[: space.n_continuous])
        assert np.all(A2[space.binary_slice] == A[space.binary_slice])


def test_vectorized_matches_scalar_routines():
    rng = np.random.default_rng(7)
    for _ in range(200):
        space, mean, A, sigma, C, alpha = _random_state(rng)
        m2, A2 = margin_correction(mean, A, sigma, C, alpha, space)
        c = MarginContext(sigma, C, A, alpha)
        for j in range(space.n_continuous, space.n):
            if space.dimension(j).is_binary:
                assert m2[j] == pytest.approx(correct_binary_dim(c, mean[j], space, j), abs=1e-12)
            else:
                mj, aj = correct_integer_dim(c, mean[j], space, j)
                assert m2[j] == pytest.approx(mj, abs=1e-12)
                assert A2[j] == pytest.approx(aj, rel=1e-12)


def test_interior_stays_in_cell():
    rng = np.random.default_rng(3)
    for _ in range(500):
        space, mean, A, sigma, C, alpha = _random_state(rng)
        m2, _ = margin_correction(mean, A, sigma, C, alpha, space)
        before = space.cell_index(mean)
        after = space.cell_index(m2)
        thr = space.threshold_table
        n_thr = np.array([len(d.thresholds) for d in space.discrete])
        md = mean[space.discrete_slice]
        interior = (n_thr > 1) & (md > thr[:, 0]) & (md <= thr[np.arange(len(md)), n_thr - 1])
        assert np.array_equal(before[interior], after[interior])


def test_all_continuous_identity():
    sp = MixedIntegerSpace(3)
    m, A = margin_correction(np.arange(3.0), np.ones(3), 0.1, np.eye(3), 0.2, sp)
    assert np.array_equal(m, np.arange(3.0)) and np.array_equal(A, np.ones(3))


def test_small_alpha_continuity():
    sp = MixedIntegerSpace.build(1, 2, [INTS])
    mean = np.array([0.3, 0.8, -0.2, 4.2])
    C = np.eye(4) * 0.04
    m0, A0 = margin_correction(mean, np.ones(4), 1.0, C, 0.0, sp)
    m1, A1 = margin_correction(mean, np.ones(4), 1.0, C, 1e-12, sp)
    assert np.max(np.abs(m1 - m0)) < 1e-9 and np.max(np.abs(A1 - A0)) < 1e-9


def test_idempotent_when_inactive():
    rng = np.random.default_rng(11)
    for _ in range(200):
        space, mean, A, sigma, C, alpha = _random_state(rng)
        m1, A1 = margin_correction(mean, A, sigma, C, alpha, space)
        m2, A2 = margin_correction(m1, A1, sigma, C, alpha, space)
        assert np.max(np.abs(m2 - m1)) < 1e-9
        assert np.max(np.abs(A2 - A1) / A1) < 1e-9


def test_tail_masses_shape():
    sp = MixedIntegerSpace.build(1, 1, [INTS])
    lo, up = marginal_tail_masses(np.array([0.0, 0.9, 3.2]), np.ones(3), 0.1, np.eye(3), sp)
    assert lo.shape == (2,) and up.shape == (2,)
    assert lo[0] == pytest.approx(gaussian_tail_below(0.9, 0.1, 0.5))
    assert up[0] == 0.0
    assert up[1] == pytest.approx(gaussian_tail_above(3.2, 0.1, 3.5))
