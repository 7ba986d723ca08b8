"""CMA-ES with integer mutation (CMA-ES-IM), the comparison baseline.

Candidates whose integer coordinates have a sampling deviation below the
variable granularity receive an injected integer jump ``S r``, and those
coordinates are masked out of the step-size path length.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Tuple

import numpy as np

from .cma import CmaParams, CmaState, Generation, Population, default_params, rank_by_fitness, \
    termination_check, update_step
from .numerics import RngStream, expected_norm, sqrt_factors
from .space import MixedIntegerSpace


def mutation_index_set(state: CmaState, s: np.ndarray, rng: RngStream) -> np.ndarray:
    """Shuffled indices j with ``2 sigma sqrt(C_jj) < s_j``."""
    sd = state.sigma * np.sqrt(np.diag(state.C))
    J = np.flatnonzero(2.0 * sd < s)
    return rng.permutation(J) if J.size > 1 else J


def mutation_count(n_selected: int, n: int, popsize: int) -> int:
    """How many of the offspring receive an integer mutation."""
    if n_selected == 0:
        return 0
    if n_selected == n:
        return popsize // 2
    return max(0, min(popsize // 10 + n_selected + 1, popsize // 2 - 1))


def integer_mutation(state: CmaState, J: np.ndarray, n_mutated: int, rng: RngStream,
                     prev_best_x: Optional[np.ndarray], s: np.ndarray, popsize: int) -> np.ndarray:
    """Integer mutation vectors ``r_i``, one row per offspring.

    Row i < ``n_mutated`` gets ``+-(one-hot + geometric)`` on the selected
    coordinates (one sign per row). When anything is mutated, the last row
    is pointed, coordinate by coordinate with random signs, from the cell of
    the mean to the cell of the previous best candidate.
    """
    n = state.mean.size
    r = np.zeros((popsize, n))
    if n_mutated == 0:
        return r
    p = 0.7 ** (1.0 / J.size)
    for i in range(n_mutated):
        row = np.zeros(n)
        row[J[i % J.size]] = 1.0
        row[J] += rng.geometric(p, J.size)
        r[i] = row if rng.random() < 0.5 else -row
    if prev_best_x is not None:
        gran = s > 0
        jump = np.floor(prev_best_x[gran] / s[gran]) - np.floor(state.mean[gran] / s[gran])
        signs = np.where(rng.uniform(0.0, 1.0, jump.size) < 0.5, 1.0, -1.0)
        r[popsize - 1, gran] = signs * jump
    return r


def sigma_mask(state: CmaState, params: CmaParams, s: np.ndarray) -> np.ndarray:
    """Coordinates that stay in the step-size update (True = kept)."""
    sd = state.sigma * np.sqrt(np.diag(state.C))
    return ~(5.0 * sd / math.sqrt(params.c_sigma) < s)


def masked_sigma_update(state: CmaState, params: CmaParams, p_sigma_new: np.ndarray,
                        s: np.ndarray) -> float:
    """Step-size after CSA restricted to the unmasked coordinates."""
    keep = sigma_mask(state, params, s)
    m = int(np.count_nonzero(keep))
    if m == 0:
        return state.sigma
    norm = float(np.linalg.norm(p_sigma_new[keep]))
    return state.sigma * math.exp(params.c_sigma / params.d_sigma * (norm / expected_norm(m) - 1))


def box_penalty(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> Tuple[np.ndarray, float]:
    """Nearest feasible point and the penalty ``||x_feas - x||^2 / N``."""
    x = np.asarray(x, dtype=float)
    x_feas = np.clip(x, lower, upper)
    return x_feas, float(np.sum((x_feas - x) ** 2) / x.size)


class CMAESIM:
    """CMA-ES-IM, optionally with a box constraint handled by penalty.

    Args:
        space: Search space; its encoding decides the evaluated candidate.
        mean, sigma, cov, popsize, rng: As for :class:`cmawm.cma.CMAwM`.
        granularity: ``s_j`` per coordinate. Defaults to 1 on discrete
            dimensions and 0 on continuous ones.
        box: Optional ``(lower, upper)`` arrays; use +-inf for unbounded
            coordinates.
    """

    def __init__(self, space: MixedIntegerSpace, mean, sigma: float, cov=None,
                 popsize: Optional[int] = None, granularity=None, box=None, rng=0):
        self.space = space
        self.params = default_params(space.n, popsize, alpha=0.0)
        self.state = CmaState.initial(mean, sigma, cov)
        if granularity is None:
            granularity = np.r_[np.zeros(space.n_continuous), np.ones(len(space.discrete))]
        self.s = np.asarray(granularity, dtype=float)
        if self.s.shape != (space.n,) or np.any(self.s < 0):
            raise ValueError("granularity must be a non-negative vector of length N")
        self.box = None if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
        self.rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
        self.prev_best_x: Optional[np.ndarray] = None
        self.evaluations = 0
        self.best_f = math.inf
        self.best_x: Optional[np.ndarray] = None

    @property
    def popsize(self) -> int:
        return self.params.popsize

    def ask(self):
        sqrt_C, inv_sqrt_C, _ = sqrt_factors(self.state.C)
        xi = self.rng.normal((self.popsize, self.space.n))
        y = xi @ sqrt_C.T
        J = mutation_index_set(self.state, self.s, self.rng)
        n_mut = mutation_count(J.size, self.space.n, self.popsize)
        r = integer_mutation(self.state, J, n_mut, self.rng, self.prev_best_x, self.s, self.popsize)
        x = self.state.mean + self.state.sigma * y + self.s * r
        # the jump moves the mean (through x) but stays out of the paths and C (through y)
        pop = Population(x, y, x)
        if self.box is None:
            pop.encoded = self.space.encode(x)
            penalties = np.zeros(self.popsize)
        else:
            feas = np.clip(x, *self.box)
            penalties = np.sum((feas - x) ** 2, axis=1) / self.space.n
            pop.encoded = self.space.encode(feas)
        return pop, penalties, inv_sqrt_C

    def tell(self, pop: Population, fitness, inv_sqrt_C=None) -> np.ndarray:
        pop.fitness = np.asarray(fitness, dtype=float)
        order = rank_by_fitness(pop.fitness)
        self.evaluations += self.popsize
        if pop.fitness[order[0]] < self.best_f:
            self.best_f = float(pop.fitness[order[0]])
            self.best_x = pop.encoded[order[0]].copy()
        keep = sigma_mask(self.state, self.params, self.s)
        self.state = update_step(self.state, self.params, pop.x[order], pop.y[order],
                                 inv_sqrt_C, sigma_mask=keep)
        self.prev_best_x = pop.x[order[0]].copy()
        return order

    def step(self, objective: Callable[[np.ndarray], float]) -> Generation:
        pop, penalties, inv_sqrt_C = self.ask()
        fitness = np.array([objective(row) for row in pop.encoded]) + penalties
        order = self.tell(pop, fitness, inv_sqrt_C)
        return Generation(pop, order, float(pop.fitness[order[0]]), pop.encoded[order[0]])

    def should_stop(self, budget: Optional[int] = None):
        return termination_check(self.state, self.best_f, self.evaluations, budget)
