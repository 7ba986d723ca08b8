"""Weighted-recombination CMA-ES with CSA, rank-one and rank-mu updates,
plus the margin post-step for mixed-integer spaces."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from . import numerics
from .margin import margin_correction
from .numerics import RngStream, expected_norm, sqrt_factors
from .space import MixedIntegerSpace

SUCCESS_F = 1e-10
MIN_EIGEN = 1e-30
MAX_CONDITION = 1e14


class Termination(str, enum.Enum):
    SUCCESS = "success"
    MIN_EIGEN = "min_eigen"
    ILL_CONDITIONED = "ill_conditioned"
    BUDGET = "budget_exhausted"
    NOT_POSITIVE_DEFINITE = "not_positive_definite"


@dataclass(frozen=True)
class CmaParams:
    """Strategy parameters; build them with :func:`default_params`."""

    n: int
    popsize: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    mu_eff_minus: float
    c_m: float
    c_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    d_sigma: float
    alpha: float
    chi_n: float

    def __post_init__(self):
        w = self.weights
        if w.shape != (self.popsize,):
            raise ValueError("need one weight per offspring")
        if not (np.all(w[: self.mu] > 0) and np.all(np.diff(w[: self.mu]) <= 0)):
            raise ValueError("the first mu weights must be positive and non-increasing")
        if abs(np.sum(w[: self.mu]) - 1.0) > 1e-12:
            raise ValueError("the first mu weights must sum to one")
        if np.any(w[self.mu:] > 0):
            raise ValueError("weights beyond mu must be non-positive")
        if self.c_1 + self.c_mu > 1.0 + 1e-15:
            raise ValueError("c_1 + c_mu must not exceed 1")
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [0, 0.5), got {self.alpha}")


def default_params(n: int, popsize: Optional[int] = None, alpha: Optional[float] = None) -> CmaParams:
    """Default hyperparameters for dimension ``n``.

    ``alpha`` defaults to ``1 / (n * popsize)``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    lam = popsize if popsize is not None else 4 + int(math.floor(3 * math.log(n)))
    if lam < 2:
        raise ValueError("popsize must be at least 2")
    mu = lam // 2
    w_prime = np.array([math.log((lam + 1) / 2) - math.log(i) for i in range(1, lam + 1)])
    pos, neg = w_prime[:mu], w_prime[mu:]
    mu_eff = pos.sum() ** 2 / np.sum(pos**2)
    mu_eff_minus = neg.sum() ** 2 / np.sum(neg**2) if np.any(neg != 0) else 0.0

    c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
    c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    d_sigma = 1 + c_sigma + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1)

    neg_scale = min(1 + c_1 / c_mu, 1 + 2 * mu_eff_minus / (mu_eff + 2),
                    (1 - c_1 - c_mu) / (n * c_mu))
    weights = np.empty(lam)
    weights[:mu] = pos / pos.sum()
    abs_neg = np.sum(np.abs(neg))
    weights[mu:] = neg / abs_neg * neg_scale if abs_neg > 0 else 0.0

    if alpha is None:
        alpha = 1.0 / (n * lam)
    return CmaParams(n=n, popsize=lam, mu=mu, weights=weights, mu_eff=mu_eff,
                     mu_eff_minus=mu_eff_minus, c_m=1.0, c_sigma=c_sigma, c_c=c_c,
                     c_1=c_1, c_mu=c_mu, d_sigma=d_sigma, alpha=float(alpha),
                     chi_n=expected_norm(n))


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    A: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, mean, sigma: float, C: Optional[np.ndarray] = None) -> "CmaState":
        mean = np.array(mean, dtype=float)
        n = mean.size
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        C = np.eye(n) if C is None else np.array(C, dtype=float)
        if C.shape != (n, n):
            raise ValueError(f"C must be {n}x{n}, got {C.shape}")
        return cls(mean, float(sigma), C, np.zeros(n), np.zeros(n), np.ones(n), 0)

    def copy(self) -> "CmaState":
        return CmaState(self.mean.copy(), self.sigma, self.C.copy(), self.p_sigma.copy(),
                        self.p_c.copy(), self.A.copy(), self.t)


@dataclass
class Population:
    """One generation: rows are individuals in sampling order."""

    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    encoded: Optional[np.ndarray] = None
    fitness: Optional[np.ndarray] = None


def sample_population(state: CmaState, params: CmaParams, rng: RngStream,
                      sqrt_C: Optional[np.ndarray] = None) -> Population:
    """Draw ``y = C^{1/2} xi``, ``x = m + sigma y`` and ``v = m + sigma A y``."""
    if sqrt_C is None:
        sqrt_C = numerics.matrix_sqrt(state.C)
    xi = rng.normal((params.popsize, params.n))
    y = xi @ sqrt_C.T
    x = state.mean + state.sigma * y
    v = state.mean + state.sigma * (state.A * y)
    return Population(x, y, v)


def rank_by_fitness(values) -> np.ndarray:
    """Stable ascending order (0-based indices); ties keep sampling order."""
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(np.isnan(values))
    if bad.size:
        raise ValueError(f"fitness of individual {int(bad[0])} is NaN")
    return np.argsort(values, kind="stable")


def update_step(state: CmaState, params: CmaParams, x_sorted: np.ndarray, y_sorted: np.ndarray,
                inv_sqrt_C: Optional[np.ndarray] = None,
                sigma_mask: Optional[np.ndarray] = None) -> CmaState:
    """Mean, evolution paths, covariance and step-size update (A untouched).

    Args:
        x_sorted, y_sorted: Candidates and their ``N(0, C)`` steps, best first.
        inv_sqrt_C: ``C^{-1/2}`` of the current covariance, if already known.
        sigma_mask: Optional boolean mask of coordinates that take part in
            the step-size update; masked-out coordinates are dropped from
            ``||p_sigma||`` and from the expected norm. No unmasked
            coordinate means sigma is kept.
    """
    p = params
    n = p.n
    if inv_sqrt_C is None:
        inv_sqrt_C = numerics.matrix_inverse_sqrt(state.C)
    w = p.weights
    y_w = w[: p.mu] @ y_sorted[: p.mu]

    mean = state.mean + p.c_m * (w[: p.mu] @ (x_sorted[: p.mu] - state.mean))

    p_sigma = (1 - p.c_sigma) * state.p_sigma + math.sqrt(
        p.c_sigma * (2 - p.c_sigma) * p.mu_eff
    ) * (inv_sqrt_C @ y_w)
    norm_ps = float(np.linalg.norm(p_sigma))
    h_sigma = float(
        norm_ps / math.sqrt(1 - (1 - p.c_sigma) ** (2 * (state.t + 1)))
        < (1.4 + 2 / (n + 1)) * p.chi_n
    )
    p_c = (1 - p.c_c) * state.p_c + h_sigma * math.sqrt(p.c_c * (2 - p.c_c) * p.mu_eff) * y_w

    w_io = w.copy()
    negative = w < 0
    if np.any(negative):
        sq = np.sum((y_sorted[negative] @ inv_sqrt_C.T) ** 2, axis=1)
        # a zero step adds nothing to the rank-mu sum whatever its weight
        w_io[negative] *= np.divide(n, sq, out=np.zeros_like(sq), where=sq > 0)
    rank_mu = (y_sorted.T * w_io) @ y_sorted
    C = ((1 - p.c_1 - p.c_mu * w.sum() + (1 - h_sigma) * p.c_1 * p.c_c * (2 - p.c_c)) * state.C
         + p.c_1 * np.outer(p_c, p_c) + p.c_mu * rank_mu)
    C = (C + C.T) / 2

    if sigma_mask is None:
        sigma = state.sigma * math.exp(p.c_sigma / p.d_sigma * (norm_ps / p.chi_n - 1))
    else:
        n_active = int(np.count_nonzero(sigma_mask))
        if n_active == 0:
            sigma = state.sigma
        else:
            masked_norm = float(np.linalg.norm(p_sigma[sigma_mask]))
            sigma = state.sigma * math.exp(
                p.c_sigma / p.d_sigma * (masked_norm / expected_norm(n_active) - 1)
            )

    return CmaState(mean, sigma, C, p_sigma, p_c, state.A.copy(), state.t + 1)


def termination_check(state: CmaState, best_f: float, evaluations: int = 0,
                      budget: Optional[int] = None) -> Optional[Termination]:
    if best_f < SUCCESS_F:
        return Termination.SUCCESS
    if budget is not None and evaluations >= budget:
        return Termination.BUDGET
    lo, cond = numerics.eigen_extremes(state.C)
    if state.sigma**2 * lo < MIN_EIGEN:
        return Termination.MIN_EIGEN
    if cond > MAX_CONDITION:
        return Termination.ILL_CONDITIONED
    return None


@dataclass
class Generation:
    """What one iteration saw, for logging."""

    population: Population
    order: np.ndarray
    best_f: float
    best_encoded: np.ndarray


class CMAwM:
    """CMA-ES with margin for mixed-integer minimization.

    Candidates are sampled in the relaxed space, mapped to the mixed-integer
    space by ``space.encode`` and ranked by the objective of the encoded
    point. After each update the margin correction keeps every discrete
    coordinate from freezing.

    Args:
        space: The search space.
        mean: Initial mean (relaxed coordinates).
        sigma: Initial step-size.
        cov: Initial covariance, identity by default.
        popsize: Offspring count, default ``4 + floor(3 ln N)``.
        alpha: Margin parameter, default ``1 / (N popsize)``; 0 disables it.
        rng: Random stream (or an integer seed).
    """

    def __init__(self, space: MixedIntegerSpace, mean, sigma: float, cov=None,
                 popsize: Optional[int] = None, alpha: Optional[float] = None, rng=0):
        self.space = space
        self.params = default_params(space.n, popsize, alpha)
        self.state = CmaState.initial(mean, sigma, cov)
        if self.state.mean.size != space.n:
            raise ValueError(f"mean has length {self.state.mean.size}, space has {space.n}")
        self.rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
        self.evaluations = 0
        self.best_f = math.inf
        self.best_x: Optional[np.ndarray] = None

    @property
    def popsize(self) -> int:
        return self.params.popsize

    def ask(self) -> Tuple[Population, np.ndarray]:
        sqrt_C, inv_sqrt_C, _ = sqrt_factors(self.state.C)
        pop = sample_population(self.state, self.params, self.rng, sqrt_C)
        pop.encoded = self.space.encode(pop.v)
        return pop, inv_sqrt_C

    def tell(self, pop: Population, fitness, inv_sqrt_C: Optional[np.ndarray] = None) -> np.ndarray:
        pop.fitness = np.asarray(fitness, dtype=float)
        order = rank_by_fitness(pop.fitness)
        self.evaluations += self.params.popsize
        if pop.fitness[order[0]] < self.best_f:
            self.best_f = float(pop.fitness[order[0]])
            self.best_x = pop.encoded[order[0]].copy()
        new = update_step(self.state, self.params, pop.x[order], pop.y[order], inv_sqrt_C)
        new.mean, new.A = margin_correction(new.mean, self.state.A, new.sigma, new.C,
                                            self.params.alpha, self.space)
        self.state = new
        return order

    def step(self, objective: Callable[[np.ndarray], float]) -> Generation:
        pop, inv_sqrt_C = self.ask()
        fitness = [objective(row) for row in pop.encoded]
        order = self.tell(pop, fitness, inv_sqrt_C)
        return Generation(pop, order, float(pop.fitness[order[0]]), pop.encoded[order[0]])

    def should_stop(self, budget: Optional[int] = None) -> Optional[Termination]:
        return termination_check(self.state, self.best_f, self.evaluations, budget)
