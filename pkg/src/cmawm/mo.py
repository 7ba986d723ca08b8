"""Multi-objective CMA-ES (mu = lambda, success-rule step-size) with margin.

Every individual carries its own Gaussian and adapts it like a (1+1)-ES.
Parents and offspring compete together; the next parents are the best
lambda by non-domination level and, within a level, by hypervolume
contribution. Bi-objective minimization only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .margin import binary_minority_probability, margin_correction
from .numerics import RngStream, sqrt_factors
from .space import MixedIntegerSpace

Objective2 = Callable[[np.ndarray], Tuple[float, float]]


def dominates(a, b) -> bool:
    """Pareto dominance for minimization."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_sort(points) -> List[List[int]]:
    """Fast non-dominated sorting.

    Returns:
        Levels as lists of indices, best level first, indices ascending.
    """
    F = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(F)
    if n == 0:
        return []
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, k]: i dominates k
    count = dom.sum(axis=0)
    levels = []
    current = np.flatnonzero(count == 0)
    while current.size:
        levels.append([int(i) for i in current])
        count = count - dom[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return levels


def hypervolume_2d(points, ref=(5.0, 5.0)) -> float:
    """Area dominated by ``points`` and bounded by ``ref`` (staircase sweep)."""
    F = np.asarray(points, dtype=float).reshape(-1, 2)
    r1, r2 = float(ref[0]), float(ref[1])
    F = F[(F[:, 0] < r1) & (F[:, 1] < r2)]
    if F.size == 0:
        return 0.0
    F = F[np.lexsort((F[:, 1], F[:, 0]))]
    area = 0.0
    ceiling = r2
    for f1, f2 in F:
        if f2 < ceiling:
            area += (r1 - f1) * (ceiling - f2)
            ceiling = f2
    return float(area)


def contributing_hypervolume(points, ref, i: int) -> float:
    F = np.asarray(points, dtype=float).reshape(-1, 2)
    if not 0 <= i < len(F):
        raise IndexError(f"point index {i} out of range for {len(F)} points")
    rest = np.delete(F, i, axis=0)
    return max(0.0, hypervolume_2d(F, ref) - hypervolume_2d(rest, ref))


def _rank_level(F: np.ndarray, idx: Sequence[int], ref) -> List[int]:
    """Order one level by repeatedly discarding its least contributor.

    The point discarded last ranks first. Among equal contributions the
    larger index is discarded first, so ties keep index order.
    """
    remaining = list(idx)
    removed = []
    while len(remaining) > 1:
        sub = F[remaining]
        contrib = [contributing_hypervolume(sub, ref, k) for k in range(len(remaining))]
        worst = min(range(len(remaining)), key=lambda k: (contrib[k], -remaining[k]))
        removed.append(remaining.pop(worst))
    removed.extend(remaining)
    return removed[::-1]


def rank_population(points, ref=(5.0, 5.0)) -> np.ndarray:
    """Total order of ``points``: level first, then hypervolume contribution."""
    F = np.asarray(points, dtype=float).reshape(-1, 2)
    order: List[int] = []
    for level in nondominated_sort(F):
        order.extend(_rank_level(F, level, ref))
    return np.array(order, dtype=int)


@dataclass(frozen=True)
class MoParams:
    popsize: int
    d: float
    p_target: float
    c_p: float
    c_c: float
    c_cov: float
    p_thresh: float
    alpha: float
    ref: Tuple[float, float] = (5.0, 5.0)

    def __post_init__(self):
        if self.popsize < 1:
            raise ValueError("popsize must be positive")
        if not 0.0 < self.p_target < 1.0:
            raise ValueError("p_target must lie in (0, 1)")
        if not 0.0 < self.p_thresh < 1.0:
            raise ValueError("p_thresh must lie in (0, 1)")
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [0, 0.5), got {self.alpha}")


def default_mo_params(n: int, popsize: int, alpha: Optional[float] = None,
                      ref=(5.0, 5.0), **overrides) -> MoParams:
    """Improved MO-CMA-ES defaults; ``alpha`` defaults to ``1 / (n popsize)``."""
    p_target = 1.0 / (5.0 + 0.5)
    params = MoParams(
        popsize=popsize,
        d=1.0 + n / 2.0,
        p_target=p_target,
        c_p=p_target / (2.0 + p_target),
        c_c=2.0 / (n + 2.0),
        c_cov=2.0 / (n * n + 6.0),
        p_thresh=0.44,
        alpha=1.0 / (n * popsize) if alpha is None else float(alpha),
        ref=(float(ref[0]), float(ref[1])),
    )
    return replace(params, **overrides) if overrides else params


@dataclass
class MoIndividual:
    """One member of the population with its private search distribution."""

    x: np.ndarray
    encoded: np.ndarray
    p_succ: float
    sigma: float
    p_c: np.ndarray
    C: np.ndarray
    A: np.ndarray
    f: Tuple[float, float]

    def copy(self) -> "MoIndividual":
        return MoIndividual(self.x.copy(), self.encoded.copy(), self.p_succ, self.sigma,
                            self.p_c.copy(), self.C.copy(), self.A.copy(), self.f)


def _evaluate(objective: Objective2, encoded: np.ndarray, who: str) -> Tuple[float, float]:
    f = tuple(float(v) for v in objective(encoded))
    if len(f) != 2 or not all(math.isfinite(v) for v in f):
        raise ValueError(f"objective of {who} is not a finite pair: {f}")
    return f  # type: ignore[return-value]


def initial_population(space: MixedIntegerSpace, means: np.ndarray, sigma: float,
                       params: MoParams, objective: Objective2) -> List[MoIndividual]:
    """Fresh individuals at the given means (one row each) with C = I."""
    means = np.asarray(means, dtype=float)
    if means.shape != (params.popsize, space.n):
        raise ValueError(f"means must have shape ({params.popsize}, {space.n})")
    pop = []
    for i, x in enumerate(means):
        enc = space.encode(x)
        pop.append(MoIndividual(x.copy(), enc, params.p_target, float(sigma), np.zeros(space.n),
                                np.eye(space.n), np.ones(space.n),
                                _evaluate(objective, enc, f"initial individual {i}")))
    return pop


def _smooth_success(ind: MoIndividual, success: float, params: MoParams) -> None:
    ind.p_succ = (1 - params.c_p) * ind.p_succ + params.c_p * success
    ind.sigma *= math.exp((ind.p_succ - params.p_target) / (params.d * (1 - params.p_target)))


def mo_step(population: List[MoIndividual], params: MoParams, space: MixedIntegerSpace,
            objective: Objective2, rng: RngStream) -> Tuple[List[MoIndividual], np.ndarray]:
    """One generation. Returns the next parents and the offspring success flags."""
    lam = params.popsize
    if len(population) != lam:
        raise ValueError(f"population has {len(population)} members, expected {lam}")
    n = space.n

    offspring = []
    steps = []
    for i, parent in enumerate(population):
        sqrt_C = sqrt_factors(parent.C)[0]
        y = sqrt_C @ rng.normal(n)
        child = parent.copy()
        child.x = parent.x + parent.sigma * y
        v = parent.x + parent.sigma * parent.A * y
        child.encoded = space.encode(v)
        child.f = _evaluate(objective, child.encoded, f"offspring {i}")
        offspring.append(child)
        steps.append(y)

    pool = list(population) + offspring
    order = rank_population([ind.f for ind in pool], params.ref)
    selected = np.zeros(2 * lam, dtype=bool)
    selected[order[:lam]] = True
    success = selected[lam:].astype(float)

    cc = params.c_c
    for i, child in enumerate(offspring):
        _smooth_success(child, success[i], params)
        if child.p_succ < params.p_thresh:
            child.p_c = (1 - cc) * child.p_c + math.sqrt(cc * (2 - cc)) * steps[i]
            child.C = (1 - params.c_cov) * child.C + params.c_cov * np.outer(child.p_c, child.p_c)
        else:
            child.p_c = (1 - cc) * child.p_c
            child.C = (1 - params.c_cov) * child.C + params.c_cov * (
                np.outer(child.p_c, child.p_c) + cc * (2 - cc) * child.C)
        child.C = (child.C + child.C.T) / 2
    for i, parent in enumerate(population):
        _smooth_success(parent, success[i], params)

    for ind in pool:
        ind.x, ind.A = margin_correction(ind.x, ind.A, ind.sigma, ind.C, params.alpha, space)

    return [pool[k] for k in order[:lam]], success


def population_hypervolume(population: Sequence[MoIndividual], ref=(5.0, 5.0)) -> float:
    return hypervolume_2d([ind.f for ind in population], ref)


def p_med(ind: MoIndividual, space: MixedIntegerSpace) -> float:
    """Median over binary dims of the minority-value probability."""
    if space.n_binary == 0:
        return math.nan
    return float(np.median(binary_minority_probability(ind.x, ind.A, ind.sigma, ind.C, space)))


class MOCMAwM:
    """Population-level driver around :func:`mo_step`.

    Args:
        space: The search space.
        objective: Maps an encoded vector to an objective pair.
        means: Initial mean of every individual, shape ``(popsize, N)``.
        sigma: Initial step-size shared by all individuals.
        alpha: Margin parameter; 0 gives the plain algorithm.
        rng: Random stream or integer seed.
    """

    def __init__(self, space: MixedIntegerSpace, objective: Objective2, means, sigma: float,
                 alpha: Optional[float] = None, ref=(5.0, 5.0), rng=0, **overrides):
        means = np.asarray(means, dtype=float)
        self.space = space
        self.objective = objective
        self.params = default_mo_params(space.n, len(means), alpha, ref, **overrides)
        self.rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
        self.population = initial_population(space, means, sigma, self.params, objective)
        self.iteration = 0

    def step(self) -> np.ndarray:
        self.population, success = mo_step(self.population, self.params, self.space,
                                           self.objective, self.rng)
        self.iteration += 1
        return success

    def hypervolume(self) -> float:
        return population_hypervolume(self.population, self.params.ref)

    def p_med_values(self) -> np.ndarray:
        return np.array([p_med(ind, self.space) for ind in self.population])
