"""Mixed-integer benchmark functions and their standard experimental setups.

All evaluators take an *encoded* vector: the first ``n_co`` entries are
continuous and the rest are already discrete (bits or integers).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .numerics import RngStream
from .space import Discrete, MixedIntegerSpace

INTEGER_RANGE = tuple(range(-10, 11))
DSINT_RANGE = tuple(range(-10, 21))


def _check(x, n_co: int) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not 0 < n_co < x.size:
        raise ValueError(f"expected a vector longer than n_co={n_co}, got shape {x.shape}")
    return x[:n_co], x[n_co:]


def _check_bits(bits: np.ndarray) -> None:
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("binary part must contain only 0 and 1")


def _ellipsoid(z: np.ndarray) -> float:
    if z.size == 1:
        return float(z[0] ** 2)
    scale = 1000.0 ** (np.arange(z.size) / (z.size - 1))
    return float(np.sum((scale * z) ** 2))


def leading_ones(bits: np.ndarray) -> int:
    zeros = np.flatnonzero(bits == 0)
    return int(bits.size if zeros.size == 0 else zeros[0])


def trailing_zeros(bits: np.ndarray) -> int:
    ones = np.flatnonzero(bits == 1)
    return int(bits.size if ones.size == 0 else bits.size - 1 - ones[-1])


def sphere_onemax(x, n_co: int) -> float:
    co, bits = _check(x, n_co)
    _check_bits(bits)
    return float(np.sum(co**2) + bits.size - np.sum(bits))


def sphere_leadingones(x, n_co: int) -> float:
    co, bits = _check(x, n_co)
    _check_bits(bits)
    return float(np.sum(co**2) + bits.size - leading_ones(bits))


def ellipsoid_onemax(x, n_co: int) -> float:
    co, bits = _check(x, n_co)
    _check_bits(bits)
    return _ellipsoid(co) + float(bits.size - np.sum(bits))


def ellipsoid_leadingones(x, n_co: int) -> float:
    co, bits = _check(x, n_co)
    _check_bits(bits)
    return _ellipsoid(co) + float(bits.size - leading_ones(bits))


def sphere_int(x, n_co: int) -> float:
    _check(x, n_co)
    return float(np.sum(np.asarray(x, dtype=float) ** 2))


def ellipsoid_int(x, n_co: int) -> float:
    """Ellipsoid over all N coordinates; the conditioning spans the full vector."""
    _check(x, n_co)
    return _ellipsoid(np.asarray(x, dtype=float))


def dslotz(x, n_co: int) -> Tuple[float, float]:
    co, bits = _check(x, n_co)
    _check_bits(bits)
    nb = bits.size
    f1 = np.sum(co**2) / n_co + (nb - leading_ones(bits)) / nb
    f2 = np.sum((1 - co) ** 2) / n_co + (nb - trailing_zeros(bits)) / nb
    return float(f1), float(f2)


def dsint(x, n_co: int) -> Tuple[float, float]:
    co, z = _check(x, n_co)
    f1 = np.sum(co**2) / (100.0 * n_co) + np.sum(z**2) / (100.0 * z.size)
    f2 = np.sum((10 - co) ** 2) / (100.0 * n_co) + np.sum((10 - z) ** 2) / (100.0 * z.size)
    return float(f1), float(f2)


@dataclass(frozen=True)
class BenchmarkSpec:
    """A benchmark bound to a dimension, with its space and start recipe.

    Attributes:
        name: Catalog key.
        n_objectives: 1 or 2.
        evaluate: Encoded vector -> float (or pair).
        space: Relaxed search space used by the margin methods.
        n_co: Number of leading continuous coordinates.
        sigma0: Initial step-size.
        init_low, init_high: Bounds of the uniform draw for initial means.
        discrete_init: Value of the initial discrete mean coordinates, or
            None when they are drawn like the continuous ones.
        box: Bound on the discrete coordinates for the box-constrained
            integer mutation baseline.
    """

    name: str
    n_objectives: int
    evaluate: Callable
    space: MixedIntegerSpace
    n_co: int
    sigma0: float
    init_low: float
    init_high: float
    discrete_init: Optional[float]
    box: float

    @property
    def n(self) -> int:
        return self.space.n

    def initial_mean(self, rng: RngStream) -> np.ndarray:
        m = np.empty(self.n)
        m[: self.n_co] = rng.uniform(self.init_low, self.init_high, self.n_co)
        if self.discrete_init is None:
            m[self.n_co:] = rng.uniform(self.init_low, self.init_high, self.n - self.n_co)
        else:
            m[self.n_co:] = self.discrete_init
        return m

    def initial_population(self, rng: RngStream, popsize: int) -> np.ndarray:
        return np.stack([self.initial_mean(rng) for _ in range(popsize)])

    def im_space(self) -> MixedIntegerSpace:
        """Space for the integer mutation baseline: bits are ``1{x > 0}``."""
        if self.space.n_binary == 0:
            return self.space
        dims = [Discrete((0.0, 1.0), (0.0,)) for _ in range(self.space.n_binary)]
        dims += [d for d in self.space.discrete if not d.is_binary]
        return MixedIntegerSpace(self.space.n_continuous, tuple(dims))

    def im_box(self) -> Tuple[np.ndarray, np.ndarray]:
        hi = np.full(self.n, np.inf)
        hi[self.n_co:] = self.box
        return -hi, hi


_SINGLE = {
    "SphereOneMax": (sphere_onemax, "binary"),
    "SphereLeadingOnes": (sphere_leadingones, "binary"),
    "EllipsoidOneMax": (ellipsoid_onemax, "binary"),
    "EllipsoidLeadingOnes": (ellipsoid_leadingones, "binary"),
    "SphereInt": (sphere_int, "integer"),
    "EllipsoidInt": (ellipsoid_int, "integer"),
}
_MULTI = {"DSLOTZ": (dslotz, "binary"), "DSInt": (dsint, "integer")}

BENCHMARK_NAMES = tuple(_SINGLE) + tuple(_MULTI)


def make_benchmark(name: str, n: int, n_co: Optional[int] = None,
                   integer_values: Optional[Tuple[int, ...]] = None) -> BenchmarkSpec:
    """Build a benchmark with ``n_co`` continuous dims (default ``n // 2``)."""
    if name not in _SINGLE and name not in _MULTI:
        raise ValueError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARK_NAMES)}")
    n_co = n // 2 if n_co is None else n_co
    if not 0 < n_co < n:
        raise ValueError(f"need 0 < n_co < n, got n_co={n_co}, n={n}")
    fn, kind = _SINGLE.get(name) or _MULTI[name]
    n_disc = n - n_co
    multi = name in _MULTI
    if kind == "binary":
        space = MixedIntegerSpace.build(n_co, n_binary=n_disc)
        box = 1.0
    else:
        vals = integer_values or (DSINT_RANGE if name == "DSInt" else INTEGER_RANGE)
        space = MixedIntegerSpace.build(n_co, integer_values=[vals] * n_disc)
        box = 10.0

    def evaluate(x, _fn=fn, _n_co=n_co):
        return _fn(x, _n_co)

    if not multi:
        return BenchmarkSpec(name, 1, evaluate, space, n_co, 1.0, 1.0, 3.0, 0.0, box)
    if name == "DSLOTZ":
        return BenchmarkSpec(name, 2, evaluate, space, n_co, 1.0, 0.0, 1.0, None, box)
    return BenchmarkSpec(name, 2, evaluate, space, n_co, 5.0, 0.0, 10.0, None, box)


def benchmark_catalog(n: int = 20) -> Dict[str, BenchmarkSpec]:
    return {name: make_benchmark(name, n) for name in BENCHMARK_NAMES}
