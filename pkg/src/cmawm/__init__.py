"""CMA-ES with margin for mixed-integer black-box optimization."""

from .benchmarks import BenchmarkSpec, benchmark_catalog, make_benchmark
from .cma import CMAwM, CmaParams, CmaState, Termination, default_params
from .im import CMAESIM
from .margin import margin_correction
from .mo import MOCMAwM, hypervolume_2d, nondominated_sort, rank_population
from .numerics import RngStream
from .space import Discrete, MixedIntegerSpace

__all__ = [
    "BenchmarkSpec", "CMAESIM", "CMAwM", "CmaParams", "CmaState", "Discrete",
    "MOCMAwM", "MixedIntegerSpace", "RngStream", "Termination", "benchmark_catalog",
    "default_params", "hypervolume_2d", "make_benchmark", "margin_correction",
    "nondominated_sort", "rank_population",
]

__version__ = "0.1.0"
