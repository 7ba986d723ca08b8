"""Random streams and the scalar/matrix primitives shared by the optimizers.

Random numbers come from numpy's counter-based ``Philox`` bit generator. A
stream for trial ``k`` of an experiment with master seed ``s`` is seeded through
``numpy.random.SeedSequence([s, k])``, so trials never share a sequence and
can be run in any order.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import erfc

ArrayLike = Union[float, np.ndarray]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


class DefinitenessError(ValueError):
    """Raised when a matrix that must be positive definite is not."""

    def __init__(self, eigenvalue: float, message: Optional[str] = None):
        self.eigenvalue = float(eigenvalue)
        super().__init__(
            message or f"matrix is not positive definite (eigenvalue {eigenvalue!r})"
        )


class RngStream:
    """Single-owner wrapper around a Philox generator.

    Args:
        seed: Unsigned 64-bit master seed.
        stream: Optional stream index (e.g. the trial number). Streams with
            the same seed and different indices are statistically independent.
    """

    def __init__(self, seed: int, stream: Optional[int] = None):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        entropy = [int(seed)] if stream is None else [int(seed), int(stream)]
        self.seed = int(seed)
        self.stream = stream
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def uniform(self, low, high, size=None):
        return self.generator.uniform(low, high, size)

    def random(self) -> float:
        return float(self.generator.random())

    def permutation(self, items) -> np.ndarray:
        return self.generator.permutation(items)

    def geometric(self, p: float, size=None):
        # numpy counts trials (support 1, 2, ...); shift to failures before success
        return self.generator.geometric(p, size) - 1


def standard_normal_vector(rng: RngStream, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return rng.normal(n)


def geometric_sample(rng: RngStream, p: float) -> int:
    """Draw k >= 0 with P(k) = p (1 - p)**k."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return int(rng.geometric(p))


def _symmetrize(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {C.shape}")
    return (C + C.T) / 2.0


def sym_eig(C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the symmetrized matrix (ascending eigenvalues)."""
    return np.linalg.eigh(_symmetrize(C))


def sqrt_factors(C: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(C^{1/2}, C^{-1/2}, eigenvalues)`` from one decomposition.

    Raises:
        DefinitenessError: if the smallest eigenvalue is not positive.
    """
    d, B = sym_eig(C)
    if not np.all(np.isfinite(d)):
        raise DefinitenessError(float("nan"), "matrix has non-finite eigenvalues")
    if d[0] <= 0.0:
        raise DefinitenessError(d[0])
    sd = np.sqrt(d)
    S = (B * sd) @ B.T
    S_inv = (B / sd) @ B.T
    return _symmetrize(S), _symmetrize(S_inv), d


def matrix_sqrt(C: np.ndarray) -> np.ndarray:
    return sqrt_factors(C)[0]


def matrix_inverse_sqrt(C: np.ndarray) -> np.ndarray:
    return sqrt_factors(C)[1]


def eigen_extremes(C: np.ndarray) -> Tuple[float, float]:
    """Smallest eigenvalue and the ratio largest / smallest.

    Negative eigenvalues are reported as they are; the ratio is then
    meaningless but still returned (``inf`` for a zero smallest eigenvalue).
    """
    d = np.linalg.eigvalsh(_symmetrize(C))
    lo, hi = float(d[0]), float(d[-1])
    cond = math.inf if lo == 0.0 else hi / lo
    return lo, cond


def normal_cdf(x: ArrayLike) -> ArrayLike:
    """Standard normal CDF, accurate in both tails."""
    out = 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)
    return float(out) if np.ndim(out) == 0 else out


# Rational approximation to the normal quantile (P. J. Acklam), refined below.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549671671106227e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)


def _lower_quantile(p: np.ndarray) -> np.ndarray:
    """Normal quantile for 0 < p <= 0.5 (result <= 0)."""
    x = np.empty_like(p)
    tail = p < 0.02425
    q = np.sqrt(-2.0 * np.log(p[tail]))
    x[tail] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    )
    q = p[~tail] - 0.5
    r = q * q
    x[~tail] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    )
    for _ in range(2):
        # Halley step on Phi(x) - p; Phi evaluated via erfc so the tail keeps precision
        e = 0.5 * erfc(-x / _SQRT2) - p
        u = e * _SQRT2PI * np.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


def chi2_isf_1df(s: ArrayLike) -> ArrayLike:
    """Upper-tail quantile of the chi-squared law with one degree of freedom.

    Returns q with P(chi2_1 > q) = s. Working from the tail mass avoids the
    cancellation of forming ``1 - s`` when ``s`` is tiny.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(~(s_arr > 0.0)) or np.any(s_arr > 1.0):
        raise ValueError("tail probability must lie in (0, 1]")
    half = np.atleast_1d(s_arr / 2.0)
    z = _lower_quantile(half.copy())
    z[half == 0.5] = 0.0
    q = z * z
    return float(q[0]) if s_arr.ndim == 0 else q.reshape(s_arr.shape)


def chi2_ppf_1df(p: ArrayLike) -> ArrayLike:
    """Quantile q with P(chi2_1 <= q) = p, for 0 <= p < 1."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr >= 0.0)) or np.any(p_arr >= 1.0):
        raise ValueError("p must lie in [0, 1)")
    return chi2_isf_1df(1.0 - p_arr)


def expected_norm(n: int) -> float:
    """Closed-form approximation of E||N(0, I_n)||."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
