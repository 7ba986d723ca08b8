"""Mixed-integer search spaces and the relaxed-to-discrete encoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Discrete:
    """A finite ordered set of admissible values for one dimension.

    ``thresholds`` default to the midpoints between consecutive values. They
    may be given explicitly (one fewer than ``values``) when a caller needs a
    different cut, e.g. the ``x > 0`` binarization used by the integer
    mutation baseline.
    """

    values: tuple
    thresholds: Optional[tuple] = None

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise ValueError(f"a discrete dimension needs at least 2 values, got {vals}")
        if not all(np.isfinite(vals)):
            raise ValueError(f"discrete values must be finite, got {vals}")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"discrete values must be strictly increasing, got {vals}")
        if self.thresholds is None:
            thr = tuple((a + b) / 2.0 for a, b in zip(vals, vals[1:]))
        else:
            thr = tuple(float(t) for t in self.thresholds)
            if len(thr) != len(vals) - 1:
                raise ValueError("need exactly len(values) - 1 thresholds")
            if any(b <= a for a, b in zip(thr, thr[1:])):
                raise ValueError("thresholds must be strictly increasing")
            if any(not (lo <= t < hi) for t, lo, hi in zip(thr, vals, vals[1:])):
                raise ValueError("each threshold must separate its two values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "thresholds", thr)

    @property
    def is_binary(self) -> bool:
        return len(self.values) == 2


@dataclass(frozen=True)
class MixedIntegerSpace:
    """Continuous dimensions first, then binary, then integer (K >= 3) ones.

    Args:
        n_continuous: Number of leading continuous dimensions.
        discrete: One ``Discrete`` (or plain value sequence) per remaining
            dimension; all two-valued dimensions must precede the others.
    """

    n_continuous: int
    discrete: tuple = ()
    _values: np.ndarray = field(init=False, repr=False, compare=False)
    _thresholds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_continuous < 0:
            raise ValueError("n_continuous must be non-negative")
        dims = tuple(d if isinstance(d, Discrete) else Discrete(tuple(d)) for d in self.discrete)
        if self.n_continuous + len(dims) == 0:
            raise ValueError("the space needs at least one dimension")
        kinds = [d.is_binary for d in dims]
        if kinds != sorted(kinds, reverse=True):
            raise ValueError("binary dimensions must precede integer dimensions")
        object.__setattr__(self, "discrete", dims)

        kmax = max((len(d.values) for d in dims), default=2)
        values = np.full((len(dims), kmax), np.nan)
        thresholds = np.full((len(dims), kmax - 1), np.inf)
        for i, d in enumerate(dims):
            values[i, : len(d.values)] = d.values
            thresholds[i, : len(d.thresholds)] = d.thresholds
        object.__setattr__(self, "_values", values)
        object.__setattr__(self, "_thresholds", thresholds)

    @classmethod
    def build(cls, n_continuous: int = 0, n_binary: int = 0,
              integer_values: Sequence[Sequence[float]] = ()) -> "MixedIntegerSpace":
        dims = [Discrete((0.0, 1.0)) for _ in range(n_binary)]
        dims += [Discrete(tuple(v)) for v in integer_values]
        return cls(n_continuous, tuple(dims))

    @property
    def n(self) -> int:
        return self.n_continuous + len(self.discrete)

    @property
    def n_binary(self) -> int:
        return sum(d.is_binary for d in self.discrete)

    @property
    def n_integer(self) -> int:
        return len(self.discrete) - self.n_binary

    @property
    def binary_slice(self) -> slice:
        return slice(self.n_continuous, self.n_continuous + self.n_binary)

    @property
    def integer_slice(self) -> slice:
        return slice(self.n_continuous + self.n_binary, self.n)

    @property
    def discrete_slice(self) -> slice:
        return slice(self.n_continuous, self.n)

    def is_discrete(self, j: int) -> bool:
        return self.n_continuous <= j < self.n

    def dimension(self, j: int) -> Discrete:
        if not self.is_discrete(j):
            raise ValueError(f"dimension {j} is not discrete")
        return self.discrete[j - self.n_continuous]

    def thresholds(self, j: int) -> np.ndarray:
        return np.asarray(self.dimension(j).thresholds)

    @property
    def threshold_table(self) -> np.ndarray:
        """Thresholds of all discrete dims, padded with ``+inf`` on the right."""
        return self._thresholds

    def cell_index(self, v: np.ndarray) -> np.ndarray:
        """0-based index k of the cell ``(thr[k-1], thr[k]]`` holding each
        discrete coordinate. Works on a single vector or a batch of rows."""
        vd = np.asarray(v, dtype=float)[..., self.discrete_slice]
        return np.sum(vd[..., :, None] > self._thresholds, axis=-1)

    def encode(self, v: np.ndarray) -> np.ndarray:
        """Map relaxed vector(s) to mixed-integer candidate(s).

        A coordinate lying exactly on a threshold belongs to the lower cell.
        """
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.n:
            raise ValueError(f"expected vectors of length {self.n}, got {v.shape[-1]}")
        out = v.copy()
        if self.discrete:
            k = self.cell_index(v)
            rows = np.arange(len(self.discrete))
            out[..., self.discrete_slice] = self._values[rows, k]
        return out

    def nearest_threshold(self, j: int, m_j: float) -> float:
        """Threshold of dim j closest to ``m_j``; ties go to the smaller one."""
        thr = self.thresholds(j)
        return float(thr[np.argmin(np.abs(thr - m_j))])

    def bracketing_thresholds(self, j: int, m_j: float):
        """``(largest threshold < m_j, smallest threshold >= m_j)`` for an
        interior mean."""
        thr = self.thresholds(j)
        if not thr[0] < m_j <= thr[-1]:
            raise ValueError(
                f"m_j={m_j} is outside ({thr[0]}, {thr[-1]}]; no bracketing pair exists"
            )
        k = int(np.searchsorted(thr, m_j, side="left"))
        return float(thr[k - 1]), float(thr[k])
