"""Margin correction of the mean vector and the diagonal affine matrix A.

After each distribution update, every discrete coordinate of the sampling
law ``N(m, sigma^2 A C A)`` is pushed back so that the probability of
producing a value other than the dominant one stays above a floor:
``alpha`` on each side of a binary threshold, ``alpha / 2`` below and above
the cell of an interior integer mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DefinitenessError, chi2_isf_1df, chi2_ppf_1df, normal_cdf
from .space import MixedIntegerSpace

# keeps quantile arguments finite when a tail mass underflows
_TAIL_FLOOR = 1e-12


@dataclass(frozen=True)
class MarginContext:
    """Quantities the correction reads but never changes.

    ``C`` is the freshly updated covariance, ``A`` the affine diagonal from
    *before* the update.
    """

    sigma: float
    C: np.ndarray
    A: np.ndarray
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [0, 0.5), got {self.alpha}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def confidence_halfwidth(ctx: MarginContext, j: int, prob: float) -> float:
    """Half-width of the central ``prob`` interval of the j-th marginal."""
    var = ctx.sigma**2 * ctx.A[j] ** 2 * ctx.C[j, j]
    if not var > 0:
        raise DefinitenessError(var, f"marginal variance of dim {j} is {var}")
    return float(np.sqrt(chi2_ppf_1df(prob) * var))


def _toward_threshold(m, ell, ci):
    # sign(0) = 0 keeps a mean sitting exactly on its threshold in place
    return ell + np.sign(m - ell) * np.minimum(np.abs(m - ell), ci)


def _interior_solve(m, A, ell_low, ell_up, base, alpha):
    """Clamp the two outer tail masses at alpha/2 and refit (m, A) to them.

    ``base`` is sigma * sqrt(C_jj); the marginal std is ``base * A``. Entries
    whose tails already satisfy the floor are returned untouched.
    """
    sd = base * A
    p_low = normal_cdf((ell_low - m) / sd)
    p_up = normal_cdf((m - ell_up) / sd)
    half = alpha / 2.0
    active = (p_low < half) | (p_up < half)
    if not np.any(active):
        return m, A

    p_low, p_up = p_low[active], p_up[active]
    p_mid = 1.0 - p_low - p_up
    pl = np.maximum(p_low, half)
    pu = np.maximum(p_up, half)
    total = pl + pu + p_mid
    shrink = (1.0 - total) / (total - 3.0 * half)
    pl = np.clip(pl + shrink * (pl - half), _TAIL_FLOOR, 0.5)
    pu = np.clip(pu + shrink * (pu - half), _TAIL_FLOOR, 0.5)

    r_low = np.sqrt(chi2_isf_1df(2.0 * pl))
    r_up = np.sqrt(chi2_isf_1df(2.0 * pu))
    lo, up = ell_low[active], ell_up[active]
    m_new, A_new = m.copy(), A.copy()
    m_new[active] = (lo * r_up + up * r_low) / (r_low + r_up)
    A_new[active] = (up - lo) / (base[active] * (r_low + r_up))
    return m_new, A_new


def correct_binary_dim(ctx: MarginContext, m_j: float, space: MixedIntegerSpace, j: int) -> float:
    """Move ``m_j`` toward its nearest threshold by at most the
    ``1 - 2 alpha`` confidence half-width. A is left alone."""
    ell = space.nearest_threshold(j, m_j)
    if ctx.alpha == 0.0:
        return float(m_j)
    ci = confidence_halfwidth(ctx, j, 1.0 - 2.0 * ctx.alpha)
    return float(_toward_threshold(m_j, ell, ci))


def correct_integer_dim(ctx: MarginContext, m_j: float, space: MixedIntegerSpace, j: int):
    """Return corrected ``(m_j, A_j)`` for an integer dimension (K >= 3)."""
    thr = space.thresholds(j)
    if len(thr) < 2:
        raise ValueError(f"dimension {j} is binary; use correct_binary_dim")
    if m_j <= thr[0] or m_j > thr[-1]:
        return correct_binary_dim(ctx, m_j, space, j), float(ctx.A[j])
    if ctx.alpha == 0.0:
        return float(m_j), float(ctx.A[j])
    ell_low, ell_up = space.bracketing_thresholds(j, m_j)
    base = ctx.sigma * np.sqrt(ctx.C[j, j])
    m_new, A_new = _interior_solve(
        np.array([m_j], dtype=float), np.array([ctx.A[j]], dtype=float),
        np.array([ell_low]), np.array([ell_up]), np.array([base]), ctx.alpha,
    )
    return float(m_new[0]), float(A_new[0])


def margin_correction(mean: np.ndarray, A: np.ndarray, sigma: float, C: np.ndarray,
                      alpha: float, space: MixedIntegerSpace):
    """Apply the correction to every discrete dimension at once.

    Each dimension is handled independently from the pre-correction values;
    continuous dimensions pass through.

    Returns:
        ``(mean', A')`` as new arrays.
    """
    MarginContext(sigma, C, A, alpha)  # validates alpha and sigma
    mean = np.array(mean, dtype=float)
    A = np.array(A, dtype=float)
    if alpha == 0.0 or not space.discrete:
        return mean, A

    disc = space.discrete_slice
    md = mean[disc]
    Ad = A[disc]
    base = sigma * np.sqrt(np.diag(C)[disc])
    if np.any(~(base > 0)):
        raise DefinitenessError(float(np.min(base)), "non-positive marginal variance")
    thr = space.threshold_table
    n_thr = np.array([len(d.thresholds) for d in space.discrete])
    rows = np.arange(len(md))
    first = thr[:, 0]
    last = thr[rows, n_thr - 1]

    exterior = (n_thr == 1) | (md <= first) | (md > last)
    ell_near = thr[rows, np.argmin(np.abs(thr - md[:, None]), axis=1)]
    ci = np.sqrt(chi2_isf_1df(2.0 * alpha)) * base * Ad
    m_out = np.where(exterior, _toward_threshold(md, ell_near, ci), md)
    A_out = Ad.copy()

    interior = ~exterior
    if np.any(interior):
        k = np.sum(thr[interior] < md[interior, None], axis=1)
        ri = rows[interior]
        m_i, A_i = _interior_solve(
            md[interior], Ad[interior], thr[ri, k - 1], thr[ri, k], base[interior], alpha
        )
        m_out[interior] = m_i
        A_out[interior] = A_i

    mean[disc] = m_out
    A[disc] = A_out
    return mean, A


def marginal_tail_masses(mean, A, sigma, C, space: MixedIntegerSpace):
    """Per discrete dim: ``(P(v <= lower edge of m's cell), P(v > upper edge))``.

    A missing edge (the extreme cells) yields mass 0 on that side.
    """
    disc = space.discrete_slice
    md = np.asarray(mean, dtype=float)[disc]
    sd = sigma * np.asarray(A, dtype=float)[disc] * np.sqrt(np.diag(C)[disc])
    thr = space.threshold_table
    k = space.cell_index(mean)
    rows = np.arange(len(md))
    padded = np.concatenate([np.full((len(md), 1), -np.inf), thr], axis=1)
    lower = padded[rows, k]
    upper = padded[rows, k + 1]
    return normal_cdf((lower - md) / sd), normal_cdf((md - upper) / sd)


def binary_minority_probability(mean, A, sigma, C, space: MixedIntegerSpace) -> np.ndarray:
    """``min(P(vbar_j = z_1), P(vbar_j = z_2))`` for every binary dimension."""
    b = space.binary_slice
    ell = space.threshold_table[: space.n_binary, 0]
    sd = sigma * np.asarray(A, dtype=float)[b] * np.sqrt(np.diag(C)[b])
    mb = np.asarray(mean, dtype=float)[b]
    return np.minimum(normal_cdf((ell - mb) / sd), normal_cdf((mb - ell) / sd))
