"""Elementary symmetric functions, Garding cones and Newton-MacLaurin ratios.

All array functions act on the last axis, so a batch of spectra of shape
``(N, n)`` is handled in one call.  ``sigma_table`` is the workhorse: it
returns the coefficients of ``prod_i (1 + lam_i t)`` up to a requested order.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import DomainError, SingularDenominatorError


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted non-increasingly (ties keep their input order)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size == 0:
            raise DomainError("spectrum must be non-empty")
        if not np.all(np.isfinite(vals)):
            raise DomainError("spectrum entries must be finite")
        order = np.argsort(-vals, kind="stable")
        vals = vals[order]
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.dim


def _as_lambda(lam) -> np.ndarray:
    arr = np.asarray(lam, dtype=float)
    if arr.ndim == 0:
        raise DomainError("spectrum must be at least one-dimensional")
    return arr


def sigma_table(lam, m_max: int | None = None) -> np.ndarray:
    """Return ``sigma_0 .. sigma_{m_max}`` of ``lam`` along a new last axis.

    Uses the product recurrence ``e_j <- e_j + lam_i e_{j-1}``, O(n m_max).
    """
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if m_max is None:
        m_max = n
    if not 0 <= m_max <= n:
        raise DomainError(f"order {m_max} outside [0, {n}]")
    out = np.zeros(lam.shape[:-1] + (m_max + 1,))
    out[..., 0] = 1.0
    for i in range(n):
        li = lam[..., i]
        for j in range(min(i + 1, m_max), 0, -1):
            out[..., j] += li * out[..., j - 1]
    return out


def elementary_symmetric(lam, m: int):
    """sigma_m(lam); ``sigma_0 == 1`` for every input."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if not 0 <= m <= n:
        raise DomainError(f"order {m} outside [0, {n}]")
    val = sigma_table(lam, m)[..., m]
    return float(val) if val.ndim == 0 else val


def deleted_sigma_table(lam, m_max: int | None = None) -> np.ndarray:
    """``out[..., i, m] = sigma_m(lam | i)`` for m = 0..m_max.

    Zeroing entry i leaves exactly the symmetric functions of the remaining
    entries, so no division (and no cancellation) is involved.
    """
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if m_max is None:
        m_max = n - 1
    if not 0 <= m_max <= n - 1:
        raise DomainError(f"deleted order {m_max} outside [0, {n - 1}]")
    mask = 1.0 - np.eye(n)
    removed = lam[..., None, :] * mask
    return sigma_table(removed, m_max)


def deleted_symmetric(lam, m: int, i: int):
    """sigma_m(lam | i) with entry ``i`` (0-based) removed."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if not 0 <= i < n:
        raise DomainError(f"index {i} outside [0, {n})")
    if not 0 <= m <= n - 1:
        raise DomainError(f"deleted order {m} outside [0, {n - 1}]")
    removed = lam.copy()
    removed[..., i] = 0.0
    val = sigma_table(removed, m)[..., m]
    return float(val) if val.ndim == 0 else val


def cone_margins(lam, j: int) -> np.ndarray:
    """``sigma_1 .. sigma_j`` of ``lam`` (empty last axis when j == 0)."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if not 0 <= j <= n:
        raise DomainError(f"cone index {j} outside [0, {n}]")
    return sigma_table(lam, j)[..., 1:]


def cone_contains(lam, j: int, margin: float = 0.0):
    """True iff sigma_m(lam) > margin for every 1 <= m <= j."""
    if margin < 0:
        raise DomainError("margin must be non-negative")
    sig = cone_margins(lam, j)
    inside = np.all(sig > margin, axis=-1)
    return bool(inside) if inside.ndim == 0 else inside


def newton_maclaurin_bound(n: int, k: int) -> float:
    """(k-1)(n-k+1) / (k(n-k+2)), the sharp constant for sigma_k sigma_{k-2} / sigma_{k-1}^2."""
    if not 2 <= k <= n:
        raise DomainError(f"need 2 <= k <= n, got k={k}, n={n}")
    return (k - 1) * (n - k + 1) / (k * (n - k + 2))


def newton_maclaurin_ratio(lam, k: int):
    """sigma_k sigma_{k-2} / sigma_{k-1}^2."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if not 2 <= k <= n:
        raise DomainError(f"need 2 <= k <= n, got k={k}, n={n}")
    sig = sigma_table(lam, k)
    den = sig[..., k - 1] ** 2
    if np.any(den == 0):
        raise SingularDenominatorError("sigma_{k-1} vanishes")
    val = sig[..., k] * sig[..., k - 2] / den
    return float(val) if val.ndim == 0 else val


def shift_expansion(sig, s, m: int, n: int):
    """sigma_m(lam + s*1) from the table ``sig = (sigma_0(lam), ..., sigma_m(lam))``.

    sigma_m(lam + s) = sum_i binom(n-i, m-i) s^(m-i) sigma_i(lam).
    """
    if not 0 <= m <= n:
        raise DomainError(f"order {m} outside [0, {n}]")
    sig = np.asarray(sig, dtype=float)
    if sig.shape[-1] < m + 1:
        raise DomainError(f"need sigma_0..sigma_{m}, got {sig.shape[-1]} entries")
    s = np.asarray(s, dtype=float)
    total = np.zeros(np.broadcast_shapes(sig.shape[:-1], s.shape))
    for i in range(m + 1):
        total = total + comb(n - i, m - i) * s ** (m - i) * sig[..., i]
    return float(total) if total.ndim == 0 else total
