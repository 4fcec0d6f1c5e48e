"""The curvature operator sigma_k + alpha sigma_{k-1} - sum alpha_l sigma_l.

Two forms are exposed.  The undivided form

    F(W) = sigma_k + alpha sigma_{k-1} - sum_{l<=k-2} alpha_l sigma_l

is the equation itself; the quotient form

    G(W) = sigma_k / sigma_{k-1} - sum_{l<=k-2} alpha_l sigma_l / sigma_{k-1}

is elliptic and concave on Gamma_{k-1} when alpha_l >= 0, and an admissible
W solves F = 0 iff G(W) = -alpha.  The lambda-level functions work on batches
of spectra (last axis = eigenvalues, ``alpha_l`` last axis = l); the
matrix-level functions diagonalise first and rotate derivatives back.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ConditionViolatedError, DomainError, InadmissibleError
from .spectral import as_symmetric, eigen_sym, rotate_diag
from .symfun import deleted_sigma_table, sigma_table

MARGIN_REL = 1e-10
MARGIN_FLOOR = 1e-300

Coef = Any  # float, ndarray of samples, or callable(*coords)


def _sample(coef: Coef, coords):
    if callable(coef):
        if coords is None:
            raise DomainError("callable coefficient needs sample positions")
        return np.asarray(coef(*coords), dtype=float)
    return np.asarray(coef, dtype=float)


def _split_coords(x):
    if x is None:
        return None
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    return tuple(x[..., i] for i in range(x.shape[-1]))


@dataclass
class CoefficientSet:
    """Coefficient fields of the operator.

    ``alpha`` multiplies sigma_{k-1} and may have any sign.  ``alpha_l[l]``
    multiplies sigma_l for l = 0..k-2 and must be non-negative.  Each entry is
    a constant, an array already sampled at the evaluation points, or a
    callable taking the coordinate arrays positionally.  ``factors`` gives an
    optional ``(g_l, p_l)`` per l with alpha_l = g_l ** p_l; when ``alpha_l``
    is empty it is built from the factors.
    """

    alpha: Coef = 0.0
    alpha_l: Sequence[Coef] = ()
    factors: Sequence[tuple[Coef, float] | None] | None = None

    def __post_init__(self):
        self.alpha_l = list(self.alpha_l)
        if self.factors is not None:
            self.factors = list(self.factors)
            if not self.alpha_l:
                self.alpha_l = [_power_coef(f) for f in self.factors]
            elif len(self.factors) != len(self.alpha_l):
                raise DomainError("factors must match alpha_l in length")

    def sample(self, k: int, x=None):
        """Return ``(alpha, alpha_l)`` sampled at ``x``; alpha_l gets a trailing axis of length k-1."""
        coords = _split_coords(x)
        if len(self.alpha_l) > k - 1:
            raise DomainError(f"{len(self.alpha_l)} lower coefficients given for k={k}")
        alpha = _sample(self.alpha, coords)
        cols = [_sample(c, coords) for c in self.alpha_l]
        cols += [np.zeros(())] * (k - 1 - len(cols))
        shape = np.broadcast_shapes(alpha.shape, *(c.shape for c in cols))
        alpha_l = np.stack([np.broadcast_to(c, shape) for c in cols], axis=-1)
        if np.any(alpha_l < 0):
            raise DomainError("alpha_l must be non-negative wherever sampled")
        if self.factors is not None:
            self._check_factors(alpha_l, coords)
        return np.broadcast_to(alpha, shape), alpha_l

    def _check_factors(self, alpha_l, coords):
        for ell, fac in enumerate(self.factors):
            if fac is None:
                continue
            g, p = fac
            if p < 0:
                raise DomainError("factor powers must be non-negative")
            gv = _sample(g, coords)
            if np.any(gv < 0):
                raise DomainError(f"g_{ell} must be non-negative")
            want = np.broadcast_to(gv**p, alpha_l.shape[:-1])
            got = alpha_l[..., ell]
            if np.any(np.abs(got - want) > 1e-12 * np.maximum(np.abs(want), 1e-300)):
                raise DomainError(f"alpha_{ell} differs from g_{ell}^p_{ell}")


def _power_coef(fac):
    if fac is None:
        return 0.0
    g, p = fac
    if callable(g):
        return lambda *c: np.asarray(g(*c), dtype=float) ** p
    return np.asarray(g, dtype=float) ** p


@dataclass
class OperatorSpec:
    """Dimension ``n``, order ``k`` (2 <= k <= n), coefficients and an optional shift tensor chi."""

    n: int
    k: int
    coefficients: CoefficientSet = field(default_factory=CoefficientSet)
    shift: Callable | np.ndarray | None = None

    def __post_init__(self):
        if not 2 <= self.k <= self.n:
            raise DomainError(f"need 2 <= k <= n, got n={self.n}, k={self.k}")

    def sample(self, x=None):
        return self.coefficients.sample(self.k, x)

    def shift_at(self, x=None):
        if self.shift is None:
            return None
        chi = _sample(self.shift, _split_coords(x))
        return as_symmetric(chi)


# ---------------------------------------------------------------------------
# lambda-level kernels


def margin_thresholds(lam, orders: int, rel: float = MARGIN_REL) -> np.ndarray:
    """Per-order cone thresholds rel * |lam|_inf^j + floor, j = 1..orders."""
    lam = np.asarray(lam, dtype=float)
    scale = np.max(np.abs(lam), axis=-1, keepdims=True)
    j = np.arange(1, orders + 1)
    return rel * scale**j + MARGIN_FLOOR


def admissibility(lam, k: int, rel: float = MARGIN_REL):
    """Return ``(sig, ok)``: the sigma table to order k and the Gamma_{k-1} flag with margin."""
    sig = sigma_table(lam, k)
    if k == 1:
        return sig, np.ones(sig.shape[:-1], dtype=bool)
    thr = margin_thresholds(lam, k - 1, rel)
    ok = np.all(sig[..., 1:k] > thr, axis=-1)
    return sig, ok


def raise_if_inadmissible(lam, sig, ok, k, rel=MARGIN_REL):
    if np.all(ok):
        return
    bad = np.argwhere(~np.atleast_1d(ok))[0]
    where = tuple(int(b) for b in bad) if np.ndim(ok) else None
    sig_b = sig[tuple(bad)] if np.ndim(ok) else sig
    lam_b = np.asarray(lam)[tuple(bad)] if np.ndim(ok) else np.asarray(lam)
    thr = margin_thresholds(lam_b, k - 1, rel)
    for j in range(1, k):
        if not sig_b[j] > thr[j - 1]:
            raise InadmissibleError(j, sig_b[j], thr[j - 1], where)


def F_lambda(lam, alpha, alpha_l, k: int):
    """sigma_k + alpha sigma_{k-1} - sum_l alpha_l sigma_l, defined for every lam."""
    sig = sigma_table(lam, k)
    alpha_l = np.asarray(alpha_l, dtype=float)
    lower = np.sum(alpha_l * sig[..., : k - 1], axis=-1)
    return sig[..., k] + np.asarray(alpha) * sig[..., k - 1] - lower


def G_lambda(lam, alpha_l, k: int, check: bool = True, rel: float = MARGIN_REL):
    """Quotient form on Gamma_{k-1}.

    With ``check`` an inadmissible entry raises; otherwise such entries come
    back as NaN (callers that need flags use :func:`G_lambda_flagged`).
    """
    sig, ok = admissibility(lam, k, rel)
    if check:
        raise_if_inadmissible(lam, sig, ok, k, rel)
    alpha_l = np.asarray(alpha_l, dtype=float)
    den = sig[..., k - 1]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        num = sig[..., k] - np.sum(alpha_l * sig[..., : k - 1], axis=-1)
        val = num / den
    return np.where(ok, val, np.nan)


FLAG_OK, FLAG_INADMISSIBLE, FLAG_OVERFLOW = 0, 1, 2


def G_lambda_flagged(lam, alpha_l, k: int, rel: float = MARGIN_REL):
    """Quotient form with a status flag per point instead of NaN or exceptions."""
    sig, ok = admissibility(lam, k, rel)
    alpha_l = np.asarray(alpha_l, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        num = sig[..., k] - np.sum(alpha_l * sig[..., : k - 1], axis=-1)
        val = num / sig[..., k - 1]
    flags = np.where(ok, FLAG_OK, FLAG_INADMISSIBLE)
    flags = np.where(ok & ~np.isfinite(val), FLAG_OVERFLOW, flags)
    val = np.where(flags == FLAG_OK, val, 0.0)
    return val, flags


def G_grad_lambda(lam, alpha_l, k: int, check: bool = True, rel: float = MARGIN_REL):
    """dG/dlam_i, i.e. the diagonal of the linearisation in the eigenframe.

    G^{ii} = (sigma_{k-1}(lam|i) sigma_{k-1} - sigma_k sigma_{k-2}(lam|i)) / sigma_{k-1}^2
             - sum_l alpha_l (sigma_{l-1}(lam|i) sigma_{k-1} - sigma_l sigma_{k-2}(lam|i)) / sigma_{k-1}^2
    """
    lam = np.asarray(lam, dtype=float)
    sig, ok = admissibility(lam, k, rel)
    if check:
        raise_if_inadmissible(lam, sig, ok, k, rel)
    dele = deleted_sigma_table(lam, k - 1)  # (..., n, k)
    s_km1 = sig[..., k - 1, None]
    s_k = sig[..., k, None]
    d_km2 = dele[..., k - 2]
    d_km1 = dele[..., k - 1]
    alpha_l = np.asarray(alpha_l, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        top = d_km1 * s_km1 - s_k * d_km2
        for ell in range(k - 1):
            d_lm1 = dele[..., ell - 1] if ell >= 1 else 0.0
            top = top - alpha_l[..., ell, None] * (d_lm1 * s_km1 - sig[..., ell, None] * d_km2)
        grad = top / s_km1**2
    return np.where(ok[..., None], grad, np.nan)


def G0_identity(n: int, k: int) -> float:
    """G_0(I_n) with unit lower coefficients: (binom(n,k) - sum_l binom(n,l)) / binom(n,k-1)."""
    return (comb(n, k) - sum(comb(n, ell) for ell in range(k - 1))) / comb(n, k - 1)


def homotopy_coefficients(alpha, alpha_l, t: float, n: int, k: int):
    """Coefficients of G_t = t G + (1-t) G_0 + t alpha - (1-t) G_0(I_n).

    Returns ``(alpha_t, alpha_l_t)`` so that G_t(W) = G(W; alpha_l_t) + alpha_t,
    with alpha_l_t = t alpha_l + (1 - t) and alpha_t = t alpha - (1-t) G_0(I_n).
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError("homotopy parameter must lie in [0, 1]")
    alpha_l_t = t * np.asarray(alpha_l, dtype=float) + (1.0 - t)
    alpha_t = t * np.asarray(alpha, dtype=float) - (1.0 - t) * G0_identity(n, k)
    return alpha_t, alpha_l_t


# ---------------------------------------------------------------------------
# matrix-level operations


def _spectrum(W, x, spec: OperatorSpec):
    W = as_symmetric(W)
    if W.shape[-1] != spec.n:
        raise DomainError(f"matrix dimension {W.shape[-1]} != n = {spec.n}")
    chi = spec.shift_at(x)
    if chi is not None:
        W = W + chi
    return eigen_sym(W)


def eval_F(W, x, spec: OperatorSpec):
    eig = _spectrum(W, x, spec)
    alpha, alpha_l = spec.sample(x)
    val = F_lambda(eig.values, alpha, alpha_l, spec.k)
    return float(val) if np.ndim(val) == 0 else val


def eval_G(W, x, spec: OperatorSpec, check: bool = True):
    eig = _spectrum(W, x, spec)
    _, alpha_l = spec.sample(x)
    val = G_lambda(eig.values, alpha_l, spec.k, check=check)
    return float(val) if np.ndim(val) == 0 else val


def eval_Gt(W, x, spec: OperatorSpec, t: float, check: bool = True):
    eig = _spectrum(W, x, spec)
    alpha, alpha_l = spec.sample(x)
    alpha_t, alpha_l_t = homotopy_coefficients(alpha, alpha_l, t, spec.n, spec.k)
    val = G_lambda(eig.values, alpha_l_t, spec.k, check=check) + alpha_t
    return float(val) if np.ndim(val) == 0 else val


def linearize(W, x, spec: OperatorSpec) -> np.ndarray:
    """dG/dW_ij: eigenframe diagonal of G^{ii}, rotated back."""
    eig = _spectrum(W, x, spec)
    _, alpha_l = spec.sample(x)
    grad = G_grad_lambda(eig.values, alpha_l, spec.k)
    return rotate_diag(eig.frame, grad)


def sum_Gii(W, x, spec: OperatorSpec):
    eig = _spectrum(W, x, spec)
    _, alpha_l = spec.sample(x)
    val = np.sum(G_grad_lambda(eig.values, alpha_l, spec.k), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def concavity_probe(W, x, spec: OperatorSpec, X, h: float):
    """[G(W + hX) - 2 G(W) + G(W - hX)] / h^2; every probe point must be admissible."""
    W = as_symmetric(W)
    X = as_symmetric(X)
    g_p = eval_G(W + h * X, x, spec)
    g_0 = eval_G(W, x, spec)
    g_m = eval_G(W - h * X, x, spec)
    return (np.asarray(g_p) - 2.0 * np.asarray(g_0) + np.asarray(g_m)) / h**2


# ---------------------------------------------------------------------------
# cubic reduction: sigma_3 + a sigma_2 + b sigma_1 + c = 0


@dataclass(frozen=True)
class CubicReduction:
    """Shift ``s`` with W = lam~ + s I turning the cubic into sigma_3 + alpha_new sigma_2 = gamma."""

    s: np.ndarray
    alpha_new: np.ndarray
    gamma: np.ndarray
    flipped: np.ndarray

    def flipped_form(self):
        """Coefficients for mu = -lam~ where gamma < 0.

        sigma_3(-x) = -sigma_3(x) and sigma_2(-x) = sigma_2(x), so the flipped
        equation reads sigma_3(mu) - alpha_new sigma_2(mu) = -gamma.
        """
        sign = np.where(self.flipped, -1.0, 1.0)
        return sign * self.alpha_new, sign * self.gamma


def cubic_reduce(a, b, c, n: int) -> CubicReduction:
    if n < 3:
        raise DomainError("cubic reduction needs n >= 3")
    a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c)))
    q = (n - 1) * (n - 2) / 2.0
    p = (n - 1) * a
    disc = p * p - 4.0 * q * b
    if np.any(disc < 0):
        bad = np.argwhere(np.atleast_1d(disc) < 0)[0]
        where = tuple(int(i) for i in bad) if disc.ndim else None
        raise ConditionViolatedError(where, np.atleast_1d(disc)[tuple(bad)])
    root = np.sqrt(disc)
    # larger root of q s^2 + p s + b = 0, written to avoid cancellation
    with np.errstate(divide="ignore", invalid="ignore"):
        s_pos = np.where(p + root != 0, -2.0 * b / (p + root), 0.0)
    s = np.where(p > 0, s_pos, (-p + root) / (2.0 * q)) + 0.0
    alpha_new = a + (n - 2) * s
    gamma = 0.0 - (comb(n, 3) * s**3 + comb(n, 2) * a * s**2 + n * b * s + c)
    flipped = gamma < 0
    if s.ndim == 0:
        return CubicReduction(float(s), float(alpha_new), float(gamma), bool(flipped))
    return CubicReduction(s, alpha_new, gamma, flipped)
