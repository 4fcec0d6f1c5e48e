"""Symmetric eigendecomposition by cyclic Jacobi, batched over leading axes.

Matrices here are tiny (n <= 8) but come in large batches, so every rotation
is applied to all still-unconverged matrices of a batch at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError
from .symfun import Spectrum, deleted_sigma_table

JACOBI_TOL = 1e-14
MAX_SWEEPS = 60


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalues (descending) and the orthogonal frame whose columns match them."""

    values: np.ndarray
    frame: np.ndarray

    @property
    def spectrum(self) -> Spectrum:
        if self.values.ndim != 1:
            raise DomainError("spectrum is only defined for a single matrix")
        return Spectrum(self.values)

    def reconstruct(self) -> np.ndarray:
        return rotate_diag(self.frame, self.values)


def as_symmetric(A, rtol: float = 1e-12) -> np.ndarray:
    """Validate and return a symmetric float copy of ``A`` with shape (..., n, n)."""
    A = np.array(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DomainError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix entries must be finite")
    At = np.swapaxes(A, -1, -2)
    scale = np.max(np.abs(A), axis=(-1, -2), keepdims=True)
    if np.any(np.abs(A - At) > rtol * scale):
        raise DomainError("matrix is not symmetric")
    return 0.5 * (A + At)


def rotate_diag(frame, diag) -> np.ndarray:
    """frame @ diag(diag) @ frame.T, batched."""
    frame = np.asarray(frame, dtype=float)
    diag = np.asarray(diag, dtype=float)
    return np.einsum("...ij,...j,...kj->...ik", frame, diag, frame)


def _jacobi_sweeps(a, v, tol, max_sweeps):
    # batch-last layout (n, n, N): every slice below is contiguous along N
    n = a.shape[0]
    norm = np.sqrt(np.sum(a * a, axis=(0, 1)))
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps + 1):
        off = np.sqrt(np.sum(a[offmask] ** 2, axis=0))
        active = off > tol * norm
        if not np.any(active):
            return a, v
        subset = not np.all(active)
        if subset:
            idx = np.nonzero(active)[0]
            sa = a[:, :, idx]
            sv = v[:, :, idx]
        else:
            sa, sv = a, v
        for p, q in pairs:
            apq = sa[p, q]
            rot = apq != 0.0
            if not np.any(rot):
                continue
            safe = np.where(rot, apq, 1.0)
            theta = (sa[q, q] - sa[p, p]) / (2.0 * safe)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(1.0 + theta * theta))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(rot, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            colp = sa[:, p].copy()
            colq = sa[:, q].copy()
            sa[:, p] = c * colp - s * colq
            sa[:, q] = s * colp + c * colq
            rowp = sa[p].copy()
            rowq = sa[q].copy()
            sa[p] = c * rowp - s * rowq
            sa[q] = s * rowp + c * rowq
            sa[p, q] = 0.0
            sa[q, p] = 0.0
            vp = sv[:, p].copy()
            vq = sv[:, q].copy()
            sv[:, p] = c * vp - s * vq
            sv[:, q] = s * vp + c * vq
        if subset:
            a[:, :, idx] = sa
            v[:, :, idx] = sv
    raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps")


def eigen_sym(A, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS) -> EigenPair:
    """Eigenvalues sorted descending and orthonormal eigenvectors of symmetric ``A``.

    Converged when the off-diagonal Frobenius norm is at most ``tol * ||A||_F``.
    """
    A = as_symmetric(A)
    shape = A.shape
    n = shape[-1]
    a = np.ascontiguousarray(np.moveaxis(A.reshape(-1, n, n), 0, -1))
    v = np.repeat(np.eye(n)[:, :, None], a.shape[-1], axis=2)
    a, v = _jacobi_sweeps(a, v, tol, max_sweeps)
    vals = np.ascontiguousarray(np.diagonal(a, axis1=0, axis2=1))
    v = np.moveaxis(v, -1, 0)
    order = np.argsort(-vals, axis=-1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=-1)
    v = np.take_along_axis(v, order[:, None, :], axis=-1)
    return EigenPair(vals.reshape(shape[:-1]), v.reshape(shape))


def eigvals_sym(A) -> np.ndarray:
    return eigen_sym(A).values


def dsigma_dA(A, m: int) -> np.ndarray:
    """Matrix derivative of sigma_m(lambda(A)): frame @ diag(sigma_{m-1}(lam|i)) @ frame.T."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if not 1 <= m <= n:
        raise DomainError(f"order {m} outside [1, {n}]")
    eig = eigen_sym(A)
    dele = deleted_sigma_table(eig.values, m - 1)[..., m - 1]
    return rotate_diag(eig.frame, dele)
