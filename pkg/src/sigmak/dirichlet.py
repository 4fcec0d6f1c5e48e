"""Dirichlet problem for F(D^2 u) = 0 on planar grids.

Nodes are classified as interior (unknowns), boundary (carry the data phi)
or exterior (ignored).  The discrete Hessian uses 3-point stencils for
u_xx, u_yy and the 4-corner stencil for u_xy, all exact on quadratics.
Arrays over the grid are indexed ``[i, j]`` with i along x.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DiscretizationError, DomainError, NoSubsolutionError
from .newton import Evaluation, SolveReport, SolverConfig, continuation
from .operator import (
    CoefficientSet,
    F_lambda,
    G_grad_lambda,
    G_lambda,
    OperatorSpec,
    homotopy_coefficients,
    margin_thresholds,
)
from .spectral import eigen_sym, rotate_diag
from .symfun import sigma_table

log = logging.getLogger(__name__)

INTERIOR, BOUNDARY, EXTERIOR = 0, 1, 2
CSV_SCHEMA = "sigmak-fields v1"

# (di, dj, w_xx, w_yy, w_xy) in units of 1/h^2
STENCIL = (
    (0, 0, -2.0, -2.0, 0.0),
    (1, 0, 1.0, 0.0, 0.0),
    (-1, 0, 1.0, 0.0, 0.0),
    (0, 1, 0.0, 1.0, 0.0),
    (0, -1, 0.0, 1.0, 0.0),
    (1, 1, 0.0, 0.0, 0.25),
    (-1, -1, 0.0, 0.0, 0.25),
    (1, -1, 0.0, 0.0, -0.25),
    (-1, 1, 0.0, 0.0, -0.25),
)


@dataclass
class Grid2D:
    x0: float
    x1: float
    y0: float
    y1: float
    h: float
    mask: np.ndarray
    kind: str = "rectangle"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.int8)
        nx, ny = self.mask.shape
        self.xs = self.x0 + self.h * np.arange(nx)
        self.ys = self.y0 + self.h * np.arange(ny)
        self.X, self.Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        self.interior = np.argwhere(self.mask == INTERIOR)
        self.node_id = np.full(self.mask.shape, -1, dtype=np.int64)
        self.node_id[self.mask == INTERIOR] = np.arange(len(self.interior))
        self._check_neighbours()

    @staticmethod
    def _count(lo, hi, h):
        n = (hi - lo) / h
        if h <= 0 or abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
            raise DomainError(f"spacing {h} does not divide [{lo}, {hi}]")
        return int(round(n)) + 1

    @classmethod
    def rectangle(cls, x0, x1, y0, y1, h):
        nx, ny = cls._count(x0, x1, h), cls._count(y0, y1, h)
        if nx < 3 or ny < 3:
            raise DomainError("rectangle needs at least 3 nodes per side")
        mask = np.full((nx, ny), BOUNDARY, dtype=np.int8)
        mask[1:-1, 1:-1] = INTERIOR
        return cls(x0, x1, y0, y1, h, mask, "rectangle")

    @classmethod
    def disk(cls, center, radius, h):
        """Disk inscribed in its bounding box; staircase boundary."""
        cx, cy = center
        x0, x1, y0, y1 = cx - radius, cx + radius, cy - radius, cy + radius
        nx, ny = cls._count(x0, x1, h), cls._count(y0, y1, h)
        xs = x0 + h * np.arange(nx)
        ys = y0 + h * np.arange(ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        inside = (X - cx) ** 2 + (Y - cy) ** 2 <= radius**2 * (1 + 1e-12)
        pad = np.pad(inside, 1, constant_values=False)
        full = np.ones_like(inside)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                full &= pad[1 + di : 1 + di + nx, 1 + dj : 1 + dj + ny]
        mask = np.full((nx, ny), EXTERIOR, dtype=np.int8)
        mask[inside] = BOUNDARY
        mask[inside & full] = INTERIOR
        return cls(x0, x1, y0, y1, h, mask, "disk")

    def _check_neighbours(self):
        nx, ny = self.mask.shape
        pad = np.pad(self.mask, 1, constant_values=EXTERIOR)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                nb = pad[1 + di : 1 + di + nx, 1 + dj : 1 + dj + ny]
                bad = (self.mask == INTERIOR) & (nb == EXTERIOR)
                if np.any(bad):
                    i, j = np.argwhere(bad)[0]
                    raise DiscretizationError(f"interior node ({i}, {j}) lacks neighbour ({di}, {dj})")

    @property
    def center(self):
        return 0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)

    @property
    def boundary(self):
        return self.mask == BOUNDARY

    def interior_coords(self) -> np.ndarray:
        return np.stack([self.X[self.mask == INTERIOR], self.Y[self.mask == INTERIOR]], axis=-1)


@dataclass
class ScalarField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.shape != self.grid.mask.shape:
            raise DomainError("field shape does not match grid")

    @classmethod
    def from_function(cls, grid: Grid2D, fn: Callable) -> "ScalarField":
        vals = np.asarray(fn(grid.X, grid.Y), dtype=float) * np.ones(grid.mask.shape)
        vals[grid.mask == EXTERIOR] = np.nan
        return cls(grid, vals)

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.mask == INTERIOR]

    def with_interior(self, vec) -> "ScalarField":
        vals = self.values.copy()
        vals[self.grid.mask == INTERIOR] = vec
        return ScalarField(self.grid, vals)


def _boundary_values(phi, grid: Grid2D) -> np.ndarray:
    if isinstance(phi, ScalarField):
        vals = phi.values.copy()
    elif callable(phi):
        vals = np.asarray(phi(grid.X, grid.Y), dtype=float) * np.ones(grid.mask.shape)
    else:
        vals = np.asarray(phi, dtype=float) * np.ones(grid.mask.shape)
    vals[grid.mask == EXTERIOR] = np.nan
    return vals


def hessian_fd(u: ScalarField, nodes=None) -> np.ndarray:
    """Discrete Hessians (M, 2, 2) at ``nodes`` (default: all interior nodes)."""
    grid = u.grid
    nx, ny = grid.mask.shape
    nodes = grid.interior if nodes is None else np.atleast_2d(np.asarray(nodes, dtype=np.int64))
    i, j = nodes[:, 0], nodes[:, 1]
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ii, jj = i + di, j + dj
            off = (ii < 0) | (ii >= nx) | (jj < 0) | (jj >= ny)
            if np.any(off) or np.any(grid.mask[np.clip(ii, 0, nx - 1), np.clip(jj, 0, ny - 1)] == EXTERIOR):
                bad = off | (grid.mask[np.clip(ii, 0, nx - 1), np.clip(jj, 0, ny - 1)] == EXTERIOR)
                k = int(np.argmax(bad))
                raise DiscretizationError(f"node ({i[k]}, {j[k]}) lacks neighbour ({di}, {dj})")
    v = u.values
    h2 = grid.h**2
    uxx = (v[i + 1, j] - 2.0 * v[i, j] + v[i - 1, j]) / h2
    uyy = (v[i, j + 1] - 2.0 * v[i, j] + v[i, j - 1]) / h2
    uxy = (v[i + 1, j + 1] - v[i + 1, j - 1] - v[i - 1, j + 1] + v[i - 1, j - 1]) / (4.0 * h2)
    H = np.empty((len(i), 2, 2))
    H[:, 0, 0] = uxx
    H[:, 1, 1] = uyy
    H[:, 0, 1] = H[:, 1, 0] = uxy
    return H


def _check_planar(spec: OperatorSpec):
    if spec.n != 2:
        raise DomainError("planar grids carry 2x2 Hessians; need n = 2")


def _node_matrices(u: ScalarField, spec: OperatorSpec):
    W = hessian_fd(u)
    coords = u.grid.interior_coords()
    chi = spec.shift_at(coords)
    if chi is not None:
        W = W + chi
    return W, coords


def residual_field(u: ScalarField, spec: OperatorSpec) -> ScalarField:
    """Undivided residual F at interior nodes (NaN elsewhere)."""
    _check_planar(spec)
    W, coords = _node_matrices(u, spec)
    alpha, alpha_l = spec.sample(coords)
    lam = eigen_sym(W).values
    res = np.full(u.values.shape, np.nan)
    res[u.grid.mask == INTERIOR] = F_lambda(lam, alpha, alpha_l, spec.k)
    return ScalarField(u.grid, res)


def poisson_solve(grid: Grid2D, rhs, boundary) -> ScalarField:
    """5-point discrete Poisson problem Delta_h v = rhs with v = boundary on boundary nodes."""
    vals = _boundary_values(boundary, grid)
    nid = grid.node_id
    I = grid.interior
    M = len(I)
    h2 = grid.h**2
    rows, cols, data = [np.arange(M)], [np.arange(M)], [np.full(M, -4.0)]
    b = h2 * np.broadcast_to(np.asarray(rhs, dtype=float), (M,)).copy()
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ii, jj = I[:, 0] + di, I[:, 1] + dj
        col = nid[ii, jj]
        inner = col >= 0
        rows.append(np.arange(M)[inner])
        cols.append(col[inner])
        data.append(np.ones(inner.sum()))
        b[~inner] -= vals[ii[~inner], jj[~inner]]
    A = sp.csc_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(M, M))
    vals[grid.mask == INTERIOR] = spla.spsolve(A, b)
    return ScalarField(grid, vals)


def harmonic_extension(phi, grid: Grid2D) -> ScalarField:
    """Discrete (5-point) harmonic function with boundary values phi."""
    return poisson_solve(grid, 0.0, phi)


def _bump_profile(grid: Grid2D) -> np.ndarray:
    # (|x - x_c|^2 - R^2)/2 at interior nodes, 0 on the boundary.  R^2 is twice
    # the squared covering radius so the jump at the boundary is large enough
    # to dominate the mixed stencil next to corners.
    cx, cy = grid.center
    r2 = (grid.X - cx) ** 2 + (grid.Y - cy) ** 2
    R2 = 2.0 * np.max(r2[grid.mask != EXTERIOR])
    psi = np.zeros(grid.mask.shape)
    interior = grid.mask == INTERIOR
    psi[interior] = 0.5 * (r2[interior] - R2)
    return psi


def convex_profile(grid: Grid2D, cfg: SolverConfig | None = None) -> np.ndarray:
    """Grid function vanishing on the boundary whose discrete Hessian has sigma_2 = 1.

    Used when the quadratic bump is not discretely convex (staircase
    boundaries): an admissible solution of sigma_2 = 1 in the plane is convex.
    """
    start = poisson_solve(grid, 4.0, 0.0)
    ma = OperatorSpec(2, 2, CoefficientSet(alpha=0.0, alpha_l=[1.0]))
    u, _ = newton_solve(start, ma, cfg)
    return np.where(grid.mask == EXTERIOR, 0.0, u.values)


def _discretely_convex(grid: Grid2D, psi) -> bool:
    lam = eigen_sym(hessian_fd(ScalarField(grid, psi))).values
    return bool(np.all(lam[:, -1] > 0))


def find_subsolution(phi, grid: Grid2D, spec: OperatorSpec, margin_rel: float = 1e-10, cap: float = 2.0**60):
    """Subsolution phi~ + A psi with phi~ the discrete harmonic extension of phi.

    psi is the quadratic bump (|x - x_c|^2 - R^2)/2 on interior nodes, or the
    convex profile when the bump is not discretely convex.  A doubles from 1
    until the residual is non-negative and the Hessian is admissible with
    margin at every interior node.  Returns ``(field, A)``.
    """
    _check_planar(spec)
    base = harmonic_extension(phi, grid)
    psi = _bump_profile(grid)
    if not _discretely_convex(grid, psi):
        log.info("quadratic bump not discretely convex on %s grid; using convex profile", grid.kind)
        psi = convex_profile(grid)
    interior = grid.mask == INTERIOR
    A = 1.0
    while A <= cap:
        vals = base.values.copy()
        vals[interior] += A * psi[interior]
        cand = ScalarField(grid, vals)
        W, coords = _node_matrices(cand, spec)
        lam = eigen_sym(W).values
        sig = sigma_table(lam, spec.k)
        thr = margin_thresholds(lam, spec.k - 1, margin_rel)
        admissible = np.all(sig[..., 1 : spec.k] > thr)
        alpha, alpha_l = spec.sample(coords)
        res = F_lambda(lam, alpha, alpha_l, spec.k)
        if admissible and np.all(res >= 0):
            return cand, A
        A *= 2.0
    raise NoSubsolutionError(f"no subsolution with amplitude <= {cap:.3g}")


@dataclass
class _Assembly:
    """Sparsity pattern of the linearised 9-point operator (built once per grid)."""

    rows: np.ndarray
    cols: np.ndarray
    node: np.ndarray
    weight: np.ndarray  # (nnz_candidates, 3): w_xx, w_yy, w_xy
    keep: np.ndarray
    M: int = 0
    extra: dict = field(default_factory=dict)


def _assembly(grid: Grid2D) -> _Assembly:
    I = grid.interior
    M = len(I)
    rows, cols, node, wts = [], [], [], []
    for di, dj, wxx, wyy, wxy in STENCIL:
        col = grid.node_id[I[:, 0] + di, I[:, 1] + dj]
        rows.append(np.arange(M))
        cols.append(col)
        wts.append(np.tile([wxx, wyy, wxy], (M, 1)))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    keep = cols >= 0
    return _Assembly(rows, cols, rows.copy(), np.concatenate(wts), keep, M)


def _diagnostics(report: SolveReport, lam: np.ndarray, W: np.ndarray, n: int):
    sig = sigma_table(lam, n)
    report.sigma_min = [float(np.min(sig[:, j])) for j in range(1, n + 1)]
    report.sigma_max = [float(np.max(sig[:, j])) for j in range(1, n + 1)]
    report.sup_hessian = float(np.max(np.abs(lam)))
    report.h_diagnostic = float(np.max(np.trace(W, axis1=-2, axis2=-1)))


def newton_solve(u0: ScalarField, spec: OperatorSpec, cfg: SolverConfig | None = None):
    """Cone-preserving damped Newton on G(D^2 u) + alpha = 0 with u = phi on the boundary.

    Falls back to the coefficient homotopy when the direct iteration stalls.
    Returns ``(field, report)``; raises :class:`SolverStalled` with the
    partial report when the homotopy also fails.
    """
    _check_planar(spec)
    cfg = cfg or SolverConfig()
    grid = u0.grid
    k = spec.k
    coords = grid.interior_coords()
    alpha, alpha_l = spec.sample(coords)
    alpha = np.broadcast_to(alpha, (len(coords),)).astype(float)
    alpha_l = np.broadcast_to(alpha_l, (len(coords), k - 1)).astype(float)
    if cfg.eps_reg:
        alpha_l = alpha_l.copy()
        alpha_l[:, 0] += cfg.eps_reg
    chi = spec.shift_at(coords)
    scale = max(1.0, float(np.max(np.abs(alpha))), float(np.max(alpha_l)))
    tol = cfg.tol * scale
    asm = _assembly(grid)
    h2 = grid.h**2
    report = SolveReport()
    base = u0.values.copy()

    def field_of(vec):
        vals = base.copy()
        vals[grid.mask == INTERIOR] = vec
        return ScalarField(grid, vals)

    def make_problem(t):
        a_t, al_t = homotopy_coefficients(alpha, alpha_l, t, spec.n, k) if t < 1.0 else (alpha, alpha_l)

        def evaluate(vec):
            W = hessian_fd(field_of(vec))
            if chi is not None:
                W = W + chi
            eig = eigen_sym(W)
            lam = eig.values
            sig = sigma_table(lam, k)
            thr = margin_thresholds(lam, k - 1, cfg.margin_rel)
            margins = sig[:, 1:k]
            ok = bool(np.all(margins > thr))
            min_margin = float(np.min(margins))
            if not ok:
                return Evaluation(False, np.inf, np.inf, min_margin=min_margin)
            g = G_lambda(lam, al_t, k, check=False) + a_t
            f = F_lambda(lam, a_t, al_t, k)
            return Evaluation(True, float(np.max(np.abs(g))), float(np.max(np.abs(f))),
                              min_margin=min_margin, payload=(eig, g))

        def step(vec, ev):
            eig, g = ev.payload
            grad = G_grad_lambda(eig.values, al_t, k, check=False)
            Gm = rotate_diag(eig.frame, grad)  # (M, 2, 2)
            coef = Gm[:, 0, 0], Gm[:, 1, 1], 2.0 * Gm[:, 0, 1]
            node = asm.rows
            w = asm.weight
            vals = (coef[0][node] * w[:, 0] + coef[1][node] * w[:, 1] + coef[2][node] * w[:, 2]) / h2
            J = sp.csc_matrix((vals[asm.keep], (asm.rows[asm.keep], asm.cols[asm.keep])), shape=(asm.M, asm.M))
            return spla.spsolve(J, -g)

        return evaluate, step

    vec, ev = continuation(u0.interior_values(), make_problem, cfg, tol, report)
    u = field_of(vec)
    eig, _ = ev.payload
    W = hessian_fd(u)
    _diagnostics(report, eig.values, W, spec.n)
    return u, report


def write_fields_csv(path, u: ScalarField, spec: OperatorSpec):
    """Node dump: x, y, u, lambda1, lambda2, residual, sigma1..sigma_{k-1} (interior nodes)."""
    grid = u.grid
    W, coords = _node_matrices(u, spec)
    lam = eigen_sym(W).values
    alpha, alpha_l = spec.sample(coords)
    res = np.broadcast_to(F_lambda(lam, alpha, alpha_l, spec.k), (len(coords),))
    sig = sigma_table(lam, spec.k - 1)
    header = ["x", "y", "u", "lambda1", "lambda2", "residual"] + [f"sigma{j}" for j in range(1, spec.k)]
    vals = u.interior_values()
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        wr = csv.writer(fh)
        wr.writerow(header)
        for m in range(len(coords)):
            row = [coords[m, 0], coords[m, 1], vals[m], lam[m, 0], lam[m, 1], res[m]]
            row += [sig[m, j] for j in range(1, spec.k)]
            wr.writerow([repr(float(r)) for r in row])
