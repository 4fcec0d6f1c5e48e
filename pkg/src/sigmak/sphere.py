"""Axisymmetric form of the curvature equation on S^n.

For u = u(theta), theta the polar angle, the spherical Hessian W_u has the
radial eigenvalue u'' + u (once) and the tangential eigenvalue
cot(theta) u' + u (n - 1 times).  We collocate on the uniform nodes
theta_j = j pi / N with a cosine series, which builds in u'(0) = u'(pi) = 0
and differentiates cos(theta) exactly, so W annihilates the linear harmonic
to rounding.  At the poles cot(theta) u' is replaced by its limit u''.

Adding a cos(theta) to u leaves the operator unchanged, so the Jacobian is
singular along that mode.  solve_axisym borders the Newton system with the
weighted orthogonality row and a multiplier mu on a cos(theta) column; mu is
zero when the data admit an exact solution and is reported otherwise.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable, Sequence

import numpy as np

from .errors import DiscretizationError, DomainError, RootNotFoundError, SolverStalled
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
from .symfun import sigma_table

log = logging.getLogger(__name__)

MIN_NODES = 5
CSV_SCHEMA = "sigmak-fields v1"


def nodes(count: int) -> np.ndarray:
    if count < MIN_NODES:
        raise DiscretizationError(f"need at least {MIN_NODES} nodes, got {count}")
    return np.linspace(0.0, np.pi, count)


@lru_cache(maxsize=16)
def _operators(count: int):
    """(Lrad, Ltan): u -> u'' + u and u -> cot(theta) u' + u on the cosine nodes."""
    N = count - 1
    theta = np.pi * np.arange(count) / N
    m = np.arange(count)
    C = np.cos(np.outer(theta, m))
    # DCT-I inverse: c = (2/N) w_m sum_j w_j cos(m theta_j) u_j, w = 1/2 at the ends
    w = np.ones(count)
    w[0] = w[-1] = 0.5
    Cinv = (2.0 / N) * (w[:, None] * C.T * w[None, :])
    D2 = (C * -(m**2)) @ Cinv
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sin(np.outer(theta, m)) / np.sin(theta)[:, None]
    T = (np.cos(theta)[:, None] * ratio * -m) @ Cinv
    T[0] = D2[0]
    T[-1] = D2[-1]
    # both operators kill cos(theta) exactly; drop that mode before applying
    # them so rounding in the m^2 weights cannot leak into it
    keep = np.eye(count) - np.outer(C[:, 1], Cinv[1])
    eye = np.eye(count)
    Lrad = (D2 + eye) @ keep
    Ltan = (T + eye) @ keep
    Lrad.setflags(write=False)
    Ltan.setflags(write=False)
    return Lrad, Ltan


def quad_weights(theta: np.ndarray, n: int) -> np.ndarray:
    """sin^{n-1}(theta_j) dtheta, the axisymmetric surface measure up to a constant."""
    return np.sin(theta) ** (n - 1) * (theta[1] - theta[0])


@dataclass
class AxisymField:
    theta: np.ndarray
    values: np.ndarray
    n: int

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.values = np.array(self.values, dtype=float) * np.ones_like(self.theta)
        if self.theta.ndim != 1 or len(self.theta) < MIN_NODES:
            raise DiscretizationError(f"need at least {MIN_NODES} nodes")
        if not np.allclose(self.theta, nodes(len(self.theta)), rtol=0, atol=1e-13):
            raise DiscretizationError("nodes must be uniform on [0, pi] with endpoints")
        if self.n < 2:
            raise DomainError("sphere dimension must be at least 2")

    @classmethod
    def from_function(cls, fn: Callable | float, count: int, n: int) -> "AxisymField":
        theta = nodes(count)
        vals = fn(theta) if callable(fn) else fn
        return cls(theta, vals, n)

    def orthogonality(self) -> float:
        """Discrete integral of u cos(theta) against the surface measure."""
        return float(np.sum(self.values * np.cos(self.theta) * quad_weights(self.theta, self.n)))


@dataclass
class SphericalEigs:
    lambda_rad: np.ndarray
    lambda_tan: np.ndarray
    n: int

    def full(self) -> np.ndarray:
        """(nodes, n) eigenvalue array with the tangential value repeated."""
        tan = np.repeat(self.lambda_tan[:, None], self.n - 1, axis=1)
        return np.concatenate([self.lambda_rad[:, None], tan], axis=1)


def wu_eigs(u: AxisymField) -> SphericalEigs:
    Lrad, Ltan = _operators(len(u.theta))
    return SphericalEigs(Lrad @ u.values, Ltan @ u.values, u.n)


def h_diagnostic(u: AxisymField) -> float:
    """max_j of lambda_rad + (n-1) lambda_tan, i.e. the discrete Delta u + n u."""
    e = wu_eigs(u)
    return float(np.max(e.lambda_rad + (u.n - 1) * e.lambda_tan))


def _constants(spec: OperatorSpec):
    alpha, alpha_l = spec.sample(None)
    if np.ndim(alpha) != 0 or alpha_l.ndim != 1:
        raise DomainError("constant_solution_root needs constant coefficients")
    return float(alpha), np.asarray(alpha_l, dtype=float)


def constant_solution_root(spec: OperatorSpec, c_max: float = 2.0**60) -> float:
    """Positive root of binom(n,k)c^k + alpha binom(n,k-1)c^{k-1} - sum alpha_l binom(n,l)c^l."""
    n, k = spec.n, spec.k
    alpha, alpha_l = _constants(spec)
    if np.any(alpha_l < 0) or not np.sum(alpha_l) > 0:
        raise DomainError("need alpha_l >= 0 with a positive sum")
    coef = np.zeros(k + 1)  # ascending powers
    coef[k] = comb(n, k)
    coef[k - 1] += alpha * comb(n, k - 1)
    for ell, a in enumerate(alpha_l):
        coef[ell] -= a * comb(n, ell)
    poly = np.polynomial.Polynomial(coef)
    dpoly = poly.deriv()
    lo, hi = 0.0, 1.0
    while poly(hi) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > c_max:
            raise RootNotFoundError(f"no sign change up to c = {c_max:.3g}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if poly(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * hi:
            break
    c = 0.5 * (lo + hi)
    for _ in range(5):
        d = dpoly(c)
        if d == 0:
            break
        step = poly(c) / d
        c -= step
        if abs(step) <= 1e-16 * abs(c):
            break
    return float(c)


def _diagnostics(report: SolveReport, eigs: SphericalEigs, n: int):
    lam = eigs.full()
    sig = sigma_table(lam, n)
    report.sigma_min = [float(np.min(sig[:, j])) for j in range(1, n + 1)]
    report.sigma_max = [float(np.max(sig[:, j])) for j in range(1, n + 1)]
    report.sup_hessian = float(np.max(np.abs(lam)))
    report.h_diagnostic = float(np.max(eigs.lambda_rad + (n - 1) * eigs.lambda_tan))


def solve_axisym(spec: OperatorSpec, u0: AxisymField, cfg: SolverConfig | None = None):
    """Bordered damped Newton for the axisymmetric equation.

    Unknowns are the nodal values of u and the multiplier mu; the equations
    are G(W_u) + alpha + mu cos(theta) = 0 at every node and the weighted
    orthogonality of u against cos(theta).  Convergence is declared on the
    undivided residual and the orthogonality row.  Returns ``(field, report)``.
    """
    cfg = cfg or SolverConfig()
    if spec.n != u0.n:
        raise DomainError(f"field lives on S^{u0.n}, operator has n = {spec.n}")
    if spec.shift is not None:
        raise DomainError("shift tensors are not supported by the axisymmetric solver")
    n, k = spec.n, spec.k
    theta = u0.theta
    J = len(theta)
    Lrad, Ltan = _operators(J)
    cos = np.cos(theta)
    w = cos * quad_weights(theta, n)
    alpha, alpha_l = spec.sample(theta[:, None])
    alpha = np.broadcast_to(alpha, (J,)).astype(float)
    alpha_l = np.broadcast_to(alpha_l, (J, k - 1)).astype(float)
    if cfg.eps_reg:
        alpha_l = alpha_l.copy()
        alpha_l[:, 0] += cfg.eps_reg
    scale = max(1.0, float(np.max(np.abs(alpha))), float(np.max(alpha_l)))
    tol = cfg.tol * scale
    wscale = float(np.sum(np.abs(w)))
    report = SolveReport()

    def eigs_of(v):
        return SphericalEigs(Lrad @ v, Ltan @ v, n)

    def make_problem(t):
        a_t, al_t = homotopy_coefficients(alpha, alpha_l, t, n, k) if t < 1.0 else (alpha, alpha_l)

        def evaluate(z):
            v, mu = z[:-1], z[-1]
            lam = eigs_of(v).full()
            sig = sigma_table(lam, k)
            thr = margin_thresholds(lam, k - 1, cfg.margin_rel)
            margins = sig[:, 1:k]
            min_margin = float(np.min(margins))
            if not np.all(margins > thr):
                return Evaluation(False, np.inf, np.inf, min_margin=min_margin)
            shifted = a_t + mu * cos
            g = G_lambda(lam, al_t, k, check=False) + shifted
            f = F_lambda(lam, shifted, al_t, k)
            con = abs(float(w @ v)) / wscale
            merit = max(float(np.max(np.abs(g))), con)
            return Evaluation(True, merit, float(np.max(np.abs(f))), constraint=con,
                              min_margin=min_margin, payload=(lam, g))

        def step(z, ev):
            lam, g = ev.payload
            grad = G_grad_lambda(lam, al_t, k, check=False)
            g_rad = grad[:, 0]
            g_tan = np.sum(grad[:, 1:], axis=1)
            M = np.zeros((J + 1, J + 1))
            M[:J, :J] = g_rad[:, None] * Lrad + g_tan[:, None] * Ltan
            M[:J, J] = cos
            M[J, :J] = w / wscale
            rhs = np.concatenate([-g, [-(w @ z[:-1]) / wscale]])
            return np.linalg.solve(M, rhs)

        return evaluate, step

    z0 = np.concatenate([u0.values, [0.0]])
    z, ev = continuation(z0, make_problem, cfg, tol, report)
    u = AxisymField(theta, z[:-1], n)
    _diagnostics(report, wu_eigs(u), n)
    report.extra["multiplier"] = float(z[-1]) + 0.0
    report.extra["orthogonality_residual"] = abs(u.orthogonality())
    return u, report


def degenerate_sweep(
    family: Callable[[np.ndarray, float], np.ndarray],
    p: float | Sequence[float],
    template: OperatorSpec,
    eps_list: Sequence[float],
    count: int = 65,
    cfg: SolverConfig | None = None,
    u0: AxisymField | None = None,
):
    """Solve with alpha_0 = g^p (or alpha_l = g^{p_l} for a list of powers) for each eps.

    Rows run in the given order and each warm-starts from the previous
    converged field.  A failing row is recorded and the sweep continues.
    """
    n, k = template.n, template.k
    powers = [float(p)] if np.ndim(p) == 0 else [float(q) for q in p]
    if len(powers) > k - 1:
        raise DomainError(f"{len(powers)} powers given for k = {k}")
    alpha = template.coefficients.alpha
    theta = nodes(count)
    start = u0
    if start is None:
        # constant start solving the problem with every coefficient averaged
        probe = OperatorSpec(n, k, CoefficientSet(alpha=alpha))
        a_mean = float(np.mean(probe.sample(theta[:, None])[0]))
        g_mean = float(np.mean(family(theta, eps_list[0])))
        const = OperatorSpec(n, k, CoefficientSet(alpha=a_mean, alpha_l=[g_mean**q for q in powers]))
        start = AxisymField(theta, constant_solution_root(const), n)
    rows = []
    for eps in eps_list:
        factors = [((lambda th, e=eps: family(th, e)), q) for q in powers]
        spec = OperatorSpec(n, k, CoefficientSet(alpha=alpha, factors=factors))
        row = {"eps": float(eps), "converged": False}
        try:
            u, rep = solve_axisym(spec, start, cfg)
        except SolverStalled as exc:
            rep = exc.report
            row.update(message=str(exc), iterations=rep.iterations if rep else None)
            rows.append(row)
            continue
        row.update(
            converged=rep.converged,
            sup_H=rep.h_diagnostic,
            min_sigma_km1=rep.sigma_min[k - 2],
            min_sigma=rep.sigma_min,
            iterations=rep.iterations,
            multiplier=rep.extra["multiplier"],
            homotopy_used=rep.homotopy_used,
        )
        rows.append(row)
        start = u
    return rows


def residual_axisym(u: AxisymField, spec: OperatorSpec, multiplier: float = 0.0) -> np.ndarray:
    """Undivided residual at every node, with alpha shifted by multiplier * cos(theta)."""
    alpha, alpha_l = spec.sample(u.theta[:, None])
    lam = wu_eigs(u).full()
    return np.broadcast_to(F_lambda(lam, alpha + multiplier * np.cos(u.theta), alpha_l, spec.k), u.theta.shape)


def write_fields_csv(path, u: AxisymField, spec: OperatorSpec, multiplier: float = 0.0):
    """Node dump: theta, u, lambda_rad, lambda_tan, residual, sigma1..sigma_{k-1}."""
    e = wu_eigs(u)
    sig = sigma_table(e.full(), spec.k - 1)
    res = residual_axisym(u, spec, multiplier)
    header = ["theta", "u", "lambda_rad", "lambda_tan", "residual"] + [f"sigma{j}" for j in range(1, spec.k)]
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        wr = csv.writer(fh)
        wr.writerow(header)
        for j in range(len(u.theta)):
            row = [u.theta[j], u.values[j], e.lambda_rad[j], e.lambda_tan[j], res[j]]
            row += [sig[j, m] for m in range(1, spec.k)]
            wr.writerow([repr(float(r)) for r in row])
