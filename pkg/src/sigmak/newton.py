"""Damped Newton core shared by the planar and spherical solvers.

The iteration map is the quotient residual G(W) + alpha; convergence is
declared on the undivided residual F.  Every accepted iterate stays inside
Gamma_{k-1} with the configured margin.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import PreconditionError, SolverStalled

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 60
    armijo: float = 1e-4
    sigma_min: float = 2.0**-30
    margin_rel: float = 1e-10
    homotopy_steps: int = 10
    max_rejected_full: int = 3
    eps_reg: float = 0.0
    constraint_tol: float = 1e-10


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    min_admissibility_margin: float = float("inf")
    sup_hessian: float = float("nan")
    h_diagnostic: float = float("nan")
    sigma_min: list = field(default_factory=list)
    sigma_max: list = field(default_factory=list)
    homotopy_used: bool = False
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "SolveReport":
        return cls(**data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass
class Evaluation:
    """What the core needs to know about an iterate."""

    admissible: bool
    merit: float  # sup of the quotient residual (and constraint rows)
    f_sup: float  # sup of the undivided residual
    constraint: float = 0.0
    min_margin: float = float("inf")
    payload: object = None  # problem-specific data reused by the step


def damped_newton(
    v0: np.ndarray,
    evaluate: Callable[[np.ndarray], Evaluation],
    step: Callable[[np.ndarray, Evaluation], np.ndarray],
    cfg: SolverConfig,
    tol: float,
    report: SolveReport,
    stall_on_rejected: bool = True,
):
    """Run backtracking Newton from ``v0``.

    Returns ``(v, evaluation, ok)``.  ``ok`` is False when the line search ran
    below ``cfg.sigma_min`` or ``cfg.max_rejected_full`` consecutive full steps
    were rejected (only when ``stall_on_rejected``); the caller decides
    whether to fall back to the homotopy.
    """
    v = np.array(v0, dtype=float)
    ev = evaluate(v)
    if not ev.admissible:
        raise PreconditionError("initial guess is not admissible")
    report.residual_history.append(ev.f_sup)
    report.min_admissibility_margin = min(report.min_admissibility_margin, ev.min_margin)
    rejected_full = 0
    for _ in range(cfg.max_iter):
        if ev.f_sup <= tol and ev.constraint <= cfg.constraint_tol:
            return v, ev, True
        delta = step(v, ev)
        if not np.all(np.isfinite(delta)):
            report.message = "non-finite Newton direction"
            return v, ev, False
        sigma = 1.0
        accepted = None
        while sigma >= cfg.sigma_min:
            cand = v + sigma * delta
            evc = evaluate(cand)
            if evc.admissible and evc.merit <= (1.0 - cfg.armijo * sigma) * ev.merit:
                accepted = (cand, evc)
                break
            sigma *= 0.5
        report.iterations += 1
        if accepted is None:
            report.message = f"line search failed below sigma={cfg.sigma_min:.3g}"
            return v, ev, False
        rejected_full = rejected_full + 1 if sigma < 1.0 else 0
        v, ev = accepted
        report.residual_history.append(ev.f_sup)
        report.min_admissibility_margin = min(report.min_admissibility_margin, ev.min_margin)
        log.debug("newton it=%d sigma=%.3g F=%.3e merit=%.3e", report.iterations, sigma, ev.f_sup, ev.merit)
        if stall_on_rejected and rejected_full >= cfg.max_rejected_full:
            report.message = f"{rejected_full} consecutive full steps rejected"
            return v, ev, ev.f_sup <= tol and ev.constraint <= cfg.constraint_tol
    converged = ev.f_sup <= tol and ev.constraint <= cfg.constraint_tol
    if not converged:
        report.message = f"no convergence in {cfg.max_iter} iterations"
    return v, ev, converged


def continuation(
    v0,
    make_problem: Callable[[float], tuple],
    cfg: SolverConfig,
    tol: float,
    report: SolveReport,
):
    """Try the target problem (t = 1) directly, then the homotopy t: 0 -> 1.

    ``make_problem(t)`` returns ``(evaluate, step)`` for stage t.
    """
    evaluate, step = make_problem(1.0)
    v, ev, ok = damped_newton(v0, evaluate, step, cfg, tol, report)
    if ok:
        report.converged = True
        return v, ev
    log.info("direct Newton stalled (%s); switching to homotopy", report.message)
    report.homotopy_used = True
    w = np.array(v0, dtype=float)
    for i in range(cfg.homotopy_steps + 1):
        t = i / cfg.homotopy_steps
        evaluate, step = make_problem(t)
        try:
            w, ev, ok = damped_newton(w, evaluate, step, cfg, tol, report, stall_on_rejected=False)
        except PreconditionError:
            ok = False
        if not ok:
            report.extra["homotopy_failed_at"] = t
            raise SolverStalled(f"homotopy stalled at t={t:.3g}: {report.message}", report, w)
    report.converged = True
    report.message = ""
    return w, ev
