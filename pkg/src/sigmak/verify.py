"""Sampling of Garding cones and batch checks of the operator's structure.

Each suite evaluates one inequality on a batch of sampled points, counts
violations beyond a tolerance and keeps the worst point.  Suites never
raise on a violation: the outcome is data in a :class:`SuiteReport`.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import ortho_group

from .errors import DomainError
from .operator import G_grad_lambda, G_lambda, G_lambda_flagged
from .spectral import eigen_sym, rotate_diag
from .symfun import newton_maclaurin_bound, sigma_table

STRATEGIES = ("interior", "near-boundary", "ray")
SUITES = (
    "ellipticity",
    "concavity",
    "quotient_concavity",
    "concavity_inequality",
    "newton_maclaurin",
    "sum_gii",
    "gradient_check",
)
DEFAULT_PAIRS = ((2, 2), (3, 2), (3, 3), (4, 3), (5, 3))
NEAR_BAND = (1e-6, 1e-3)
S_STEP = 0.25


@dataclass
class ConeSample:
    points: np.ndarray  # (count, n), each row sorted descending
    margins: np.ndarray  # (count, j): sigma_1 .. sigma_j
    j: int
    seed: int
    strategy: str

    @property
    def n(self) -> int:
        return self.points.shape[1]


def _sorted(lam):
    return -np.sort(-lam, axis=-1)


def _raise_into_cone(mu, j, rel_margin=0.0):
    # lam = mu + s 1 with s = 0, 0.25, 0.5, ... until sigma_m > rel_margin |lam|^m
    lam = mu.copy()
    out = np.ones(len(mu), dtype=bool)
    orders = np.arange(1, j + 1)
    for _ in range(10_000):
        if not np.any(out):
            return lam
        sub = lam[out]
        sig = sigma_table(sub, j)[:, 1:]
        scale = np.max(np.abs(sub), axis=1, keepdims=True) ** orders
        inside = np.all(sig > rel_margin * scale, axis=1)
        idx = np.nonzero(out)[0]
        out[idx[inside]] = False
        lam[idx[~inside]] += S_STEP
    raise RuntimeError("cone sampling did not terminate")


def sample_cone(n: int, j: int, count: int, strategy: str = "interior", seed: int = 0,
                rel_margin: float = 0.0) -> ConeSample:
    """Deterministic batch of points of Gamma_j.

    interior: mu standard normal, shifted by s * 1 with s raised in steps of
    1/4 until the point is in the cone (optionally with a relative margin).
    near-boundary: bisect the shift until min_m sigma_m lies in [1e-6, 1e-3].
    ray: positive multiples t * d of a few fixed interior directions d, with
    t spread log-uniformly over [1e-3, 1e3].
    """
    if not 1 <= j <= n:
        raise DomainError(f"need 1 <= j <= n, got j={j}, n={n}")
    if strategy not in STRATEGIES:
        raise DomainError(f"unknown strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    mu = rng.standard_normal((count, n))
    if strategy == "interior":
        lam = _raise_into_cone(mu, j, rel_margin)
    elif strategy == "near-boundary":
        lam = _near_boundary(mu, j)
    else:
        dirs = _raise_into_cone(rng.standard_normal((min(count, 8), n)), j, 1e-2)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t = 10.0 ** rng.uniform(-3, 3, count)
        lam = t[:, None] * dirs[np.arange(count) % len(dirs)]
    lam = _sorted(lam)
    return ConeSample(lam, sigma_table(lam, j)[:, 1:], j, seed, strategy)


def _near_boundary(mu, j):
    lo_band, hi_band = NEAR_BAND
    hi = _raise_into_cone(mu, j) - mu  # shifts that are inside
    hi = hi[:, 0] + 1.0  # comfortably inside (sigma_m increasing in s there)
    lo = hi - 1.0
    while True:
        inside = np.all(sigma_table(mu + lo[:, None], j)[:, 1:] > 0, axis=1)
        if not np.any(inside):
            break
        lo[inside] -= 1.0
    s = hi.copy()
    done = np.zeros(len(mu), dtype=bool)
    for _ in range(200):
        s = np.where(done, s, 0.5 * (lo + hi))
        lam = mu + s[:, None]
        sig = sigma_table(lam, j)[:, 1:]
        inside = np.all(sig > 0, axis=1)
        m = np.min(sig, axis=1)
        ok = inside & (m >= lo_band) & (m <= hi_band)
        done |= ok
        if np.all(done):
            break
        up = ~done & (~inside | (m < lo_band))
        down = ~done & inside & (m > hi_band)
        lo = np.where(up, s, lo)
        hi = np.where(down, s, hi)
    if not np.all(done):
        raise RuntimeError("near-boundary bisection did not reach the band")
    return mu + s[:, None]


# ---------------------------------------------------------------------------
# reports


@dataclass
class PairResult:
    n: int
    k: int
    count: int
    violations: int
    worst_margin: float
    worst_point: list
    skipped: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class SuiteReport:
    suite: str
    params: dict
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.results)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "params": self.params, "passed": self.passed,
                "results": [asdict(r) for r in self.results]}

    @classmethod
    def from_dict(cls, data: dict) -> "SuiteReport":
        return cls(data["suite"], data["params"], [PairResult(**r) for r in data["results"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SuiteReport":
        return cls.from_dict(json.loads(text))


def _result(n, k, margin, points, skipped=0, **extra) -> PairResult:
    """margin >= 0 means the inequality holds with room; violations are margin < 0."""
    margin = np.asarray(margin, dtype=float)
    valid = np.isfinite(margin)
    skipped += int(np.sum(~valid))
    if not np.any(valid):
        return PairResult(n, k, 0, 0, float("nan"), [], skipped, extra)
    idx = np.nonzero(valid)[0]
    w = idx[np.argmin(margin[idx])]
    return PairResult(
        n, k, int(valid.sum()), int(np.sum(margin[idx] < 0)), float(margin[w]),
        [float(v) for v in np.atleast_1d(points[w]).ravel()], skipped, extra,
    )


def _alphas(rng, count, k):
    return 1.0 - rng.uniform(0.0, 1.0, (count, k - 1))  # Uniform(0, 1]


def _frames(rng, count, n):
    return ortho_group.rvs(n, size=count, random_state=rng).reshape(count, n, n)


def _sym_dirs(rng, count, n):
    X = rng.standard_normal((count, n, n))
    X = 0.5 * (X + np.swapaxes(X, -1, -2))
    return X / np.linalg.norm(X, axis=(-1, -2), keepdims=True)


def _G_mat(W, alpha_l, k):
    return G_lambda(eigen_sym(W).values, alpha_l, k, check=False)


def _sym_basis(n):
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(E)
    return np.array(basis)


# ---------------------------------------------------------------------------
# suites; each takes (n, k, count, seed, tol) and returns a PairResult


def suite_ellipticity(n, k, count, seed, tol=1e-12, strategy="interior"):
    """Eigenframe linearisation entries G^{ii} >= -tol * max(1, max_i |G^{ii}|)."""
    rng = np.random.default_rng([seed, n, k, 1])
    sample = sample_cone(n, k - 1, count, strategy, seed=int(rng.integers(2**31)))
    alpha_l = _alphas(rng, count, k)
    grad = G_grad_lambda(sample.points, alpha_l, k, check=False)
    scale = np.maximum(1.0, np.max(np.abs(grad), axis=1))
    margin = np.min(grad, axis=1) + tol * scale
    return _result(n, k, margin, sample.points, min_entry=float(np.nanmin(grad)))


def suite_newton_maclaurin(n, k, count, seed, tol=1e-12, strategy="interior"):
    """bound * sigma_{k-1}^2 - sigma_k sigma_{k-2} >= -tol * scale, plus the equality point."""
    rng = np.random.default_rng([seed, n, k, 2])
    sample = sample_cone(n, k - 1, count, strategy, seed=int(rng.integers(2**31)))
    sig = sigma_table(sample.points, k)
    bound = newton_maclaurin_bound(n, k)
    lhs = sig[:, k] * sig[:, k - 2]
    rhs = bound * sig[:, k - 1] ** 2
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    margin = rhs - lhs + tol * scale
    ones = sigma_table(np.ones(n), k)
    eq = float((bound * ones[k - 1] ** 2 - ones[k] * ones[k - 2]) / ones[k - 1] ** 2)
    return _result(n, k, margin, sample.points, equality_margin=eq)


def suite_sum_gii(n, k, count, seed, tol=1e-10, strategy="interior"):
    """sum_i G^{ii} >= (n-k+1)/k - tol, with alpha_l in (0, 1] and with alpha_l = 0."""
    rng = np.random.default_rng([seed, n, k, 3])
    sample = sample_cone(n, k - 1, count, strategy, seed=int(rng.integers(2**31)))
    alpha_l = _alphas(rng, count, k)
    alpha_l[: count // 2] = 0.0
    trace = np.sum(G_grad_lambda(sample.points, alpha_l, k, check=False), axis=1)
    bound = (n - k + 1) / k
    at_one = float(np.sum(G_grad_lambda(np.ones(n), np.zeros(k - 1), k)))
    return _result(n, k, trace - bound + tol, sample.points, bound=bound, value_at_identity=at_one)


def suite_gradient_check(n, k, count, seed, tol=1e-6, strategy="interior"):
    """Relative Frobenius error of the analytic linearisation against central differences."""
    rng = np.random.default_rng([seed, n, k, 4])
    sample = sample_cone(n, k - 1, count, strategy, seed=int(rng.integers(2**31)), rel_margin=1e-2)
    alpha_l = _alphas(rng, count, k)
    Q = _frames(rng, count, n)
    W = rotate_diag(Q, sample.points)
    eig = eigen_sym(W)
    L = rotate_diag(eig.frame, G_grad_lambda(eig.values, alpha_l, k, check=False))
    h = 1e-5 * np.linalg.norm(W, axis=(-1, -2))
    fd = np.zeros_like(L)
    for E in _sym_basis(n):
        step = h[:, None, None] * E
        d = (8 * (_G_mat(W + step, alpha_l, k) - _G_mat(W - step, alpha_l, k))
             - (_G_mat(W + 2 * step, alpha_l, k) - _G_mat(W - 2 * step, alpha_l, k))) / (12.0 * h)
        fd += d[:, None, None] * E
    err = np.linalg.norm(L - fd, axis=(-1, -2)) / np.linalg.norm(L, axis=(-1, -2))
    return _result(n, k, tol - err, sample.points, max_rel_error=float(np.nanmax(err)))


def _fd_hessian(W, alpha_l, k, h):
    """Second-difference Hessian of G in an orthonormal basis of symmetric matrices."""
    n = W.shape[-1]
    basis = _sym_basis(n)
    d = len(basis)
    g0 = _G_mat(W, alpha_l, k)
    H = np.zeros((len(W), d, d))
    hh = h[:, None, None]
    for a in range(d):
        Ea = hh * basis[a]
        H[:, a, a] = (_G_mat(W + 2 * Ea, alpha_l, k) - 2 * g0 + _G_mat(W - 2 * Ea, alpha_l, k)) / (4 * h**2)
        for b in range(a + 1, d):
            Eb = hh * basis[b]
            v = (_G_mat(W + Ea + Eb, alpha_l, k) - _G_mat(W + Ea - Eb, alpha_l, k)
                 - _G_mat(W - Ea + Eb, alpha_l, k) + _G_mat(W - Ea - Eb, alpha_l, k)) / (4 * h**2)
            H[:, a, b] = H[:, b, a] = v
    return H, g0


def suite_concavity(n, k, count, seed, tol=1e-6, strategy="interior"):
    """Max eigenvalue of the FD Hessian of G <= tol (1 + |G|); directional probes as well."""
    rng = np.random.default_rng([seed, n, k, 5])
    sample = sample_cone(n, k - 1, count, strategy, seed=int(rng.integers(2**31)), rel_margin=1e-2)
    alpha_l = _alphas(rng, count, k)
    W = rotate_diag(_frames(rng, count, n), sample.points)
    h = 1e-4 * np.linalg.norm(W, axis=(-1, -2))
    H, g0 = _fd_hessian(W, alpha_l, k, h)
    top = np.linalg.eigvalsh(H)[:, -1]
    margin = tol * (1 + np.abs(g0)) - top
    X = _sym_dirs(rng, count, n)
    hx = h[:, None, None] * X
    probe = (_G_mat(W + hx, alpha_l, k) - 2 * g0 + _G_mat(W - hx, alpha_l, k)) / h**2
    margin = np.minimum(margin, tol * (1 + np.abs(g0)) - probe)
    return _result(n, k, margin, sample.points, max_hessian_eig=float(np.nanmax(top)),
                   max_probe=float(np.nanmax(probe)))


def suite_quotient_concavity(n, k, count, seed, tol=1e-6, strategy="interior"):
    """(sigma_q / sigma_p)^{1/(q-p)} along random symmetric directions in Gamma_q, all 0 <= p < q <= n.

    Here ``k`` plays no role beyond labelling; every (p, q) pair of the dimension is sampled.
    """
    rng = np.random.default_rng([seed, n, k, 6])
    worst = None
    total_viol = total = skipped = 0
    for q in range(1, n + 1):
        for p in range(q):
            sample = sample_cone(n, q, count, strategy, seed=int(rng.integers(2**31)), rel_margin=1e-2)
            # the quotient is 1-homogeneous, so unit-norm points lose nothing
            # and keep the difference quotient's rounding floor fixed
            pts = sample.points / np.linalg.norm(sample.points, axis=1, keepdims=True)
            W = rotate_diag(_frames(rng, count, n), pts)
            X = _sym_dirs(rng, count, n)
            h = np.full(count, 1e-3)

            def f(M):
                lam = eigen_sym(M).values
                sig = sigma_table(lam, q)
                ok = np.all(sig[:, 1:] > 0, axis=1)
                with np.errstate(invalid="ignore", divide="ignore"):
                    val = (sig[:, q] / sig[:, p]) ** (1.0 / (q - p))
                return np.where(ok, val, np.nan)

            hx = h[:, None, None] * X
            f0 = f(W)
            d2 = (f(W + hx) - 2 * f0 + f(W - hx)) / h**2
            res = _result(n, k, tol * (1 + np.abs(f0)) - d2, sample.points)
            total += res.count
            total_viol += res.violations
            skipped += res.skipped
            if worst is None or res.worst_margin < worst.worst_margin:
                worst = res
    return PairResult(n, k, total, total_viol, worst.worst_margin, worst.worst_point, skipped)


def suite_concavity_inequality(n, k, count, seed, tol=1e-6, strategy="interior", sharp=False):
    """-D^2 G_l(X, X) >= c_l |G_l|^{-1} (D G_l X)^2 for G_l = -sigma_l / sigma_{k-1}.

    c_l = 1 + 1/(k+1-l); with ``sharp`` the constant 1 + 1/(k-1-l) (which
    implies the former) is checked instead.  Violations are counted beyond
    tol * (1 + |lhs| + |rhs|).
    """
    rng = np.random.default_rng([seed, n, k, 7])
    sample = sample_cone(n, k - 1, count, strategy, seed=int(rng.integers(2**31)), rel_margin=1e-2)
    W = rotate_diag(_frames(rng, count, n), sample.points)
    X = _sym_dirs(rng, count, n)
    h = 1e-4 * np.linalg.norm(W, axis=(-1, -2))
    hx = h[:, None, None] * X
    margins = []
    per_l = {}
    for ell in range(k - 1):
        def G_l(M, ell=ell):
            sig = sigma_table(eigen_sym(M).values, k)
            return -sig[:, ell] / sig[:, k - 1]

        g0, gp, gm = G_l(W), G_l(W + hx), G_l(W - hx)
        gpp, gmm = G_l(W + 2 * hx), G_l(W - 2 * hx)
        # fourth-order stencils keep the truncation error well below tol
        d1 = (gm * 8 - gmm - gp * 8 + gpp) / (-12 * h)
        d2 = (-gpp + 16 * gp - 30 * g0 + 16 * gm - gmm) / (12 * h**2)
        c = 1 + 1 / (k - 1 - ell) if sharp else 1 + 1 / (k + 1 - ell)
        lhs = -d2
        rhs = -c * d1**2 / g0
        m = lhs - rhs + tol * (1 + np.abs(lhs) + np.abs(rhs))
        margins.append(m)
        per_l[str(ell)] = int(np.sum(m < 0))
    margin = np.min(np.stack(margins), axis=0)
    return _result(n, k, margin, sample.points, violations_per_l=per_l, sharp=sharp)


SUITE_FUNCS = {
    "ellipticity": suite_ellipticity,
    "concavity": suite_concavity,
    "quotient_concavity": suite_quotient_concavity,
    "concavity_inequality": suite_concavity_inequality,
    "newton_maclaurin": suite_newton_maclaurin,
    "sum_gii": suite_sum_gii,
    "gradient_check": suite_gradient_check,
}

DEFAULT_COUNTS = {
    "ellipticity": 100_000,
    "newton_maclaurin": 100_000,
    "sum_gii": 100_000,
    "concavity": 1_000,
    "quotient_concavity": 1_000,
    "concavity_inequality": 1_000,
    "gradient_check": 1_000,
}


def _threads():
    try:
        return max(1, int(os.environ.get("SIGMAK_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(suite: str, pairs=DEFAULT_PAIRS, count: int | None = None, seed: int = 0,
              tol: float | None = None, strategy: str = "interior", **kw) -> SuiteReport:
    """Run one suite over the (n, k) pairs; pairs run on SIGMAK_THREADS worker threads."""
    if suite not in SUITE_FUNCS:
        raise DomainError(f"unknown suite {suite!r}")
    pairs = [tuple(int(v) for v in p) for p in pairs]
    for n, k in pairs:
        if not 2 <= k <= n:
            raise DomainError(f"need 2 <= k <= n, got ({n}, {k})")
    count = DEFAULT_COUNTS[suite] if count is None else int(count)
    fn = SUITE_FUNCS[suite]
    opts = dict(kw, strategy=strategy)
    if tol is not None:
        opts["tol"] = tol

    def one(nk):
        return fn(nk[0], nk[1], count, seed, **opts)

    if _threads() > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(_threads()) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(nk) for nk in pairs]
    params = {"pairs": [list(p) for p in pairs], "count": count, "seed": seed,
              "strategy": strategy, **{k: v for k, v in opts.items() if k != "strategy"}}
    return SuiteReport(suite, params, results)


def boundary_flags(n: int, k: int, count: int = 1000, seed: int = 0):
    """Quotient form with alpha_0 = 1 on near-boundary samples of Gamma_{k-1}.

    Returns ``(values, flags)`` from :func:`G_lambda_flagged`: each entry is
    either finite or flagged, never a bare NaN.
    """
    sample = sample_cone(n, k - 1, count, "near-boundary", seed)
    alpha_l = np.zeros((count, k - 1))
    alpha_l[:, 0] = 1.0
    return G_lambda_flagged(sample.points, alpha_l, k)
