from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigmak.errors import ConditionViolatedError, DomainError, InadmissibleError
from sigmak.operator import (
    FLAG_INADMISSIBLE,
    FLAG_OK,
    CoefficientSet,
    OperatorSpec,
    G0_identity,
    G_grad_lambda,
    G_lambda,
    G_lambda_flagged,
    concavity_probe,
    cubic_reduce,
    eval_F,
    eval_G,
    eval_Gt,
    linearize,
    sum_Gii,
)
from sigmak.symfun import shift_expansion, sigma_table
from sigmak.verify import sample_cone

INDEF = np.diag([-0.25, 1.0])


def spec(n, k, alpha=0.0, alpha_l=(), **kw):
    return OperatorSpec(n, k, CoefficientSet(alpha=alpha, alpha_l=list(alpha_l), **kw))


def test_eval_F_examples():
    assert eval_F(INDEF, None, spec(2, 2, 1.0, [0.5])) == 0.0
    assert eval_F(np.eye(3), None, spec(3, 2, 0.0, [3.0])) == pytest.approx(0.0, abs=1e-14)
    for c in (0.5, 1.0, 2.0):
        assert eval_F(c * np.eye(2), None, spec(2, 2, 0.0, [1.0])) == pytest.approx(c * c - 1)


def test_eval_F_defined_outside_cone():
    assert eval_F(-np.eye(2), None, spec(2, 2, 0.0, [1.0])) == pytest.approx(0.0)


def test_eval_G_examples():
    assert eval_G(INDEF, None, spec(2, 2, 1.0, [0.5])) == pytest.approx(-1.0)
    for n in (2, 3, 5):
        assert eval_G(np.eye(n), None, spec(n, 2)) == pytest.approx((n - 1) / 2)


def test_eval_G_inadmissible():
    with pytest.raises(InadmissibleError) as info:
        eval_G(-np.eye(2), None, spec(2, 2, 0.0, [1.0]))
    assert info.value.order == 1
    assert info.value.value == pytest.approx(-2.0)


def test_quotient_blowup_near_boundary():
    sp = spec(2, 2, 0.0, [1.0])
    vals = [eval_G(np.diag([t, -t / 2 + s]), None, sp) for t, s in [(1.0, 0.51), (1.0, 0.5001)]]
    assert vals[1] < vals[0] < 0
    with pytest.raises(InadmissibleError):
        eval_G(np.diag([1.0, -1.0 + 1e-13]), None, sp)


def test_flagged_form():
    lam = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, -0.999]])
    val, flags = G_lambda_flagged(lam, np.array([[1.0]] * 3), 2)
    assert list(flags) == [FLAG_OK, FLAG_INADMISSIBLE, FLAG_OK]
    assert np.all(np.isfinite(val))


def test_eval_Gt_examples():
    sp = spec(2, 2, 1.0, [0.5])
    assert eval_Gt(INDEF + 2 * np.eye(2), None, sp, 1.0) == pytest.approx(
        eval_G(INDEF + 2 * np.eye(2), None, sp) + 1.0)
    for n, k in [(2, 2), (3, 2), (3, 3), (5, 3), (6, 4)]:
        assert eval_Gt(np.eye(n), None, spec(n, k, 0.3, [0.2] * (k - 1)), 0.0) == pytest.approx(0.0, abs=1e-14)
    assert eval_Gt(2 * np.eye(2), None, spec(2, 2), 0.0) == pytest.approx(0.75)
    with pytest.raises(DomainError):
        eval_Gt(np.eye(2), None, spec(2, 2), 1.5)


def test_G0_identity_binomials():
    assert G0_identity(2, 2) == 0.0
    assert G0_identity(4, 3) == pytest.approx((comb(4, 3) - 1 - 4) / comb(4, 2))


def test_linearize_examples():
    assert np.allclose(linearize(np.eye(2), None, spec(2, 2)), 0.25 * np.eye(2))
    assert np.allclose(linearize(np.eye(2), None, spec(2, 2, 0.0, [1.0])), 0.5 * np.eye(2))


def test_linearize_psd_on_samples():
    rng = np.random.default_rng(0)
    for n, k in [(3, 2), (4, 3), (5, 3)]:
        pts = sample_cone(n, k - 1, 200, seed=n).points
        Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
        for lam in pts[:50]:
            W = Q @ np.diag(lam) @ Q.T
            L = linearize(W, None, spec(n, k, 0.0, rng.uniform(0, 1, k - 1)))
            assert np.min(np.linalg.eigvalsh(L)) >= -1e-12 * max(1.0, np.abs(L).max())


def test_sum_gii_examples():
    assert sum_Gii(np.eye(2), None, spec(2, 2)) == pytest.approx(0.5)
    assert sum_Gii(np.eye(3), None, spec(3, 2)) == pytest.approx(1.0)
    W = np.diag([2.0, 1.0, 0.5])
    base = sum_Gii(W, None, spec(3, 2))
    assert sum_Gii(W, None, spec(3, 2, 0.0, [0.3])) > base
    # the alpha_0 contribution is (n-k+2) alpha_0 sigma_{k-2} / sigma_{k-1}^2
    lift = sum_Gii(W, None, spec(3, 2, 0.0, [0.3])) - base
    assert lift == pytest.approx(3 * 0.3 / 3.5**2)


def test_concavity_probe_examples():
    sp = spec(3, 3, 0.0, [0.2, 0.4])
    W = np.diag([3.0, 2.0, 1.0])
    assert concavity_probe(W, None, sp, np.zeros((3, 3)), 1e-3) == 0.0
    assert concavity_probe(np.eye(3), None, spec(3, 3), np.eye(3), 1e-3) == pytest.approx(0.0, abs=1e-7)
    rng = np.random.default_rng(1)
    for _ in range(50):
        X = rng.standard_normal((3, 3))
        X = X + X.T
        assert concavity_probe(W, None, sp, X, 1e-4) <= 1e-6 * (1 + abs(eval_G(W, None, sp)))
    with pytest.raises(InadmissibleError):
        concavity_probe(np.eye(3), None, sp, -np.eye(3), 2.0)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (3, 2), (3, 3), (4, 3), (5, 4)]))
def test_F_zero_iff_G_minus_alpha(seed, nk):
    n, k = nk
    rng = np.random.default_rng(seed)
    lam = sample_cone(n, k - 1, 1, seed=seed).points[0]
    alpha_l = rng.uniform(0, 1, k - 1)
    sig = sigma_table(lam, k)
    # choose alpha so that F vanishes exactly at lam
    alpha = -(sig[k] - np.dot(alpha_l, sig[: k - 1])) / sig[k - 1]
    sp = spec(n, k, alpha, alpha_l)
    W = np.diag(lam)
    assert abs(eval_F(W, None, sp)) <= 1e-10 * max(1.0, abs(sig[k - 1]), abs(sig[k]))
    assert abs(eval_G(W, None, sp) + alpha) <= 1e-10 * max(1.0, abs(alpha))


def test_coefficient_fields():
    cs = CoefficientSet(alpha=lambda x, y: x + y, alpha_l=[lambda x, y: x * x])
    pts = np.array([[1.0, 2.0], [3.0, -1.0]])
    alpha, alpha_l = cs.sample(2, pts)
    assert np.allclose(alpha, [3.0, 2.0])
    assert alpha_l.shape == (2, 1) and np.allclose(alpha_l[:, 0], [1.0, 9.0])
    with pytest.raises(DomainError):
        CoefficientSet(alpha_l=[-1.0]).sample(2)
    with pytest.raises(DomainError):
        CoefficientSet(alpha_l=[1.0, 1.0]).sample(2)


def test_factorised_coefficients():
    g = lambda th: 0.1 + th  # noqa: E731
    cs = CoefficientSet(factors=[(g, 2.0)])
    _, alpha_l = cs.sample(2, np.array([[0.0], [1.0]]))
    assert np.allclose(alpha_l[:, 0], [0.01, 1.21])
    bad = CoefficientSet(alpha_l=[lambda th: 0.1 + th], factors=[(g, 2.0)])
    with pytest.raises(DomainError):
        bad.sample(2, np.array([[1.0]]))


def test_operator_spec_range():
    with pytest.raises(DomainError):
        OperatorSpec(2, 3)
    with pytest.raises(DomainError):
        OperatorSpec(3, 1)


def test_shift_tensor():
    sp = OperatorSpec(2, 2, CoefficientSet(alpha=1.0, alpha_l=[0.5]), shift=np.diag([-0.25, 0.0]))
    assert eval_F(np.diag([0.0, 1.0]), None, sp) == 0.0
    with pytest.raises(DomainError):
        OperatorSpec(2, 2, shift=np.array([[0.0, 1.0], [0.0, 0.0]])).shift_at()


def test_gradient_kernel_nan_when_unchecked():
    g = G_grad_lambda(np.array([[1.0, -2.0]]), np.array([[1.0]]), 2, check=False)
    assert np.all(np.isnan(g))
    v = G_lambda(np.array([[1.0, -2.0]]), np.array([[1.0]]), 2, check=False)
    assert np.isnan(v[0])


def test_cubic_examples():
    r = cubic_reduce(0.0, 0.0, 2.5, 4)
    assert (r.s, r.alpha_new, r.gamma) == (0.0, 0.0, -2.5)
    assert r.flipped
    r = cubic_reduce(1.0, 0.0, 0.0, 3)
    assert (r.s, r.alpha_new, r.gamma, r.flipped) == (0.0, 1.0, 0.0, False)
    assert np.copysign(1.0, r.s) == 1.0 and np.copysign(1.0, r.gamma) == 1.0


def test_cubic_condition_violation():
    with pytest.raises(ConditionViolatedError) as info:
        cubic_reduce(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.0, 3)
    assert info.value.where == (1,)
    with pytest.raises(DomainError):
        cubic_reduce(1.0, 0.0, 0.0, 2)


def test_cubic_larger_root_and_flip():
    rng = np.random.default_rng(4)
    n = 5
    a = rng.normal(size=100)
    b = (n - 1) * a**2 / (2 * (n - 2)) * rng.uniform(-2, 1, 100)
    c = rng.normal(size=100)
    r = cubic_reduce(a, b, c, n)
    q = (n - 1) * (n - 2) / 2
    roots = np.stack([np.roots([q, (n - 1) * ai, bi]) for ai, bi in zip(a, b)])
    assert np.allclose(r.s, np.max(roots.real, axis=1), rtol=1e-10, atol=1e-12)
    a2, g2 = r.flipped_form()
    assert np.all(g2 >= 0)
    # flipped equation: sigma_3(mu) - alpha_new sigma_2(mu) = -gamma for mu = -lam
    lam = rng.normal(size=(100, n))
    sig_l = sigma_table(lam, 3)
    sig_m = sigma_table(-lam, 3)
    lhs = sig_l[:, 3] + r.alpha_new * sig_l[:, 2] - r.gamma
    flip = sig_m[:, 3] - r.alpha_new * sig_m[:, 2] + r.gamma
    assert np.allclose(lhs, -flip)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(3, 7))
def test_cubic_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    lam = sample_cone(n, 2, 1, seed=seed).points[0]
    a = rng.normal() * 2
    b = (n - 1) * a * a / (2 * (n - 2)) * rng.uniform(-3, 1)
    c = rng.normal()
    r = cubic_reduce(a, b, c, n)
    sig = sigma_table(lam, 3)
    shifted = [shift_expansion(sig, r.s, m, n) for m in range(4)]
    orig = shifted[3] + a * shifted[2] + b * shifted[1] + c
    red = sig[3] + r.alpha_new * sig[2] - r.gamma
    scale = max(1.0, abs(sig[3]), abs(r.alpha_new * sig[2]), abs(r.gamma), abs(shifted[3]))
    assert abs(orig - red) <= 1e-10 * scale
