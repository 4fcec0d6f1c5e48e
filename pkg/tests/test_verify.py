import numpy as np
import pytest

from sigmak.errors import DomainError
from sigmak.operator import FLAG_OK
from sigmak.symfun import sigma_table
from sigmak.verify import (
    NEAR_BAND,
    SUITES,
    SuiteReport,
    boundary_flags,
    run_suite,
    sample_cone,
)


@pytest.mark.parametrize("strategy", ["interior", "near-boundary", "ray"])
@pytest.mark.parametrize("n,j", [(2, 1), (3, 2), (4, 4), (5, 3)])
def test_samples_in_cone(strategy, n, j):
    s = sample_cone(n, j, 300, strategy, seed=3)
    assert s.points.shape == (300, n) and s.margins.shape == (300, j)
    assert np.all(sigma_table(s.points, j)[:, 1:] > 0)
    assert np.all(np.diff(s.points, axis=1) <= 0)


def test_positive_cone_samples():
    s = sample_cone(4, 4, 500, seed=1)
    assert np.all(s.points > 0)


def test_gamma1_allows_negative_entries():
    s = sample_cone(2, 1, 500, seed=1)
    assert np.any(s.points[:, -1] < 0)


def test_near_boundary_band():
    s = sample_cone(3, 2, 400, "near-boundary", seed=5)
    m = np.min(s.margins, axis=1)
    assert np.all((m >= NEAR_BAND[0]) & (m <= NEAR_BAND[1]))


def test_seed_determinism():
    for strategy in ("interior", "near-boundary", "ray"):
        a = sample_cone(3, 2, 200, strategy, seed=11)
        b = sample_cone(3, 2, 200, strategy, seed=11)
        assert a.points.tobytes() == b.points.tobytes()
    assert not np.array_equal(sample_cone(3, 2, 50, seed=1).points, sample_cone(3, 2, 50, seed=2).points)


def test_bad_arguments():
    with pytest.raises(DomainError):
        sample_cone(3, 4, 10)
    with pytest.raises(DomainError):
        sample_cone(3, 2, 10, "sideways")
    with pytest.raises(DomainError):
        run_suite("nonsense")
    with pytest.raises(DomainError):
        run_suite("ellipticity", pairs=[(2, 3)], count=5)


SMALL = {
    "ellipticity": 2000,
    "newton_maclaurin": 2000,
    "sum_gii": 2000,
    "gradient_check": 100,
    "concavity": 30,
    "quotient_concavity": 50,
    "concavity_inequality": 100,
}


@pytest.mark.parametrize("suite", SUITES)
def test_small_suites_pass(suite):
    rep = run_suite(suite, pairs=[(2, 2), (3, 2), (4, 3)], count=SMALL[suite], seed=2)
    assert rep.passed, rep.to_dict()
    assert all(r.count > 0 for r in rep.results)


@pytest.mark.parametrize("strategy", ["near-boundary", "ray"])
def test_suites_other_strategies(strategy):
    for suite in ("ellipticity", "newton_maclaurin", "sum_gii"):
        assert run_suite(suite, pairs=[(3, 3), (5, 3)], count=500, seed=4, strategy=strategy).passed


def test_sharp_constant_also_holds():
    rep = run_suite("concavity_inequality", pairs=[(5, 3), (5, 4)], count=100, seed=0, sharp=True)
    assert rep.passed


def test_equality_records():
    rep = run_suite("newton_maclaurin", pairs=[(2, 2), (5, 3)], count=10)
    assert all(abs(r.extra["equality_margin"]) <= 1e-12 for r in rep.results)
    rep = run_suite("sum_gii", pairs=[(2, 2)], count=10)
    assert rep.results[0].extra["value_at_identity"] == 0.5


def test_tight_tolerance_is_reported_as_violation():
    # the trace bound holds with equality along the diagonal: a negative tolerance must flag it
    rep = run_suite("sum_gii", pairs=[(2, 2)], count=200, tol=-1.0)
    assert not rep.passed and rep.violations > 0
    assert rep.results[0].worst_margin < 0 and len(rep.results[0].worst_point) == 2


def test_report_round_trip():
    rep = run_suite("concavity_inequality", pairs=[(5, 3)], count=20, seed=9)
    again = SuiteReport.from_json(rep.to_json())
    assert again.to_json() == rep.to_json()
    assert again.results[0].extra == rep.results[0].extra


def test_threads_do_not_change_results(monkeypatch):
    monkeypatch.setenv("SIGMAK_THREADS", "1")
    one = run_suite("ellipticity", count=500, seed=6).to_json()
    monkeypatch.setenv("SIGMAK_THREADS", "4")
    four = run_suite("ellipticity", count=500, seed=6).to_json()
    assert one == four


@pytest.mark.parametrize("n,k", [(2, 2), (3, 3), (5, 3)])
def test_boundary_flags_no_nan(n, k):
    val, flags = boundary_flags(n, k, count=300, seed=1)
    assert not np.any(np.isnan(val))
    ok = flags == FLAG_OK
    assert np.all(np.isfinite(val[ok]))
    assert np.any(ok)
