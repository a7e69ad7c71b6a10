import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirichlet_l1.bounds import (box_spectrum, check_e4, check_remark213, check_thm212,
                                 cor25_terms, cor26_rhs, e4_rhs, prop22_n_choice, prop22_rhs,
                                 ratio_cor26, ratio_thm01, synthetic_spectrum, worst_l1_squared)
from dirichlet_l1.errors import PreconditionError, ValidationError
from dirichlet_l1.localization import decay_params
from dirichlet_l1.geometry import preset
from dirichlet_l1.reports import BoundReport
from dirichlet_l1.spectral import exact_interval_spectrum, solve_domain

PI2 = math.pi ** 2


@pytest.fixture(scope="module")
def interval():
    return exact_interval_spectrum([(0, 1)], (21 * math.pi) ** 2)


def test_sup_l1_bounds_unit_interval_closed_forms(interval):
    reps = check_thm212(interval, count=1)
    up, lo, bridge = reps
    assert up.lhs == pytest.approx(math.sqrt(2), rel=1e-14)
    assert up.rhs == pytest.approx((math.e / (2 * math.pi)) ** 0.25 * math.sqrt(math.pi), rel=1e-14)
    assert up.rhs == pytest.approx(1.43881, abs=2e-3)
    assert lo.lhs == pytest.approx(0.90032, abs=1e-5)
    assert lo.rhs == pytest.approx((2 * math.pi / math.e) ** 0.25 / math.sqrt(math.pi), rel=1e-14)
    assert lo.rhs == pytest.approx(0.69500, abs=2e-3)
    assert all(r.verdict == "pass" for r in reps)
    assert bridge.lhs <= bridge.rhs


def test_sup_l1_bounds_all_modes_pass(interval):
    reps = check_thm212(interval, count=20)
    assert len(reps) == 60 and all(r.passed for r in reps)


def test_sup_l1_bounds_grid_slack_recorded():
    eig = solve_domain(preset("unit_square"), 1 / 32, count=5)
    reps = check_thm212(eig)
    assert all(r.passed for r in reps)
    assert reps[0].inputs["slack"] == pytest.approx(1 + 50 / 32)


def test_sup_l1_bounds_negative_eigenvalue_is_precondition_failure(interval):
    bad = interval.truncated(2)
    bad.eigenvalues = -bad.eigenvalues
    reps = check_thm212(bad)
    assert reps[0].verdict == "precondition-fail" and reps[0].failed


def test_counting_bound_square_examples():
    sq = box_spectrum([1, 1], 120 * PI2)
    rep = check_e4(sq, 1.0, 2 * PI2)
    # d^{-d/2} = 1/2 in two dimensions
    assert rep.rhs == pytest.approx(0.25, rel=1e-14)
    assert rep.lhs == 1 and rep.verdict == "pass"
    assert check_e4(sq, 1.0, 50 * 2 * PI2).verdict == "pass"
    below = check_e4(sq, 1.0, PI2)
    assert below.verdict == "not-applicable"


@settings(max_examples=40, deadline=None)
@given(st.floats(1, 60))
def test_counting_bound_square_sampled(mult):
    sq = box_spectrum([1, 1], 130 * PI2)
    assert check_e4(sq, 1.0, mult * 2 * PI2).passed


def test_counting_bound_rhs_scaling():
    assert e4_rhs(1.0, 4.0, 1) == pytest.approx(2 / (2 * math.pi))
    assert e4_rhs(2.0, 4.0, 2) == pytest.approx(2 * e4_rhs(1.0, 4.0, 2))


def test_interval_union_bound_single_interval_equality(interval):
    reps = check_remark213(interval)
    extremal = [r for r in reps if r.inputs["vector"] == "extremal"]
    assert extremal[0].lhs == pytest.approx(8 / PI2, rel=1e-14)
    for r in extremal:
        assert r.lhs == pytest.approx(r.rhs, rel=1e-10)
    assert all(r.passed for r in reps)


def test_interval_union_bound_equal_pair():
    eig = exact_interval_spectrum([(0, 1), (2, 3)], 40)
    first = check_remark213(eig)[0]
    assert first.lhs == pytest.approx(1.62114, abs=1e-5)
    assert first.lhs == pytest.approx(first.rhs, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0]), min_size=1, max_size=4),
       st.integers(0, 1000))
def test_interval_union_bound_never_violated(lengths, seed):
    ivs, x = [], 0.0
    for ell in lengths:
        ivs.append((x, x + ell))
        x += ell + 0.5
    eig = exact_interval_spectrum(ivs, 200)
    assert all(r.passed for r in check_remark213(eig, seed=seed))


def test_interval_union_bound_needs_exact():
    with pytest.raises(ValidationError):
        check_remark213(solve_domain(preset("unit_interval"), 1 / 16, count=2))


def test_eigenvalue_ratio_unit_square():
    eig = solve_domain(preset("unit_square"), 1 / 64, count=6)
    rep = ratio_thm01(eig, 1, theta=1.0)
    assert rep.verdict == "ratio-only"
    assert 0 < rep.ratio < math.inf
    assert rep.inputs["N"] == 1
    assert any("max(log N, 1)" in n for n in rep.notes)


def test_eigenvalue_ratio_scaling_covariance():
    ivs = [(0, 1), (2, 3.37), (4, 4.71)]  # incommensurate lengths, no ties
    for c in (0.3, 2.0, 7.0):
        base = exact_interval_spectrum(ivs, 2000)
        scaled = exact_interval_spectrum([(a * c, b * c) for a, b in ivs], 2000 / c ** 2)
        for k in (1, 3, 5):
            assert ratio_thm01(base, k).ratio == pytest.approx(ratio_thm01(scaled, k).ratio,
                                                               rel=1e-10)


def test_worst_l1_disjoint_cluster():
    eig = solve_domain(preset("disjoint_balls(3)"), 1 / 16, count=3)
    val, exact = worst_l1_squared(eig, 0)
    assert exact
    assert val == pytest.approx(np.sum(eig.l1[:3] ** 2))
    two = exact_interval_spectrum([(0, 1), (2, 3)], 15)
    assert worst_l1_squared(two, 0) == (pytest.approx(2 * 8 / PI2), True)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.integers(1, 50), st.sampled_from([1, 2]))
def test_ratio_terms_theta_scaling(th1, th2, N, d):
    a1, b1 = cor25_terms(1.0, 3.0, N, th1, d)
    a2, b2 = cor25_terms(1.0, 3.0, N, th2, d)
    assert a2 / a1 == pytest.approx((th1 / th2) ** d, rel=1e-10)
    assert b2 / b1 == pytest.approx((th1 / th2) ** (4 * d), rel=1e-10)


def test_ratio_terms_theta_range():
    with pytest.raises(PreconditionError):
        cor25_terms(1, 2, 3, 1.5, 1)


def test_essential_gap_ratio_synthetic():
    eig = synthetic_spectrum([1, 2, 3], complete_below=4.0)
    reps = ratio_cor26(eig, 1.0, 4.0, 2.0)
    assert [r.inputs["k"] for r in reps] == [1, 2]
    assert reps[0].inputs["t_r"] == pytest.approx(10 / 3)
    assert reps[0].inputs["N"] == 3
    assert all(0 < r.ratio < math.inf for r in reps)
    with pytest.raises(PreconditionError):
        ratio_cor26(eig, 1.0, 4.0, 0.5)
    with pytest.raises(PreconditionError):
        ratio_cor26(eig, 1.0, 4.0, 4.0)


def test_essential_gap_ratio_diverges_near_sigma():
    vals = [cor26_rhs(1.0, 4.0, 4.0 - eps, 3, 1) for eps in (1e-1, 1e-2, 1e-3)]
    assert vals[0] < vals[1] < vals[2]
    # leading growth is (Sigma - r)^{-4d}
    assert vals[2] / vals[1] == pytest.approx(1e4, rel=1e-2)


def test_essential_gap_ratio_scaling_invariance():
    ivs = [(0, 1), (2, 3.3)]
    c = 2.5
    base = exact_interval_spectrum(ivs, 200)
    scaled = exact_interval_spectrum([(a * c, b * c) for a, b in ivs], 200 / c ** 2)
    Lam, Sigma, r = base.eigenvalues[0], 150.0, 60.0
    a = ratio_cor26(base, Lam, Sigma, r)
    b = ratio_cor26(scaled, Lam / c ** 2, Sigma / c ** 2, r / c ** 2)
    assert len(a) == len(b) > 0
    for x, y in zip(a, b):
        assert x.ratio == pytest.approx(y.ratio, rel=1e-10)


def test_localized_mass_bound_examples():
    p = decay_params(1, 2, 2)
    assert p.beta == 0.5
    assert p.alpha == pytest.approx(1 / (32 * p.m_d))
    n, path = prop22_n_choice(p, 1)
    assert path == "floor" and n == pytest.approx(p.n0)
    rhs = prop22_rhs(n, 1, 2, 1, p)
    assert rhs > 0 and math.isfinite(rhs)
    with pytest.raises(PreconditionError):
        prop22_rhs(1.0, 1, 2, 1, p)
    N = 10 ** 6
    n, path = prop22_n_choice(p, N)
    assert path == "log"
    assert math.exp(-p.alpha * n) * N == pytest.approx(1 / N, rel=1e-9)


def test_bound_report_guards():
    with pytest.raises(ValueError):
        BoundReport("x", 1, 2, constant_mode="unit-constant", verdict="pass")
