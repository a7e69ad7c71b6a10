import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirichlet_l1.errors import IncompleteSpectrumError, PreconditionError
from dirichlet_l1.geometry import preset, rasterize
from dirichlet_l1.heat import (TruncationWarning, check_e59, check_e510_ratio, check_lemma52,
                               e510_constant, heat_content_spectral, heat_content_timestep,
                               heat_kernel_value, heat_series, heat_trace, poly_exp_bound,
                               tail_bound)
from dirichlet_l1.spectral import exact_interval_spectrum, solve_domain

PI2 = math.pi ** 2


def brute_trace(t, lengths=(1.0,), kmax=400):
    return sum(math.exp(-t * PI2 * k * k / ell ** 2) for ell in lengths for k in range(1, kmax))


def brute_content(t, ell=1.0, kmax=400):
    # (int phi_j)^2 = 8 ell / (pi^2 j^2) for odd j, zero for even j
    return sum(8 * ell / (PI2 * j * j) * math.exp(-t * PI2 * j * j / ell ** 2)
               for j in range(1, kmax, 2))


@pytest.fixture(scope="module")
def interval():
    return exact_interval_spectrum([(0, 1)], (40 * math.pi) ** 2)


def test_trace_unit_interval(interval):
    z, b = heat_trace(interval.truncated(10), 0.1)
    assert z == pytest.approx(0.39215, abs=1e-4)
    assert z == pytest.approx(brute_trace(0.1), rel=1e-12)
    assert b < 1e-20


def test_trace_large_time_leading_term(interval):
    z, _ = heat_trace(interval, 10.0)
    assert z == pytest.approx(math.exp(-10 * PI2), rel=1e-12)
    assert z == pytest.approx(1.4e-43, rel=0.05)


def test_trace_doubles_on_two_copies():
    one = exact_interval_spectrum([(0, 1)], 3000)
    two = exact_interval_spectrum([(0, 1), (2, 3)], 3000)
    assert heat_trace(two, 0.05)[0] == pytest.approx(2 * heat_trace(one, 0.05)[0], rel=1e-14)


@pytest.mark.parametrize("t", [0.02, 0.1, 0.5])
def test_tail_bound_dominates_true_tail(interval, t):
    part = interval.truncated(5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        true_tail = brute_trace(t) - heat_trace(part, t)[0]
    assert 0 <= true_tail <= tail_bound(part, t)


def test_truncation_warning_for_short_spectrum():
    eig = exact_interval_spectrum([(0, 1)], 10)
    with pytest.warns(TruncationWarning):
        heat_trace(eig, 1e-3)


def test_content_unit_interval(interval):
    q, _ = heat_content_spectral(interval, 0.1)
    assert q == pytest.approx(brute_content(0.1), rel=1e-12)
    assert q == pytest.approx(0.30217, abs=1e-4)
    even = [k for k, m in enumerate(interval.modes) if m.j % 2 == 0]
    assert np.all(interval.integrals[even] == 0.0)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_content_dominated_by_l1_sum(interval, t):
    q, _ = heat_content_spectral(interval, t)
    assert q <= np.sum(np.exp(-t * interval.eigenvalues) * interval.l1 ** 2)
    assert q >= math.exp(-t * interval.eigenvalues[0]) * interval.integrals[0] ** 2


def test_timestep_matches_spectral_interval(interval):
    mask = rasterize(preset("unit_interval"), 1 / 512)
    q = heat_content_timestep(mask, 0.1, 256)
    assert q == pytest.approx(0.30217, abs=1e-3)
    assert q == pytest.approx(heat_content_spectral(interval, 0.1)[0], abs=1e-4)


def test_timestep_small_time_is_volume():
    mask = rasterize(preset("unit_interval"), 1 / 512)
    assert heat_content_timestep(mask, 1e-6) == pytest.approx(1.0, abs=1e-2)


def test_timestep_monotone_and_second_order():
    mask = rasterize(preset("unit_interval"), 1 / 128)
    qs = [heat_content_timestep(mask, t) for t in (0.05, 0.1, 0.2)]
    assert qs[0] > qs[1] > qs[2]
    grid = solve_domain(preset("unit_interval"), 1 / 128, count=127)
    ref = heat_content_spectral(grid, 0.1)[0]
    errs = [abs(heat_content_timestep(mask, 0.1, s) - ref) for s in (32, 64)]
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_timestep_rejects_few_steps():
    mask = rasterize(preset("unit_interval"), 1 / 32)
    with pytest.raises(PreconditionError):
        heat_content_timestep(mask, 0.1, 8)


def test_kernel_value_midpoint(interval):
    p, b = heat_kernel_value(interval, 0.5, 0.5, 0.5)
    assert p == pytest.approx(0.01439, abs=1e-5)
    assert p == pytest.approx(2 * math.exp(-0.5 * PI2), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 2.0))
def test_kernel_symmetric_and_dominated(x, y, t):
    eig = exact_interval_spectrum([(0, 1)], (60 * math.pi) ** 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        pxy, b = heat_kernel_value(eig, x, y, t)
        pyx, _ = heat_kernel_value(eig, y, x, t)
    assert pxy == pyx
    assert pxy <= (4 * math.pi * t) ** -0.5 + b


def test_kernel_trace_identity_on_grid():
    eig = solve_domain(preset("unit_square"), 1 / 16, count=40)
    t = 0.05
    w = eig.mask.cell_volume
    diag = sum(heat_kernel_value(eig, i, i, t)[0] for i in range(eig.mask.size))
    assert w * diag == pytest.approx(heat_trace(eig, t)[0], rel=1e-10)


def test_kernel_semigroup_on_grid():
    eig = solve_domain(preset("unit_interval"), 1 / 64, count=63)
    s, t = 0.02, 0.03
    w = eig.mask.cell_volume
    x, y = 20, 40
    composed = w * sum(heat_kernel_value(eig, x, z, s)[0] * heat_kernel_value(eig, z, y, t)[0]
                       for z in range(eig.mask.size))
    assert composed == pytest.approx(heat_kernel_value(eig, x, y, s + t)[0], rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e4), st.floats(1e-3, 10), st.floats(0.1, 8))
def test_poly_exp_bound(x, t, a):
    lhs, rhs = poly_exp_bound(x, t, a)
    assert lhs <= rhs * (1 + 1e-12)


def test_trace_by_content_unit_interval(interval):
    series = heat_series(interval, [0.2])
    reps = {r.inputs["t"]: r for r in check_e59(series)}
    rep = reps[0.2]
    assert rep.lhs == pytest.approx(0.13927, abs=1e-4)
    assert rep.rhs == pytest.approx(0.26957, abs=2e-4)
    assert rep.verdict == "pass"


def test_trace_by_content_ratio_invariant_under_duplication():
    one = heat_series(exact_interval_spectrum([(0, 1)], 4e4), [0.1, 0.3])
    two = heat_series(exact_interval_spectrum([(0, 1), (2, 3)], 4e4), [0.1, 0.3])
    for a, b in zip(check_e59(one), check_e59(two)):
        assert a.ratio == pytest.approx(b.ratio, rel=1e-12)
        assert b.lhs == pytest.approx(2 * a.lhs, rel=1e-12)


def test_content_by_trace_ratio_positive_finite(interval):
    series = heat_series(interval, [0.05, 0.1, 0.2, 0.5, 1.0])
    reps = check_e510_ratio(series)
    assert len(reps) >= 5
    for r in reps:
        assert r.verdict == "ratio-only" and 0 < r.ratio < math.inf
    assert e510_constant(1) == pytest.approx(max(6 / math.e, (2 / math.e) ** 1))


def test_counting_by_trace_examples(interval):
    rep = check_lemma52(interval, 0.1, ks=[1])[0]
    assert rep.lhs == 1
    assert rep.rhs == pytest.approx(0.392 * 7.20, rel=5e-3)
    assert rep.verdict == "pass"
    assert all(r.passed for r in check_lemma52(interval, 0.01))


def test_counting_by_trace_cluster_and_incomplete():
    eig = solve_domain(preset("disjoint_balls(3)"), 1 / 16, threshold=30)
    reps = check_lemma52(eig, 0.1, ks=[1])
    assert reps[0].lhs >= 3 and reps[0].passed
    short = dataclasses.replace(exact_interval_spectrum([(0, 1)], 15), complete_below=15.0)
    with pytest.raises(IncompleteSpectrumError):
        check_lemma52(short, 0.1, ks=[1])


def test_series_csv_and_hash(interval):
    mask = rasterize(preset("unit_interval"), 1 / 64)
    series = heat_series(interval, [0.1], mask=mask)
    lines = series.to_csv().splitlines()
    assert lines[0] == "t,Z,Q_spectral,Q_timestep,trunc_bound"
    assert len(lines) == 1 + len(series.times)
    assert len(series.source_hash) == 64
    assert np.all(np.diff(series.Z) < 0) and np.all(np.diff(series.Q_spectral) < 0)
