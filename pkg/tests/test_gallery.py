import math

import pytest

from dirichlet_l1 import gallery
from dirichlet_l1.errors import UsageError
from dirichlet_l1.reports import BoundReport, ratio_only, upper
from dirichlet_l1.spectral import exact_interval_spectrum


def _ratio(value, k=1, case="c"):
    return ratio_only("thm01", value, 1.0, case=case, inputs={"k": k, "theta": 1.0})


def test_envelope_key_stable():
    a, b = _ratio(2.0), _ratio(3.0)
    assert gallery.envelope_key(a) == gallery.envelope_key(b) == "c|thm01|k=1,theta=1"


@pytest.mark.parametrize("value,expected", [(1.0, "within"), (1.05, "within"),
                                            (1.051, "exceeded"), (0.1, "within")])
def test_compare_envelope(value, expected):
    rep = _ratio(value)
    exceeded = gallery.compare_envelope([rep], {gallery.envelope_key(rep): 1.0})
    assert rep.inputs["envelope"] == expected
    assert bool(exceeded) == (expected == "exceeded")


def test_compare_envelope_ignores_explicit_and_marks_new():
    explicit = upper("e59", 1.0, 2.0)
    fresh = _ratio(5.0, k=9)
    assert gallery.compare_envelope([explicit, fresh], {}) == []
    assert "envelope" not in explicit.inputs and fresh.inputs["envelope"] == "new"


def test_stored_envelopes_present():
    for name in ("gallery", "sweep_dumbbell", "sweep_disjoint_balls"):
        env = gallery.load_golden(name)
        assert env and all(0 < v < math.inf for v in env.values())


def test_gallery_case_lookup():
    assert gallery.gallery_case("dumbbell").h == 1 / 128
    with pytest.raises(UsageError):
        gallery.gallery_case("teapot")


def test_run_case_on_loaded_spectrum_skips_function_checks():
    eig = exact_interval_spectrum([(0, 1)], 4000)
    case = gallery.Case("loaded", "", exact=True)
    reps = gallery.run_case(case, ("thm212", "lemma31", "e59"), eig=eig)
    verdicts = {r.check: r.verdict for r in reps}
    assert verdicts["lemma31"] == "not-applicable"
    assert verdicts["thm212_upper"] == "pass" and verdicts["e59"] == "pass"


def test_run_case_reports_broken_input_instead_of_raising():
    eig = exact_interval_spectrum([(0, 1)], 4000)
    eig.eigenvalues = -eig.eigenvalues
    reps = gallery.run_case(gallery.Case("bad", "", exact=True), ("thm01", "e510"), eig=eig)
    assert {r.verdict for r in reps} == {"precondition-fail"}


def test_sweep_rejects_unknown_family():
    with pytest.raises(UsageError):
        gallery.sweep("teapots")


def test_essential_gap_synthetic_reports():
    reps = gallery.run_cor26_synthetic()
    assert reps and all(isinstance(r, BoundReport) and 0 < r.ratio < math.inf for r in reps)
