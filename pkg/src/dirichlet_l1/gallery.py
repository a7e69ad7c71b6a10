"""Pinned example domains and the check runner behind ``verify`` and ``sweep``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from . import jsonio
from .bounds import (box_spectrum, check_e4, check_remark213, check_thm212, prop22_n_choice,
                     prop22_rhs, ratio_cor26, ratio_thm01, synthetic_spectrum)
from .errors import DirichletError, SingularityError, UsageError
from .geometry import largest_inscribed_cube, rasterize, resolve_domain
from .heat import check_e59, check_e510_ratio, check_lemma52, heat_series
from .localization import (bad_cells, check_eq319, check_lemma31, check_lemma32, decay_params,
                           decay_profile, resolvent_block_norms)
from .reports import NOT_APPLICABLE, PRECONDITION_FAIL, RATIO_ONLY, VACUOUS, BoundReport, lower
from .spectral import counting_function, solve_domain

CHECKS = ("thm212", "e4", "remark213", "lemma31", "lemma32", "decay", "lemma52", "e59",
          "e510", "thm01", "cor26", "prop22")
HEAT_TIMES = (0.05, 0.1, 0.2, 0.5)
ENVELOPE_SLACK = 1.05
R_NORM, T_NORM = 1.0, 2.0  # thresholds in the frame where lambda_1 = 1
DECAY_SCALE = 2
LOCAL_H_1D = 1 / 256


@dataclass(frozen=True)
class Case:
    name: str
    domain: str
    h: float | None = None
    exact: bool = False
    count: int = 30
    local_h: float | None = None
    box: tuple | None = None  # sides, when the domain is a box with a closed-form spectrum

    def spec(self):
        return resolve_domain(self.domain)

    def to_dict(self):
        return {"name": self.name, "domain": self.domain, "h": self.h, "exact": self.exact,
                "count": self.count}


GALLERY = (
    Case("unit_interval", "unit_interval", exact=True, count=60, local_h=LOCAL_H_1D),
    Case("unit_square", "unit_square", h=1 / 128, count=40, box=(1.0, 1.0)),
    Case("dumbbell", "dumbbell(2,0.2)", h=1 / 128, count=30),
    Case("disjoint_balls", "disjoint_balls(3)", h=1 / 64, count=30),
    Case("interval_union", "interval_union(1,2)", exact=True, count=60, local_h=LOCAL_H_1D),
    Case("packed_cubes", "packed_cubes(3)", h=1 / 64, count=30),
)

# elongated dumbbells whose rescaled bad cubes leave part of the domain uncovered
COMPANIONS = {
    "lemma32": Case("dumbbell_long", "dumbbell(2,0.2,14)", h=1 / 32, count=4),
    "decay": Case("dumbbell_long_wide", "dumbbell(2,0.4,8)", h=1 / 32, count=4),
}


def gallery_case(name):
    for c in GALLERY:
        if c.name == name:
            return c
    raise UsageError(f"unknown gallery case '{name}'")


ALIASES = {"ratio_thm01": "thm01", "ratio_cor26": "cor26", "ratio_e510": "e510",
           "eq319": "lemma31", "decay_mass": "decay", "decay_resolvent": "decay"}
# checks that only read eigenvalues and norms, so they also run on a loaded eig file
EIGENVALUE_CHECKS = ("thm212", "lemma52", "e59", "e510", "thm01")


def parse_checks(text):
    if text in (None, "", "all"):
        return CHECKS
    ids = []
    for raw in text.split(","):
        c = ALIASES.get(raw.strip(), raw.strip())
        if not c:
            continue
        if c not in CHECKS:
            raise UsageError(f"unknown check id '{raw.strip()}'", known=list(CHECKS))
        if c not in ids:
            ids.append(c)
    if not ids:
        raise UsageError("empty check list", known=list(CHECKS))
    return tuple(ids)


# ---------------------------------------------------------------------------
# spectra

@lru_cache(maxsize=32)
def case_spectrum(case):
    """Eigenpairs of a case, extended until counts up to ``2 lambda_10`` are known."""
    spec = case.spec()
    eig = solve_domain(spec, case.h, count=case.count, exact=case.exact)
    need = 2.1 * eig.eigenvalues[min(9, len(eig) - 1)]
    if eig.complete_below <= need:
        eig = solve_domain(spec, case.h, threshold=need, exact=case.exact)
    eig.label = case.name
    return eig


@lru_cache(maxsize=32)
def normalized_frame(case):
    """``(scale, eig, mask, phi1)`` in the frame where the ground-state eigenvalue is one."""
    eig = case_spectrum(case)
    c = math.sqrt(eig.eigenvalues[0])
    ne = eig.scaled(c)
    if case.exact:
        mask = rasterize(case.spec(), case.local_h).rescaled(c)
        phi = ne.modes[0](mask.coords()[:, 0])
    else:
        mask = ne.mask
        phi = ne.vectors[:, 0]
    return c, ne, mask, phi


@lru_cache(maxsize=64)
def _cover(case, n):
    _, _, mask, _ = normalized_frame(case)
    return bad_cells(mask, n, T_NORM)


def _params(d):
    return decay_params(R_NORM, T_NORM, d)


# ---------------------------------------------------------------------------
# individual checks

def _na(check, case, why):
    return [BoundReport(check, math.nan, math.nan, verdict=NOT_APPLICABLE, case=case.name,
                        notes=[why])]


def run_thm212(case, eig):
    return check_thm212(eig, count=20, case=case.name)


def run_e4(case, eig):
    spec = case.spec()
    h = case.local_h if case.exact else case.h
    gamma = largest_inscribed_cube(spec, rasterize(spec, h))
    top = min(50, len(eig)) - 1
    if case.box is not None:
        counts = box_spectrum(case.box, eig.eigenvalues[top] * 1.5)
        lam1, lam_top = counts.eigenvalues[0], counts.eigenvalues[49]
    else:
        counts = eig
        lam1, lam_top = eig.eigenvalues[0], eig.eigenvalues[top]
        lam_top = min(lam_top, eig.complete_below * (1 - 1e-9))
    ts = np.linspace(lam1, lam_top, 20)
    out = []
    for t in ts:
        rep = check_e4(counts, gamma, float(t), dimension=eig.dimension, case=case.name)
        rep.inputs["counts"] = counts.source
        out.append(rep)
    return out


def run_remark213(case, eig):
    if eig.source != "exact1d":
        return _na("remark213", case, "needs closed-form interval spectra")
    return check_remark213(eig, case=case.name)


def run_lemma31(case, eig):
    _, ne, mask, _ = normalized_frame(case)
    p = _params(eig.dimension)
    n0 = math.ceil(p.n0)
    N = counting_function(ne, T_NORM)
    out = []
    for n in (n0, 2 * n0):
        cov = _cover(case, n)
        out.append(check_lemma31(cov, N, case=case.name))
        out.append(check_eq319(cov, N, case=case.name))
    return out


def _lemma32_one(case):
    _, _, mask, _ = normalized_frame(case)
    p = _params(mask.dimension)
    rep = check_lemma32(_cover(case, math.ceil(p.n0)), p, case=case.name)
    rep.inputs["delta_over_s"] = rep.inputs.get("delta_h", 2 * mask.h * p.s) / p.s
    return rep


def run_lemma32(case, eig):
    out = [_lemma32_one(case)]
    if out[0].verdict == VACUOUS and case.name == "dumbbell":
        comp = _lemma32_one(COMPANIONS["lemma32"])
        comp.notes.append("non-vacuous companion of the gallery dumbbell")
        out.append(comp)
    return out


def _decay_one(case):
    _, ne, mask, phi = normalized_frame(case)
    p = _params(mask.dimension)
    cov = _cover(case, DECAY_SCALE)
    inputs = {"n": DECAY_SCALE, "alpha": p.alpha, "r": p.r, "t": p.t}
    out = []
    prof = decay_profile(phi, cov, p)
    if prof.reliable:
        rep = lower("decay_mass", prof.rate, p.alpha, case=case.name, inputs=dict(inputs))
        rep.inputs["envelope_ratio"] = prof.envelope_ratio
    else:
        rep = BoundReport("decay_mass", math.nan, p.alpha, verdict=VACUOUS, case=case.name,
                          inputs=dict(inputs),
                          notes=["(1 - xi) Phi vanishes on all but a few unit cells; "
                                 "no decay profile to fit"])
    out.append(rep)
    if cov.in_G.sum() == 0:
        out.append(BoundReport("decay_resolvent", math.nan, p.alpha, verdict=VACUOUS,
                               case=case.name, inputs=dict(inputs), notes=["G_n is empty"]))
        return out
    G = mask.subset(cov.in_G)
    try:
        bn = resolvent_block_norms(G, R_NORM, p, sources=[0])
    except SingularityError as exc:
        out.append(BoundReport("decay_resolvent", math.nan, p.alpha, verdict="precondition-fail",
                               case=case.name, inputs=dict(inputs), notes=[str(exc)]))
        return out
    if bn.rate is None:
        out.append(BoundReport("decay_resolvent", math.nan, p.alpha, verdict=VACUOUS,
                               case=case.name, inputs=dict(inputs),
                               notes=["too few unit cells in G_n to fit a rate"]))
    else:
        rep = lower("decay_resolvent", bn.rate, p.alpha, case=case.name, inputs=dict(inputs))
        rep.inputs["lambda1_G"] = bn.lambda1_G
        rep.inputs["max_profile_ratio"] = float(bn.ratios().max())
        out.append(rep)
    return out


def run_decay(case, eig):
    out = _decay_one(case)
    if case.name == "dumbbell":
        comp = _decay_one(COMPANIONS["decay"])
        for r in comp:
            r.notes.append("elongated companion of the gallery dumbbell")
        out.extend(comp)
    return out


def run_lemma52(case, eig):
    out = []
    Ts = sorted({t / 6 for t in HEAT_TIMES} | {0.1})
    ks = [k for k in range(1, min(10, len(eig)) + 1)
          if 2 * eig.eigenvalues[k - 1] < eig.complete_below]
    if not ks:
        return _na("lemma52", case, "no k with N(2 lambda_k) inside the computed spectrum")
    for T in Ts:
        out.extend(check_lemma52(eig, T, ks=ks, case=case.name))
    return out


def run_e59(case, eig):
    reps = check_e59(heat_series(eig, HEAT_TIMES), case=case.name)
    return [r for r in reps if r.inputs["t"] in HEAT_TIMES]


def run_e510(case, eig):
    return [r for r in check_e510_ratio(heat_series(eig, HEAT_TIMES), case=case.name)
            if r.inputs["t"] in HEAT_TIMES]


def run_thm01(case, eig):
    out = []
    for k in range(1, min(10, len(eig)) + 1):
        if 2 * eig.eigenvalues[k - 1] >= eig.complete_below:
            break
        out.append(ratio_thm01(eig, k, theta=1.0, worst_case=True, case=case.name))
    return out


def run_prop22(case, eig):
    _, ne, _, _ = normalized_frame(case)
    p = _params(eig.dimension)
    N = counting_function(ne, T_NORM)
    n, path = prop22_n_choice(p, N)
    rhs = prop22_rhs(n, p.r, p.t, N, p)
    out = []
    for k in range(len(ne)):
        if ne.eigenvalues[k] > R_NORM * (1 + 1e-12):
            break
        lhs = float(ne.l1[k]) / float(ne.l2[k])
        out.append(BoundReport("prop22", lhs, rhs, constant_mode="unit-constant",
                               verdict=RATIO_ONLY, case=case.name,
                               inputs={"k": k + 1, "n": n, "n_choice": path, "N_t": N,
                                       "r": p.r, "t": p.t}))
    return out


def run_cor26_synthetic():
    eig = synthetic_spectrum([1.0, 2.0, 3.0], complete_below=4.0)
    reps = ratio_cor26(eig, 1.0, 4.0, 2.0, case="synthetic")
    for r in reps:
        r.notes.append("synthetic spectrum with essential-spectrum proxy 4")
    return reps


RUNNERS = {
    "thm212": run_thm212, "e4": run_e4, "remark213": run_remark213, "lemma31": run_lemma31,
    "lemma32": run_lemma32, "decay": run_decay, "lemma52": run_lemma52, "e59": run_e59,
    "e510": run_e510, "thm01": run_thm01, "prop22": run_prop22,
}


def _error_report(check, case, exc):
    kind = getattr(exc, "kind", type(exc).__name__)
    return BoundReport(check, math.nan, math.nan, verdict=PRECONDITION_FAIL, case=case,
                       notes=[f"{kind}: {exc}"])


def run_case(case, checks=CHECKS, eig=None):
    """All selected reports for one case.

    A supplied ``eig`` (e.g. loaded from disk) carries no eigenfunctions, so
    only the eigenvalue checks run; the rest are reported not-applicable.
    """
    loaded = eig is not None
    eig = case_spectrum(case) if eig is None else eig
    out = []
    for check in checks:
        if check == "cor26":
            continue
        if loaded and check not in EIGENVALUE_CHECKS:
            out.extend(_na(check, case, "needs eigenfunctions; not stored in eig files"))
            continue
        try:
            out.extend(RUNNERS[check](case, eig))
        except (DirichletError, ValueError, ArithmeticError) as exc:
            # a corrupted input breaks a check's hypotheses; report, never crash
            out.append(_error_report(check, case.name, exc))
    return out


def run_gallery(checks=CHECKS, cases=GALLERY):
    reports = []
    for case in cases:
        reports.extend(run_case(case, checks))
    if "cor26" in checks:
        reports.extend(run_cor26_synthetic())
    return reports


# ---------------------------------------------------------------------------
# golden envelopes

def _golden_path(name):
    return resources.files("dirichlet_l1") / "golden" / f"{name}.json"


def envelope_key(rep):
    keys = ("k", "t", "theta", "member")
    tail = ",".join(f"{k}={rep.inputs[k]:.12g}" if isinstance(rep.inputs[k], float)
                    else f"{k}={rep.inputs[k]}" for k in keys if k in rep.inputs)
    return f"{rep.case}|{rep.check}|{tail}"


def load_golden(name):
    path = _golden_path(name)
    if not path.is_file():
        return {}
    return jsonio.loads(path.read_text())["envelope"]


def write_golden(name, reports):
    env = {envelope_key(r): r.ratio for r in reports if r.verdict == RATIO_ONLY}
    path = _golden_path(name)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(jsonio.dumps({"name": name, "slack": ENVELOPE_SLACK,
                                  "envelope": dict(sorted(env.items()))}))
    return env


def compare_envelope(reports, golden):
    """Tag each ratio-only report as within/exceeded/new; returns the exceeded keys."""
    exceeded = []
    for r in reports:
        if r.verdict != RATIO_ONLY:
            continue
        key = envelope_key(r)
        if key not in golden:
            r.inputs["envelope"] = "new"
            continue
        ok = r.ratio <= ENVELOPE_SLACK * golden[key]
        r.inputs["envelope"] = "within" if ok else "exceeded"
        r.inputs["golden_ratio"] = golden[key]
        if not ok:
            exceeded.append(key)
    return exceeded


# ---------------------------------------------------------------------------
# sweeps

FAMILIES = ("dumbbell", "disjoint_balls")
SWEEP_H = 1 / 64


@lru_cache(maxsize=8)
def single_disc_l1_squared(h):
    eig = solve_domain(resolve_domain("unit_disc"), h, count=1)
    return float(eig.l1[0]) ** 2


def sweep(family, ms=(2,), epss=(0.4, 0.2, 0.1), h=SWEEP_H, theta=1.0):
    """Rows for a preset family; each row carries the ratio report for ``k = 1``."""
    if family not in FAMILIES:
        raise UsageError(f"unknown family '{family}'", known=list(FAMILIES))
    members = []
    if family == "dumbbell":
        members = [(f"dumbbell({m},{e:g})", {"m": m, "eps": e}) for m in ms for e in epss]
    else:
        members = [(f"disjoint_balls({m})", {"m": m}) for m in ms]
    disc = single_disc_l1_squared(h)
    rows, reports = [], []
    for text, params in members:
        case = Case(text, text, h=h, count=max(8, 2 * params["m"] + 4))
        eig = case_spectrum(case)
        N = counting_function(eig, 2 * eig.eigenvalues[0])
        rep = ratio_thm01(eig, 1, theta=theta, worst_case=True, case=family)
        rep.inputs["member"] = text
        l1sq = rep.lhs  # worst case over the ground-state eigenspace
        rows.append({"member": text, **params, "h": h, "lambda1": float(eig.eigenvalues[0]),
                     "N_2lambda1": N, "l1_squared": l1sq,
                     "l1_squared_over_disc": l1sq / disc, "ratio_thm01": rep.ratio})
        reports.append(rep)
    return rows, reports
