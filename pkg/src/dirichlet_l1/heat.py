"""Heat trace, heat content and heat kernel values, with the trace/content checks.

Spectral sums are truncated at the computed eigenvalues. Their tails are
bounded using the counting estimate ``N_lam <= Z(T) e^{T lam}``: for
``k > K`` it gives ``lam_k >= T^{-1} log(k / Z(T))``, and splitting
``e^{-t lam} = e^{-t lam / 2} e^{-t lam / 2}`` with ``T = t/4`` yields

    sum_{k > K} e^{-t lam_k} <= e^{-t lam_* / 2} Z(t/4)^2 / K,

where ``lam_*`` is the completeness level of the computed spectrum and
``Z(t/4)`` is the computed partial sum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import identity
from scipy.sparse.linalg import splu

from . import jsonio
from .errors import PreconditionError, SolverError, ValidationError
from .reports import ratio_only, upper
from .spectral import assemble_laplacian, counting_function

TRUNCATION_WARN = 1e-2
RANNACHER_HALF_STEPS = 4
STEP_FRACTION = 8


class TruncationWarning(UserWarning):
    pass


def _check_time(t):
    if not t > 0:
        raise PreconditionError(f"time must be positive, got {t}")


def tail_bound(eig, t):
    """Bound on the omitted part of ``sum_k e^{-t lam_k}``."""
    _check_time(t)
    K = len(eig)
    if K == 0:
        return math.inf
    if not math.isfinite(eig.complete_below):
        return 0.0
    z4 = float(np.exp(-(t / 4) * eig.eigenvalues).sum())
    return math.exp(-t * eig.complete_below / 2) * z4 ** 2 / K


def _warn_if_loose(bound, partial, what):
    if bound > TRUNCATION_WARN * partial:
        warnings.warn(f"{what}: truncation bound {bound:.3g} exceeds 1% of the partial sum "
                      f"{partial:.3g}; spectrum incomplete for this time", TruncationWarning,
                      stacklevel=3)
        return True
    return False


def heat_trace(eig, t):
    """Partial sum ``Z(t) = sum e^{-t lam_k}`` and its tail bound."""
    _check_time(t)
    z = float(np.exp(-t * eig.eigenvalues).sum())
    b = tail_bound(eig, t)
    _warn_if_loose(b, z, f"Z({t:g})")
    return z, b


def _volume(eig):
    if eig.source == "exact1d" and eig.modes is not None:
        return float(sum({(m.piece): m.length for m in eig.modes}.values()))
    if eig.mask is not None:
        return eig.mask.size * eig.mask.cell_volume
    return math.nan


def heat_content_spectral(eig, t):
    """``Q(t) = sum e^{-t lam_k} (int Phi_k)^2`` and its tail bound.

    Each omitted term is at most ``|Omega| e^{-t lam_k}`` by Cauchy-Schwarz.
    """
    _check_time(t)
    if np.any(~np.isfinite(eig.integrals)):
        raise ValidationError("eigenfunction integrals are missing")
    q = float((np.exp(-t * eig.eigenvalues) * eig.integrals ** 2).sum())
    tail, vol = tail_bound(eig, t), _volume(eig)
    # without the domain volume (e.g. data loaded from disk) the tail is unknown
    b = tail * vol if math.isfinite(vol) else (0.0 if tail == 0 else math.inf)
    _warn_if_loose(b, q, f"Q({t:g})")
    return q, b


def heat_content_timestep(mask, t, steps=None):
    """Total heat ``h^d sum u(t)`` from ``u(0) = 1`` with Dirichlet data.

    Crank-Nicolson with uniform steps; the first step is replaced by
    backward-Euler quarter steps, which damps the stiff modes excited by the
    mismatch between the initial datum and the boundary condition. The
    default time step is at most ``h / STEP_FRACTION``.
    """
    _check_time(t)
    if steps is None:
        steps = max(16, math.ceil(STEP_FRACTION * t / mask.h))
    if steps < 16:
        raise PreconditionError("need at least 16 time steps")
    A = assemble_laplacian(mask).matrix
    n = A.shape[0]
    dt = t / steps
    eye = identity(n, format="csc")
    try:
        half = splu((eye + (dt / 2) * A).tocsc())
        quarter = splu((eye + (dt / RANNACHER_HALF_STEPS) * A).tocsc())
    except RuntimeError as exc:
        raise SolverError(f"time-step factorization failed: {exc}") from None
    explicit = (eye - (dt / 2) * A).tocsr()
    u = np.ones(n)
    for _ in range(RANNACHER_HALF_STEPS):
        u = quarter.solve(u)
    for _ in range(steps - 1):
        u = half.solve(explicit @ u)
    if not np.all(np.isfinite(u)):
        raise SolverError("time stepping produced non-finite values")
    return float(mask.cell_volume * u.sum())


def heat_kernel_value(eig, x, y, t):
    """Truncated ``p(x, y; t) = sum e^{-t lam_k} Phi_k(x) Phi_k(y)`` and its tail bound.

    ``x`` and ``y`` are node indices on grid data or coordinates in exact
    mode. The omitted part is bounded by ``e^{-t lam_*/2} (2 pi t)^{-d/2}``
    using Cauchy-Schwarz and domination by the free kernel at time ``t/2``.
    """
    _check_time(t)
    w = np.exp(-t * eig.eigenvalues)
    if eig.source == "exact1d":
        fx = np.array([m(np.asarray([x], dtype=float))[0] for m in eig.modes])
        fy = np.array([m(np.asarray([y], dtype=float))[0] for m in eig.modes])
    else:
        if eig.vectors is None:
            raise ValidationError("heat kernel values need stored eigenfunctions")
        fx, fy = eig.vectors[x], eig.vectors[y]
    # symmetric product so that p(x,y) and p(y,x) agree bit for bit
    p = float(np.sum(w * (fx * fy + fy * fx)) / 2)
    lam_star = eig.complete_below
    b = 0.0 if not math.isfinite(lam_star) else \
        math.exp(-t * lam_star / 2) * (2 * math.pi * t) ** (-eig.dimension / 2)
    _warn_if_loose(b, abs(p) if p else 1.0, f"p(x,y;{t:g})")
    return p, b


def poly_exp_bound(x, t, a):
    """Both sides of ``e^{-t x} x^a <= (a/e)^a t^{-a}`` (for ``x >= 0``, ``a > 0``)."""
    lhs = np.exp(-t * x) * np.power(x, a)
    rhs = (a / math.e) ** a * np.power(t, -a)
    return lhs, rhs


# ---------------------------------------------------------------------------
# series

@dataclass
class HeatSeries:
    times: np.ndarray
    Z: np.ndarray
    Q_spectral: np.ndarray
    Q_timestep: np.ndarray | None
    K: int
    Z_bound: np.ndarray
    Q_bound: np.ndarray
    dimension: int
    lambda1: float
    source_hash: str = ""
    label: str = ""
    incomplete: list = field(default_factory=list)

    def index(self, t):
        hit = np.nonzero(np.isclose(self.times, t, rtol=1e-12, atol=0))[0]
        return int(hit[0]) if len(hit) else None

    def rows(self):
        qt = self.Q_timestep if self.Q_timestep is not None else [None] * len(self.times)
        return list(zip(self.times, self.Z, self.Q_spectral, qt, self.Z_bound))

    def to_csv(self):
        out = ["t,Z,Q_spectral,Q_timestep,trunc_bound"]
        for t, z, q, qt, b in self.rows():
            qs = "" if qt is None else format(qt, ".17g")
            out.append(f"{t:.17g},{z:.17g},{q:.17g},{qs},{b:.17g}")
        return "\n".join(out) + "\n"

    def to_dict(self):
        return {
            "label": self.label,
            "source_hash": self.source_hash,
            "dimension": self.dimension,
            "K": self.K,
            "lambda1": self.lambda1,
            "times": self.times,
            "Z": self.Z,
            "Q_spectral": self.Q_spectral,
            "Q_timestep": self.Q_timestep,
            "trunc_bound_Z": self.Z_bound,
            "trunc_bound_Q": self.Q_bound,
            "incomplete_times": self.incomplete,
        }


def companion_times(times):
    """Times plus the ``t/2`` and ``t/6`` values the trace/content checks read."""
    out = set()
    for t in times:
        out.update((float(t), float(t) / 2, float(t) / 6))
    return sorted(out)


def heat_series(eig, times, mask=None, steps=None, companions=True):
    times = companion_times(times) if companions else sorted(float(t) for t in times)
    if not times:
        raise PreconditionError("time grid is empty")
    Z, Zb, Q, Qb, incomplete = [], [], [], [], []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        for t in times:
            z, zb = heat_trace(eig, t)
            q, qb = heat_content_spectral(eig, t)
            Z.append(z), Zb.append(zb), Q.append(q), Qb.append(qb)
            if zb > TRUNCATION_WARN * z or qb > TRUNCATION_WARN * q:
                incomplete.append(t)
    del caught
    qt = None
    if mask is not None:
        qt = np.array([heat_content_timestep(mask, t, steps) for t in times])
    return HeatSeries(np.array(times), np.array(Z), np.array(Q), qt, len(eig), np.array(Zb),
                      np.array(Qb), eig.dimension, float(eig.eigenvalues[0]),
                      jsonio.digest(eig.to_dict()), eig.label, incomplete)


# ---------------------------------------------------------------------------
# checks

def check_e59(series, case=""):
    """``Z(t) <= (2 pi t)^{-d/2} Q(t/2)`` at every time whose half is in the series.

    The trace side includes its truncation bound and the content side is a
    partial sum, so a pass does not depend on the omitted modes.
    """
    d = series.dimension
    out = []
    for i, t in enumerate(series.times):
        j = series.index(t / 2)
        if j is None:
            continue
        rhs = (2 * math.pi * t) ** (-d / 2) * series.Q_spectral[j]
        rep = upper("e59", series.Z[i] + series.Z_bound[i], rhs, case=case,
                    inputs={"t": float(t), "d": d, "trunc_bound": float(series.Z_bound[i])})
        if t in series.incomplete or t / 2 in series.incomplete:
            rep.notes.append("truncation bound above 1% of the partial sums")
        out.append(rep)
    return out


def e510_constant(d):
    return max((6 * d * d / math.e) ** d, ((8 * d - 6) / math.e) ** (4 * d - 3))


def check_e510_ratio(series, lambda1=None, case=""):
    """Ratio of ``Q(t)`` to the trace-side bound with the unknown constant set to one."""
    d = series.dimension
    lam = series.lambda1 if lambda1 is None else lambda1
    if not lam > 0:
        raise PreconditionError(f"lowest eigenvalue must be positive, got {lam}")
    c = e510_constant(d)
    out = []
    for i, t in enumerate(series.times):
        j2, j6 = series.index(t / 2), series.index(t / 6)
        if j2 is None or j6 is None:
            continue
        rhs = c * (lam ** (-1.5 * d) * t ** (-d) * series.Z[j6] ** 3
                   + lam ** ((6 - 9 * d) / 2) * t ** (3 - 4 * d) * series.Z[j2])
        out.append(ratio_only("e510", series.Q_spectral[i], rhs, case=case,
                              inputs={"t": float(t), "d": d, "lambda1": lam, "constant": c}))
    return out


def check_lemma52(eig, T, ks=None, case=""):
    """``N_{2 lam_k} <= Z(T) e^{2 T lam_k}`` for each ``k`` whose count is known.

    The computed partial sum underestimates ``Z(T)``, so a pass is conservative.
    """
    _check_time(T)
    z = float(np.exp(-T * eig.eigenvalues).sum())
    if ks is None:
        ks = [k for k in range(1, len(eig) + 1) if 2 * eig.eigenvalues[k - 1] < eig.complete_below]
    out = []
    for k in ks:
        lam = float(eig.eigenvalues[k - 1])
        N = counting_function(eig, 2 * lam)
        out.append(upper("lemma52", N, z * math.exp(2 * T * lam), case=case,
                         inputs={"k": k, "T": T, "lambda_k": lam, "Z_T": z}))
    return out
