"""Mollifier, IMS partition, bad cells and exponential-decay measurements.

All routines here work in the normalized frame where the ground-state
eigenvalue equals one: callers dilate the domain by ``sqrt(lambda_1)``
(see :func:`normalize`) before building covers, so that thresholds
``r < t`` and the decay rate keep their meaning for the class of domains
with ``lambda_1 >= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, signal
from scipy.sparse import identity
from scipy.sparse.linalg import splu

from .errors import PreconditionError, SingularityError, SolverError
from .geometry import CubeLattice
from .reports import VACUOUS, BoundReport, lower, upper
from .spectral import assemble_laplacian, lowest_eigenpairs

LOW_CONFIDENCE_NODES = 10
MASS_FLOOR = 1e-14
DELTA_H_FACTOR = 2.0


# ---------------------------------------------------------------------------
# mollifier

def _bump_profile(s):
    """exp(-1/(1 - 4 s^2)) for 0 <= s < 1/2, zero beyond."""
    s = np.asarray(s, dtype=float)
    q = 1.0 - 4.0 * s * s
    out = np.zeros_like(s)
    ok = q > 0
    out[ok] = np.exp(-1.0 / q[ok])
    return out


def _bump_laplacian(s, d):
    """Radial Laplacian f'' + (d-1)/s f' of the unnormalized bump."""
    s = np.asarray(s, dtype=float)
    q = 1.0 - 4.0 * s * s
    out = np.zeros_like(s)
    ok = q > 0
    f = np.exp(-1.0 / q[ok])
    qq, ss = q[ok], s[ok]
    fpp = f * (-8.0 / qq ** 2 + 64.0 * ss ** 2 / qq ** 4 - 128.0 * ss ** 2 / qq ** 3)
    out[ok] = fpp - 8.0 * (d - 1) * f / qq ** 2
    return out


def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class Mollifier:
    dimension: int
    resolution: int
    radii: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    normalization: float
    laplacian_l1: float

    @property
    def m_d(self):
        return max(1.0, self.laplacian_l1)

    def __call__(self, x):
        x = np.atleast_2d(x)
        return _bump_profile(np.linalg.norm(x, axis=1)) / self.normalization

    def mass(self):
        w = _radial_weight(self.radii, self.dimension) * np.ones_like(self.radii)
        return float(np.trapezoid(self.profile * w, self.radii))

    def stencil(self, h):
        """Kernel sampled at spacing ``h``, normalized to unit discrete mass."""
        m = int(math.ceil(0.5 / h))
        ax = h * np.arange(-m, m + 1)
        grids = np.meshgrid(*([ax] * self.dimension), indexing="ij")
        r = np.sqrt(sum(g ** 2 for g in grids))
        k = _bump_profile(r)
        return k / k.sum()


def _radial_weight(s, d):
    return 2.0 if d == 1 else _sphere_area(d) * s ** (d - 1)


@lru_cache(maxsize=None)
def build_mollifier(resolution=1024, dimension=1):
    """Radial bump ``c exp(-1/(1-|2x|^2))`` on ``B(0,1/2)`` with unit mass.

    ``m_d = max(1, ||Delta rho||_1)`` is integrated in radial coordinates by
    adaptive quadrature, split at the sign changes of the Laplacian so that
    the kinks of ``|Delta rho|`` sit on panel ends. ``resolution`` only sets
    the sampled profile kept for plotting and mass checks.
    """
    if resolution < 64:
        raise PreconditionError("mollifier resolution must be at least 64")
    d = dimension
    c = integrate.quad(lambda r: _bump_profile(r) * _radial_weight(r, d), 0.0, 0.5,
                       epsabs=1e-15, epsrel=1e-13)[0]
    lap = lambda r: float(_bump_laplacian(np.array([r]), d)[0])
    grid = np.linspace(1e-6, 0.5 - 1e-6, 4001)
    vals = _bump_laplacian(grid, d)
    cuts = [optimize.brentq(lap, grid[i], grid[i + 1], xtol=1e-15)
            for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]]
    knots = [0.0, *cuts, 0.5]
    lap_l1 = sum(integrate.quad(lambda r: abs(lap(r)) * _radial_weight(r, d), a, b,
                                epsabs=1e-14, epsrel=1e-12, limit=200)[0]
                 for a, b in zip(knots, knots[1:])) / c
    s = np.linspace(0.0, 0.5, resolution // 2 + 1)
    return Mollifier(d, resolution, s, _bump_profile(s) / c, c, lap_l1)


# ---------------------------------------------------------------------------
# IMS partition

_PSI_SCALE = math.exp(4.0 / 3.0)  # makes psi >= 1 on [-1/2, 1/2]


def _psi(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    ok = np.abs(u) < 1
    out[ok] = _PSI_SCALE * np.exp(-1.0 / (1.0 - u[ok] ** 2))
    return out


def _dpsi(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    ok = np.abs(u) < 1
    q = 1.0 - u[ok] ** 2
    out[ok] = _PSI_SCALE * np.exp(-1.0 / q) * (-2.0 * u[ok] / q ** 2)
    return out


def ims_1d(u):
    """One-dimensional factor ``Psi_0(u) = psi(u) / sqrt(sum_k psi(u-k)^2)`` and its derivative."""
    u = np.asarray(u, dtype=float)
    f = u - np.floor(u)
    a, b = _psi(f), _psi(f - 1.0)
    da, db = _dpsi(f), _dpsi(f - 1.0)
    w = a * a + b * b
    dw = 2 * a * da + 2 * b * db
    p, dp = _psi(u), _dpsi(u)
    val = p / np.sqrt(w)
    der = dp / np.sqrt(w) - 0.5 * p * dw / w ** 1.5
    return val, der


@lru_cache(maxsize=None)
def ims_c0(dimension, resolution=1024):
    """``||grad Psi_0||_inf`` sampled on a ``resolution``-per-axis grid over ``(-1,1)^d``."""
    u = np.linspace(-1.0, 1.0, resolution + 1)
    v, dv = ims_1d(u)
    if dimension == 1:
        return float(np.abs(dv).max())
    g2 = np.zeros((len(u), len(u)))
    g2 += np.outer(dv ** 2, v ** 2)
    g2 += np.outer(v ** 2, dv ** 2)
    return float(np.sqrt(g2.max()))


@dataclass
class IMSPartition:
    """Scaled partition ``Psi_{n,j}(x) = Psi_0(x/n - j)`` evaluated on a mask."""

    n: float
    mask: object
    values: dict = field(repr=False)
    c0: float

    def sum_of_squares(self):
        total = np.zeros(self.mask.size)
        for v in self.values.values():
            total += v ** 2
        return total

    def gradient(self, j):
        return ims_gradient(self.n, j, self.mask.coords())


def ims_value(n, j, pts):
    out = np.ones(len(pts))
    for i in range(pts.shape[1]):
        v, _ = ims_1d(pts[:, i] / n - j[i])
        out *= v
    return out


def ims_gradient(n, j, pts):
    d = pts.shape[1]
    vals, ders = zip(*(ims_1d(pts[:, i] / n - j[i]) for i in range(d)))
    grad = np.empty_like(pts)
    for i in range(d):
        g = ders[i] / n
        for k in range(d):
            if k != i:
                g = g * vals[k]
        grad[:, i] = g
    return grad


def build_ims_partition(n, mask):
    if n < 1:
        raise PreconditionError(f"IMS scale must satisfy n >= 1, got {n}")
    pts = mask.coords()
    lat = CubeLattice(n, mask.dimension)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    values = {}
    for j in lat.indices_meeting(lo, hi):
        v = ims_value(n, j, pts)
        if np.any(v != 0):
            values[j] = v
    return IMSPartition(n, mask, values, ims_c0(mask.dimension))


def sampled_gradient_max(mask, n, j):
    """Largest finite-difference slope of ``Psi_{n,j}`` over neighbouring mask nodes."""
    vals = ims_value(n, j, mask.coords())
    lookup = np.full(mask.shape, -1, dtype=np.int64)
    lookup[tuple(mask.indices.T)] = np.arange(mask.size)
    sq = np.zeros(mask.size)
    full = np.ones(mask.size, dtype=bool)
    for axis in range(mask.dimension):
        lo_nb = mask.indices.copy()
        hi_nb = mask.indices.copy()
        lo_nb[:, axis] -= 1
        hi_nb[:, axis] += 1
        ok = (lo_nb[:, axis] >= 0) & (hi_nb[:, axis] < mask.shape[axis])
        a = np.full(mask.size, -1)
        b = np.full(mask.size, -1)
        a[ok] = lookup[tuple(lo_nb[ok].T)]
        b[ok] = lookup[tuple(hi_nb[ok].T)]
        good = (a >= 0) & (b >= 0)
        full &= good
        diff = np.zeros(mask.size)
        diff[good] = (vals[b[good]] - vals[a[good]]) / (2 * mask.h)
        sq += diff ** 2
    return float(np.sqrt(sq[full].max()))


# ---------------------------------------------------------------------------
# decay parameters

@dataclass(frozen=True)
class DecayParams:
    """Thresholds ``1 <= r < t`` with derived ``beta``, ``alpha``, ``s`` and ``n0``."""

    r: float
    t: float
    dimension: int
    m_d: float
    c0: float

    def __post_init__(self):
        if not 1.0 <= self.r < self.t:
            raise PreconditionError(f"need 1 <= r < t, got r={self.r}, t={self.t}")

    @property
    def beta(self):
        return (self.t - self.r) / 2

    @property
    def alpha(self):
        return min(self.beta, 1.0) / (16.0 * self.m_d * self.r)

    @property
    def s(self):
        return (self.r + self.t) / 2

    @property
    def n0(self):
        return 2 ** (self.dimension / 2) * self.c0 / math.sqrt(self.beta)

    def to_dict(self):
        return {"r": self.r, "t": self.t, "beta": self.beta, "alpha": self.alpha, "s": self.s,
                "n0": self.n0, "m_d": self.m_d, "c0": self.c0, "d": self.dimension}


def decay_params(r, t, dimension):
    m_d = build_mollifier(1024, dimension).m_d
    return DecayParams(r, t, dimension, m_d, ims_c0(dimension))


def normalize(eig):
    """Dilate so that the ground-state eigenvalue becomes one; returns (scale, eig)."""
    c = math.sqrt(eig.eigenvalues[0])
    return c, eig.scaled(c)


# ---------------------------------------------------------------------------
# bad cells

@dataclass
class CubeCover:
    n: float
    t: float
    mask: object = field(repr=False)
    bad: list
    cell_lambda: dict = field(repr=False)
    cell_nodes: dict = field(repr=False)
    in_F: np.ndarray = field(repr=False)
    in_Ft: np.ndarray = field(repr=False)
    in_Ftt: np.ndarray = field(repr=False)
    in_G: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)

    @property
    def low_confidence(self):
        return sorted(j for j, c in self.cell_nodes.items() if c < LOW_CONFIDENCE_NODES)

    def to_dict(self):
        return {
            "n": self.n,
            "t": self.t,
            "h": self.mask.h,
            "bad_cells": [list(j) for j in self.bad],
            "cell_lambda1": [{"cell": list(j), "lambda1": float(self.cell_lambda[j]),
                              "nodes": int(self.cell_nodes[j])} for j in sorted(self.cell_lambda)],
            "low_confidence": [list(j) for j in self.low_confidence],
            "n_nodes": {"F": int(self.in_F.sum()), "F_tilde": int(self.in_Ft.sum()),
                        "F_tilde2": int(self.in_Ftt.sum()), "G": int(self.in_G.sum())},
            "Z": self.Z.tolist(),
            "Y": self.Y.tolist(),
        }


def _in_cubes(lat, cells, pts, factor, closed=False, tol=0.0):
    out = np.zeros(len(pts), dtype=bool)
    for j in cells:
        dist = np.abs(pts - lat.center(j)).max(axis=1)
        out |= (dist <= factor * lat.n + tol) if closed else (dist < factor * lat.n - tol)
    return out


def _boundary_lattice_points(lat, cells, factor):
    """Integer points on the boundary of the union of the open enlarged cubes."""
    if not cells:
        return np.zeros((0, lat.dimension), dtype=int)
    centers = np.array([lat.center(j) for j in cells])
    lo = np.floor(centers.min(axis=0) - factor * lat.n).astype(int)
    hi = np.ceil(centers.max(axis=0) + factor * lat.n).astype(int)
    axes = [np.arange(lo[i], hi[i] + 1) for i in range(lat.dimension)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1).astype(float)
    eps = 1e-9 * max(1.0, lat.n)
    closed = _in_cubes(lat, cells, pts, factor, closed=True, tol=eps)
    opened = _in_cubes(lat, cells, pts, factor, tol=eps)
    return pts[closed & ~opened].astype(int)


def smoothed_indicator(mask, lat, cells, factor=2, dimension=None):
    """``rho * 1_{F~}`` evaluated on the mask nodes by discrete convolution."""
    d = mask.dimension
    if not cells:
        return np.zeros(mask.size)
    h = mask.h
    ker = build_mollifier(1024, d).stencil(h)
    m = ker.shape[0] // 2
    shape = tuple(s + 2 * m for s in mask.shape)
    axes = [h * (mask.offset[i] - m + np.arange(shape[i])) for i in range(d)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    ind = _in_cubes(lat, cells, pts, factor).reshape(shape).astype(float)
    conv = signal.fftconvolve(ind, ker, mode="same")
    conv[conv < 1e-12] = 0.0
    conv[conv > 1 - 1e-12] = 1.0
    idx = mask.indices + m
    return conv[tuple(idx.T)]


def bad_cells(mask, n, t, spec=None):
    """Cells ``j`` with ``lambda_1(Omega cap Q_{n,j}) < t`` and the derived sets.

    The mask is expected in the normalized frame. Each nonempty cell
    intersection is solved as its own Dirichlet problem on the restricted
    mask; empty intersections are skipped.
    """
    if not t > 0:
        raise PreconditionError("threshold t must be positive")
    d = mask.dimension
    pts = mask.coords()
    lat = CubeLattice(n, d)
    tol = 1e-12 * mask.h
    cell_lambda, cell_nodes, bad = {}, {}, []
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    for j in lat.indices_meeting(lo, hi):
        inside = np.all(np.abs(pts - lat.center(j)) < n - tol, axis=1)
        if not inside.any():
            continue
        sub = mask.subset(inside)
        try:
            lam = lowest_eigenpairs(assemble_laplacian(sub), count=1, keep_vectors=False).eigenvalues[0]
        except SolverError as exc:
            raise SolverError(f"cell {j}: {exc}", cell=list(j), **exc.details) from None
        cell_lambda[j] = float(lam)
        cell_nodes[j] = int(inside.sum())
        if lam < t:
            bad.append(j)
    bad.sort()
    in_F = _in_cubes(lat, bad, pts, 1)
    in_Ft = _in_cubes(lat, bad, pts, 2)
    in_Ftt = _in_cubes(lat, bad, pts, 3)
    in_G = ~_in_cubes(lat, bad, pts, 1, closed=True, tol=tol)
    Z = _boundary_lattice_points(lat, bad, 2)
    outside = pts[~in_Ftt]
    Y = np.unique(np.ceil(outside - 0.5).astype(int), axis=0) if len(outside) else np.zeros((0, d), int)
    xi = smoothed_indicator(mask, lat, bad)
    return CubeCover(n, t, mask, bad, cell_lambda, cell_nodes, in_F, in_Ft, in_Ftt, in_G,
                     Z, Y, xi)


def check_lemma31(cover, N_t, case=""):
    d = cover.mask.dimension
    rep = upper("lemma31", len(cover.bad), 3 ** d * N_t, case=case,
                inputs={"n": cover.n, "t": cover.t, "N_t": N_t, "d": d, "h": cover.mask.h})
    if cover.low_confidence:
        rep.notes.append(f"{len(cover.low_confidence)} cells resolved by fewer than "
                         f"{LOW_CONFIDENCE_NODES} nodes")
    return rep


def check_eq319(cover, N_t, case=""):
    d = cover.mask.dimension
    n = cover.n
    rhs = 2 ** (3 * d - 2) * 3 ** d * n ** (d - 1) * N_t
    return upper("eq319", len(cover.Z), rhs, case=case,
                 inputs={"n": n, "t": cover.t, "N_t": N_t, "d": d})


def delta_h(mask, s):
    """Documented discretization allowance for the spectral lower bound on ``G_n``."""
    return DELTA_H_FACTOR * mask.h * s


def check_lemma32(cover, params, case=""):
    mask = cover.mask
    s = params.s
    inputs = {"n": cover.n, "n0": params.n0, "r": params.r, "t": params.t, "s": s, "h": mask.h}
    if cover.n < params.n0:
        raise PreconditionError(f"good-region check needs n >= n0 = {params.n0:.4g}, got n = {cover.n}")
    if not cover.in_G.any():
        return BoundReport("lemma32", math.inf, s, verdict=VACUOUS, case=case, inputs=inputs,
                           notes=["G_n is empty"])
    sub = mask.subset(cover.in_G)
    lam = lowest_eigenpairs(assemble_laplacian(sub), count=1, keep_vectors=False).eigenvalues[0]
    dh = delta_h(mask, s)
    inputs["delta_h"] = dh
    inputs["G_nodes"] = int(sub.size)
    return lower("lemma32", lam, s - dh, case=case, inputs=inputs)


# ---------------------------------------------------------------------------
# decay measurements

def unit_cells(pts):
    """Index ``l`` of the half-open unit cell ``(-1/2, 1/2]^d + l`` holding each point."""
    return np.ceil(pts - 0.5).astype(int)


def _fit_rate(dist, values):
    keep = values > MASS_FLOOR
    if keep.sum() < 4 or np.ptp(dist[keep]) == 0:
        return None
    slope, _ = np.polyfit(dist[keep], np.log(values[keep]), 1)
    return float(-slope)


@dataclass
class DecayProfile:
    cells: np.ndarray
    distances: np.ndarray
    masses: np.ndarray
    rate: float | None
    alpha: float
    envelope_ratio: float | None

    @property
    def reliable(self):
        return self.rate is not None

    def to_rows(self):
        return [(tuple(int(v) for v in c), float(dd), float(m))
                for c, dd, m in zip(self.cells, self.distances, self.masses)]

    def to_csv(self):
        lines = ["cell_index,distance_to_Zn,l1_mass"]
        for c, dd, m in self.to_rows():
            lines.append(f"{' '.join(map(str, c))},{dd:.17g},{m:.17g}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {"alpha": self.alpha, "rate": self.rate, "reliable": self.reliable,
                "envelope_ratio": self.envelope_ratio,
                "rows": [{"cell": list(c), "distance": dd, "l1_mass": m} for c, dd, m in self.to_rows()]}


def decay_profile(phi, cover, params):
    """Per-unit-cell L1 masses of ``(1 - xi_n) Phi`` against distance to ``Z_n``."""
    mask = cover.mask
    w = mask.cell_volume
    vals = np.abs((1.0 - cover.xi) * phi) * w
    cells = unit_cells(mask.coords())
    uniq, inv = np.unique(cells, axis=0, return_inverse=True)
    masses = np.bincount(inv.ravel(), weights=vals, minlength=len(uniq))
    if len(cover.Z):
        diff = uniq[:, None, :] - cover.Z[None, :, :]
        dists = np.linalg.norm(diff, axis=2)
        dist = dists.min(axis=1)
        env = (math.sqrt(params.r) / (params.t - params.r)) * np.exp(-params.alpha * dists).sum(axis=1)
        envelope_ratio = float((masses / env).max())
        rate = _fit_rate(dist, masses)
    else:
        dist = np.full(len(uniq), math.inf)
        envelope_ratio, rate = None, None
    order = np.lexsort(tuple(uniq.T[::-1]))
    return DecayProfile(uniq[order], dist[order], masses[order], rate, params.alpha, envelope_ratio)


@dataclass
class BlockNorms:
    cells: np.ndarray
    norms: np.ndarray
    distances: np.ndarray
    lam: float
    lambda1_G: float
    alpha: float
    gap: float
    rate: float | None

    def ratios(self):
        """Block norm over the profile ``exp(-alpha |k - l|) / (s - r)``."""
        return self.norms * self.gap / np.exp(-self.alpha * self.distances)

    def to_dict(self):
        return {"cells": self.cells.tolist(), "norms": self.norms.tolist(),
                "distances": self.distances.tolist(), "lambda": self.lam,
                "lambda1_G": self.lambda1_G, "alpha": self.alpha, "rate": self.rate}


def resolvent_block_norms(mask_G, lam, params, sources=None, iterations=8):
    """Estimate ``||chi_k (H_G - lam)^{-1} chi_l||`` over unit cells by power iteration.

    The same sparse LU factorization serves every solve. Rows are target
    cells ``k``, columns source cells ``l`` (restricted to ``sources`` if given).
    """
    op = assemble_laplacian(mask_G)
    lam1 = lowest_eigenpairs(op, count=1, keep_vectors=False).eigenvalues[0]
    if lam >= lam1 * (1 - 1e-8):
        raise SingularityError(f"spectral point {lam:.6g} is not below lambda_1(G) = {lam1:.6g}",
                               lam=lam, lambda1=lam1)
    if not lam <= params.r < params.s:
        raise PreconditionError("need lam <= r < s")
    n = op.n_dof
    lu = splu((op.matrix - lam * identity(n, format="csr")).tocsc())
    cells = unit_cells(mask_G.coords())
    uniq, inv = np.unique(cells, axis=0, return_inverse=True)
    inv = inv.ravel()
    members = [np.nonzero(inv == c)[0] for c in range(len(uniq))]
    src = range(len(uniq)) if sources is None else sources
    src = list(src)
    norms = np.zeros((len(uniq), len(src)))
    for col, l in enumerate(src):
        Pl = members[l]
        for k in range(len(uniq)):
            Pk = members[k]
            v = np.ones(len(Pl)) + 0.1 * np.cos(np.arange(len(Pl)))
            v /= np.linalg.norm(v)
            est = 0.0
            for _ in range(iterations):
                full = np.zeros(n)
                full[Pl] = v
                u = lu.solve(full)[Pk]
                est = np.linalg.norm(u)
                if est == 0:
                    break
                back = np.zeros(n)
                back[Pk] = u
                v = lu.solve(back)[Pl]
                nv = np.linalg.norm(v)
                if nv == 0:
                    break
                v /= nv
            norms[k, col] = est
    dist = np.linalg.norm(uniq[:, None, :] - uniq[src][None, :, :], axis=2)
    rate = _fit_rate(dist.ravel(), norms.ravel())
    return BlockNorms(uniq, norms, dist, lam, float(lam1), params.alpha, params.s - params.r, rate)


def ims_energy_defect(mask, partition, phi):
    """IMS localization residual for a grid function.

    Returns ``<H phi, phi> - (sum_j <H Psi_j phi, Psi_j phi> - int sum_j |grad Psi_j|^2 phi^2)``,
    which vanishes in the continuum and is small on the grid.
    """
    A = assemble_laplacian(mask).matrix
    w = mask.cell_volume
    lhs = w * phi @ (A @ phi)
    pts = mask.coords()
    loc = 0.0
    grad_sq = np.zeros(mask.size)
    for j, v in partition.values.items():
        u = v * phi
        loc += w * u @ (A @ u)
        g = ims_gradient(partition.n, j, pts)
        grad_sq += (g ** 2).sum(axis=1)
    corr = w * np.sum(grad_sq * phi ** 2)
    return float(lhs - (loc - corr)), float(lhs)
