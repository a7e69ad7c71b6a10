"""Discrete Dirichlet Laplacian, eigenpairs, exact 1D spectra, counting.

Grid functions live on the interior nodes of a :class:`GridMask`; all
norms and inner products carry the quadrature weight ``h**d`` so that a
discrete eigenfunction with ``||Phi||_2 = 1`` is normalized in the same
sense as its continuum counterpart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import IncompleteSpectrumError, ResourceError, SolverError, ValidationError

DEFAULT_DOF_CAP = 400_000
DENSE_LIMIT = 1500
CLUSTER_RTOL = 1e-8
COUNT_RTOL = 1e-12


@dataclass
class DiscreteOperator:
    matrix: sp.csr_matrix
    mask: object
    h: float

    @property
    def n_dof(self):
        return self.matrix.shape[0]


def assemble_laplacian(mask, dof_cap=DEFAULT_DOF_CAP):
    """Standard (2d+1)-point stencil for ``-Delta`` with homogeneous Dirichlet data.

    Neighbours outside the mask are dropped, which imposes ``u = 0`` there.
    """
    n = mask.size
    if n > dof_cap:
        raise ResourceError(f"{n} degrees of freedom exceed the cap of {dof_cap}",
                            n_dof=n, cap=dof_cap)
    d = mask.dimension
    h2 = mask.h ** 2
    lookup = np.full(mask.shape, -1, dtype=np.int64)
    lookup[tuple(mask.indices.T)] = np.arange(n)
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 2.0 * d / h2)]
    for axis in range(d):
        nb = mask.indices.copy()
        nb[:, axis] += 1
        ok = nb[:, axis] < mask.shape[axis]
        src = np.nonzero(ok)[0]
        dst = lookup[tuple(nb[ok].T)]
        hit = dst >= 0
        src, dst = src[hit], dst[hit]
        rows += [src, dst]
        cols += [dst, src]
        vals += [np.full(len(src), -1.0 / h2)] * 2
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sort_indices()
    return DiscreteOperator(A, mask, mask.h)


@dataclass
class ExactMode:
    """Closed-form Dirichlet mode ``sqrt(2/l) sin(pi j (x - a) / l)`` on ``(a, a + l)``."""

    piece: int
    a: float
    length: float
    j: int

    @property
    def eigenvalue(self):
        return math.pi ** 2 * self.j ** 2 / self.length ** 2

    @property
    def l1(self):
        return 2.0 * math.sqrt(2.0) / math.pi * math.sqrt(self.length)

    @property
    def linf(self):
        return math.sqrt(2.0 / self.length)

    @property
    def integral(self):
        return math.sqrt(2.0 * self.length) * (1.0 - math.cos(math.pi * self.j)) / (math.pi * self.j)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.a) & (x < self.a + self.length)
        val = math.sqrt(2.0 / self.length) * np.sin(math.pi * self.j * (x - self.a) / self.length)
        return np.where(inside, val, 0.0)


@dataclass
class EigenData:
    """Ordered eigenvalues with eigenfunctions and their norms.

    ``complete_below`` is the level below which every eigenvalue of the
    operator is present; the counting function is only trusted there.
    """

    eigenvalues: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    linf: np.ndarray
    integrals: np.ndarray
    source: str
    h: float | None
    dimension: int
    complete_below: float = 0.0
    vectors: np.ndarray | None = field(default=None, repr=False)
    mask: object = field(default=None, repr=False)
    modes: list | None = field(default=None, repr=False)
    residuals: np.ndarray | None = field(default=None, repr=False)
    label: str = ""

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def complete(self):
        return self.complete_below > 0

    def function(self, k):
        if self.vectors is None:
            raise ValidationError("eigenfunctions were not retained")
        return self.vectors[:, k]

    def evaluate(self, k, x):
        """Value of the k-th eigenfunction at a physical point (exact 1D) or node index (grid)."""
        if self.source == "exact1d":
            return self.modes[k](x)
        return self.vectors[x, k]

    def truncated(self, K):
        K = min(K, len(self))
        nxt = self.eigenvalues[K] if K < len(self) else self.complete_below
        return EigenData(
            self.eigenvalues[:K], self.l1[:K], self.l2[:K], self.linf[:K], self.integrals[:K],
            self.source, self.h, self.dimension, min(self.complete_below, nxt),
            None if self.vectors is None else self.vectors[:, :K], self.mask,
            None if self.modes is None else self.modes[:K],
            None if self.residuals is None else self.residuals[:K], self.label)

    def scaled(self, c):
        """Spectrum of the dilated domain ``c * Omega`` (eigenfunctions renormalized)."""
        d = self.dimension
        vec = None if self.vectors is None else self.vectors * c ** (-d / 2)
        modes = None
        if self.modes is not None:
            modes = [ExactMode(m.piece, m.a * c, m.length * c, m.j) for m in self.modes]
        mask = None if self.mask is None else self.mask.rescaled(c)
        return EigenData(
            self.eigenvalues / c ** 2, self.l1 * c ** (d / 2), self.l2.copy(),
            self.linf * c ** (-d / 2), self.integrals * c ** (d / 2), self.source,
            None if self.h is None else self.h * c, d, self.complete_below / c ** 2,
            vec, mask, modes, self.residuals, self.label)

    def to_dict(self):
        return {
            "h": self.h,
            "source": self.source,
            "dimension": self.dimension,
            "label": self.label,
            "complete_below": self.complete_below,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "norms": [{"l1": float(a), "l2": float(b), "linf": float(c)}
                      for a, b, c in zip(self.l1, self.l2, self.linf)],
            "integrals": [float(v) for v in self.integrals],
        }

    @classmethod
    def from_dict(cls, data):
        norms = data["norms"]
        n = len(data["eigenvalues"])
        integrals = data.get("integrals") or [float("nan")] * n
        cb = data.get("complete_below", 0.0)
        return cls(
            np.asarray(data["eigenvalues"], dtype=float),
            np.array([r["l1"] for r in norms], dtype=float),
            np.array([r["l2"] for r in norms], dtype=float),
            np.array([r["linf"] for r in norms], dtype=float),
            np.asarray(integrals, dtype=float),
            data["source"], data.get("h"), int(data.get("dimension", 1)),
            float("inf") if cb in ("inf", "Infinity") else float(cb),
            label=data.get("label", ""))

    def dump_functions(self, stem):
        """Write eigenfunctions as little-endian float64 (function-major, mask order).

        Produces ``stem.bin`` plus an int64 node-index file ``stem.idx`` and
        a JSON sidecar ``stem.json`` describing both.
        """
        if self.vectors is None or self.mask is None:
            raise ValidationError("no grid eigenfunctions to dump")
        stem = str(stem)
        np.ascontiguousarray(self.vectors.T, dtype="<f8").tofile(stem + ".bin")
        np.ascontiguousarray(self.mask.global_indices(), dtype="<i8").tofile(stem + ".idx")
        meta = {"n_nodes": int(self.mask.size), "n_functions": int(self.vectors.shape[1]),
                "dimension": self.dimension, "h": self.h, "dtype": "<f8", "index_dtype": "<i8",
                "layout": "function-major; node k of function i at offset i*n_nodes+k",
                "index_file": stem.rsplit("/", 1)[-1] + ".idx"}
        with open(stem + ".json", "w") as fh:
            json.dump(meta, fh, indent=1)


def grid_norms(values, h, dimension=None):
    """Quadrature norms ``(L1, L2, Linf)`` of a grid function."""
    v = np.asarray(values, dtype=float)
    if dimension is None:
        dimension = 1
    w = h ** dimension
    if v.size == 0:
        return 0.0, 0.0, 0.0
    a = np.abs(v)
    return float(w * a.sum()), float(math.sqrt(w * np.dot(a, a))), float(a.max())


def _start_vector(n):
    # deterministic and free of lattice symmetries, so no symmetry class is missed
    i = np.arange(n, dtype=float)
    v = 1.0 + 0.5 * np.sin(0.7548776662466927 * i * (i + 1.0) + 0.5)
    return v / np.linalg.norm(v)


def _block_eigs(A, k):
    n = A.shape[0]
    k = min(k, n)
    if n <= DENSE_LIMIT or k >= n - 1:
        w, V = scipy.linalg.eigh(A.toarray(), subset_by_index=[0, k - 1])
        return w, V, k == n
    try:
        w, V = eigsh(A.tocsc(), k=k, sigma=0.0, which="LM", v0=_start_vector(n), tol=1e-14)
    except ArpackNoConvergence as exc:
        res = [float(np.linalg.norm(A @ exc.eigenvectors[:, i] - exc.eigenvalues[i] * exc.eigenvectors[:, i]))
               for i in range(len(exc.eigenvalues))]
        raise SolverError("eigensolver did not converge", residuals=res) from None
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order], False


def _finish(A, w, V):
    """Normalize, orthonormalize clusters, fix signs and measure residuals."""
    # Rayleigh-Ritz inside near-degenerate clusters keeps bases orthonormal.
    k = len(w)
    start = 0
    while start < k:
        stop = start + 1
        while stop < k and w[stop] - w[start] <= CLUSTER_RTOL * max(abs(w[start]), 1.0):
            stop += 1
        if stop - start > 1:
            Q, _ = np.linalg.qr(V[:, start:stop])
            Hc = Q.T @ (A @ Q)
            mu, U = np.linalg.eigh(0.5 * (Hc + Hc.T))
            V[:, start:stop] = Q @ U
            w[start:stop] = mu
        start = stop
    V /= np.linalg.norm(V, axis=0)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    V *= signs
    # Rayleigh quotient refresh: eigenvalue consistent with the stored vector
    w = np.einsum("ij,ij->j", V, A @ V)
    res = np.linalg.norm(A @ V - V * w, axis=0)
    return w, V, res


def _solve_block(A, count=None, threshold=None):
    n = A.shape[0]
    if count is not None:
        k = min(n, count + 4)
        w, V, full = _block_eigs(A, k)
        return w, V, full
    target = 1.05 * threshold
    k = min(n, 16)
    while True:
        w, V, full = _block_eigs(A, k)
        if full or k >= n or w[-1] > target:
            return w, V, full or k >= n
        k = min(n, 2 * k)


def lowest_eigenpairs(op, count=None, threshold=None, residual_rtol=1e-8, keep_vectors=True):
    """Smallest eigenpairs of the discrete operator.

    Exactly one of ``count`` (K smallest) or ``threshold`` (all ``lambda <= t``)
    must be given. Connected components of the mask are solved separately and
    merged, so eigenfunctions of disjoint pieces stay localized.
    """
    if (count is None) == (threshold is None):
        raise ValidationError("give exactly one of count or threshold")
    if count is not None and count < 1:
        raise ValidationError("count must be >= 1")
    if threshold is not None and not threshold > 0:
        raise ValidationError("threshold must be positive")
    A = op.matrix
    n = A.shape[0]
    ncomp, labels = connected_components(A, directed=False)
    vals, vecs, comp_ids = [], [], []
    complete_below = math.inf
    for c in range(ncomp):
        nodes = np.nonzero(labels == c)[0]
        block = A[nodes][:, nodes]
        w, V, full = _solve_block(block, count, threshold)
        w, V, res = _finish(block, w.copy(), V.copy())
        if not full:
            # the top computed cluster may be incomplete; keep it only as a bound
            top = w[-1]
            keep = w < top * (1 - 1e-10)
            complete_below = min(complete_below, top)
            w, V, res = w[keep], V[:, keep], res[keep]
        for i in range(len(w)):
            vals.append(w[i])
            comp_ids.append(c)
            vec = np.zeros(n)
            vec[nodes] = V[:, i]
            vecs.append((vec, res[i]))
    vals = np.asarray(vals)
    order = np.lexsort((np.asarray(comp_ids), vals))
    vals = vals[order]
    vectors = np.stack([vecs[i][0] for i in order], axis=1) if len(order) else np.zeros((n, 0))
    residuals = np.array([vecs[i][1] for i in order])
    if count is not None:
        if len(vals) > count:
            complete_below = min(complete_below, vals[count])
        vals, vectors, residuals = vals[:count], vectors[:, :count], residuals[:count]
        if len(vals) < count and n > len(vals):
            raise SolverError(f"only {len(vals)} of {count} eigenpairs resolved",
                              residuals=residuals.tolist())
    else:
        keep = vals <= threshold * (1 + COUNT_RTOL)
        if (~keep).any():
            complete_below = min(complete_below, vals[~keep].min())
        vals, vectors, residuals = vals[keep], vectors[:, keep], residuals[keep]
    if len(vals) and vals[0] <= 0:
        raise SolverError("non-positive eigenvalue in a Dirichlet problem", residuals=residuals.tolist())
    for i, lam in enumerate(vals):
        clustered = (i > 0 and vals[i] - vals[i - 1] < 1e-3 * lam) or \
                    (i + 1 < len(vals) and vals[i + 1] - lam < 1e-3 * lam)
        tol = 1e-10 if clustered else residual_rtol
        if residuals[i] > tol * lam:
            raise SolverError(f"residual {residuals[i]:.3e} of eigenpair {i} exceeds {tol:g}*lambda",
                              residuals=residuals.tolist())
    mask = op.mask
    d = mask.dimension
    w = mask.cell_volume
    # vectors are unit in plain l2; convert to the h^d-weighted normalization
    vectors = vectors / math.sqrt(w)
    l1 = w * np.abs(vectors).sum(axis=0)
    l2 = np.sqrt(w * (vectors ** 2).sum(axis=0))
    linf = np.abs(vectors).max(axis=0) if len(vals) else np.zeros(0)
    integrals = w * vectors.sum(axis=0)
    return EigenData(vals, l1, l2, linf, integrals, "grid", mask.h, d, float(complete_below),
                     vectors if keep_vectors else None, mask, None, residuals)


def exact_interval_spectrum(intervals, t_max, label=""):
    """All closed-form modes ``pi^2 j^2 / l^2 <= t_max`` of a finite interval union."""
    ivs = [(float(a), float(b)) for a, b in intervals]
    for a, b in ivs:
        if not (math.isfinite(a) and math.isfinite(b) and b > a):
            raise ValidationError(f"interval ({a}, {b}) must be finite and nonempty")
    srt = sorted(ivs)
    for (a0, b0), (a1, b1) in zip(srt, srt[1:]):
        if a1 < b0:
            raise ValidationError(f"intervals ({a0}, {b0}) and ({a1}, {b1}) overlap")
    modes = []
    nxt = math.inf
    for p, (a, b) in enumerate(ivs):
        ell = b - a
        jmax = int(math.floor(ell * math.sqrt(max(t_max, 0.0)) / math.pi)) + 1
        while jmax > 0 and math.pi ** 2 * jmax ** 2 / ell ** 2 > t_max * (1 + COUNT_RTOL):
            jmax -= 1
        for j in range(1, jmax + 1):
            modes.append(ExactMode(p, a, ell, j))
        nxt = min(nxt, math.pi ** 2 * (jmax + 1) ** 2 / ell ** 2)
    modes.sort(key=lambda m: (m.eigenvalue, m.piece, m.j))
    lam = np.array([m.eigenvalue for m in modes], dtype=float)
    return EigenData(
        lam,
        np.array([m.l1 for m in modes]),
        np.ones(len(modes)),
        np.array([m.linf for m in modes]),
        np.array([m.integral for m in modes]),
        "exact1d", None, 1, nxt, None, None, modes, np.zeros(len(modes)), label)


def exact_box_eigenvalues(sides, t_max):
    """Sorted Dirichlet eigenvalues ``pi^2 sum (k_i / a_i)^2 <= t_max`` of a box."""
    sides = [float(a) for a in sides]
    ranges = [range(1, int(a * math.sqrt(t_max) / math.pi) + 2) for a in sides]
    out = []
    for ks in np.array(np.meshgrid(*ranges, indexing="ij")).reshape(len(sides), -1).T:
        lam = math.pi ** 2 * sum((k / a) ** 2 for k, a in zip(ks, sides))
        if lam <= t_max * (1 + COUNT_RTOL):
            out.append(lam)
    return np.sort(np.asarray(out))


def counting_function(eig, t):
    """Number of eigenvalues ``<= t`` counted with multiplicity."""
    if t >= eig.complete_below * (1 - COUNT_RTOL):
        raise IncompleteSpectrumError(
            f"spectrum only known completely below {eig.complete_below:.6g}; cannot count up to {t:.6g}",
            t=t, complete_below=eig.complete_below)
    return int(np.count_nonzero(eig.eigenvalues <= t * (1 + COUNT_RTOL)))


def solve_domain(spec, h=None, count=None, threshold=None, exact=False, **kwargs):
    """Convenience: rasterize + assemble + solve, or the exact 1D route."""
    from .geometry import rasterize

    if exact:
        if spec.dimension != 1:
            raise ValidationError("exact spectra exist only for 1D interval unions")
        ivs = [(p.a, p.b) for p in spec.pieces]
        if threshold is None:
            # enough modes for the K smallest overall
            ell = max(b - a for a, b in ivs)
            threshold = (math.pi * (count + 1) / ell) ** 2
            eig = exact_interval_spectrum(ivs, threshold, spec.label)
            return eig.truncated(count)
        return exact_interval_spectrum(ivs, threshold, spec.label)
    mask = rasterize(spec, h)
    op = assemble_laplacian(mask, kwargs.pop("dof_cap", DEFAULT_DOF_CAP))
    eig = lowest_eigenpairs(op, count=count, threshold=threshold, **kwargs)
    eig.label = spec.label
    return eig
