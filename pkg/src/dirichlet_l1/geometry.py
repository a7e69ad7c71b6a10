"""Domain description, rasterization, cube lattices and inscribed cubes.

A domain is a finite union of primitives: open intervals in 1D, and
axis-aligned rectangles, discs and straight strips in 2D. Domains are
rasterized onto the global lattice ``h * Z^d`` so that two domains
rasterized at the same ``h`` share node positions.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, UnresolvedFeatureError, ValidationError

REL_TOL = 1e-12


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    dim = 1
    kind = "interval"

    def validate(self):
        if not self.b > self.a:
            raise ValidationError(f"empty interval ({self.a}, {self.b})", piece=self.describe())

    def bbox(self):
        return (np.array([self.a]), np.array([self.b]))

    def width(self):
        return self.b - self.a

    def contains(self, pts, tol=0.0):
        x = pts[:, 0]
        return (x > self.a + tol) & (x < self.b - tol)

    def describe(self):
        return f"interval {self.a!r} {self.b!r}"


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    dim = 2
    kind = "rect"

    def validate(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValidationError(f"empty rect {self.describe()}", piece=self.describe())

    def bbox(self):
        return (np.array([self.x0, self.y0]), np.array([self.x1, self.y1]))

    def width(self):
        return min(self.x1 - self.x0, self.y1 - self.y0)

    def contains(self, pts, tol=0.0):
        x, y = pts[:, 0], pts[:, 1]
        return (x > self.x0 + tol) & (x < self.x1 - tol) & (y > self.y0 + tol) & (y < self.y1 - tol)

    def describe(self):
        return f"rect {self.x0!r} {self.y0!r} {self.x1!r} {self.y1!r}"


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    r: float

    dim = 2
    kind = "disc"

    def validate(self):
        if not self.r > 0:
            raise ValidationError(f"empty disc (radius {self.r})", piece=self.describe())

    def bbox(self):
        return (np.array([self.cx - self.r, self.cy - self.r]),
                np.array([self.cx + self.r, self.cy + self.r]))

    def width(self):
        return 2 * self.r

    def contains(self, pts, tol=0.0):
        dx = pts[:, 0] - self.cx
        dy = pts[:, 1] - self.cy
        return np.hypot(dx, dy) < self.r - tol

    def describe(self):
        return f"disc {self.cx!r} {self.cy!r} {self.r!r}"


@dataclass(frozen=True)
class Strip:
    """Open rectangle of width ``w`` around the segment (x0,y0)-(x1,y1)."""

    x0: float
    y0: float
    x1: float
    y1: float
    w: float

    dim = 2
    kind = "strip"

    def validate(self):
        if not (self.w > 0 and math.hypot(self.x1 - self.x0, self.y1 - self.y0) > 0):
            raise ValidationError(f"empty strip {self.describe()}", piece=self.describe())

    def bbox(self):
        lo = np.array([min(self.x0, self.x1), min(self.y0, self.y1)]) - self.w / 2
        hi = np.array([max(self.x0, self.x1), max(self.y0, self.y1)]) + self.w / 2
        return lo, hi

    def width(self):
        return self.w

    def contains(self, pts, tol=0.0):
        ux, uy = self.x1 - self.x0, self.y1 - self.y0
        length = math.hypot(ux, uy)
        ux, uy = ux / length, uy / length
        px = pts[:, 0] - self.x0
        py = pts[:, 1] - self.y0
        along = px * ux + py * uy
        across = -px * uy + py * ux
        return (along > tol) & (along < length - tol) & (np.abs(across) < self.w / 2 - tol)

    def describe(self):
        return f"strip {self.x0!r} {self.y0!r} {self.x1!r} {self.y1!r} {self.w!r}"


PRIMITIVES = {"interval": Interval, "rect": Rect, "disc": Disc, "strip": Strip}
ARITY = {"interval": 2, "rect": 4, "disc": 3, "strip": 5}


@dataclass(frozen=True)
class DomainSpec:
    dimension: int
    pieces: tuple
    label: str = ""
    notes: tuple = ()

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValidationError(f"dimension must be 1 or 2, got {self.dimension}")
        if not self.pieces:
            raise ValidationError("domain has no pieces")
        for p in self.pieces:
            if p.dim != self.dimension:
                raise ValidationError(
                    f"{p.kind} is a {p.dim}D primitive in a {self.dimension}D domain",
                    piece=p.describe())
            p.validate()

    def bbox(self):
        los, his = zip(*(p.bbox() for p in self.pieces))
        return np.min(los, axis=0), np.max(his, axis=0)

    def contains(self, pts, tol=0.0):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        inside = np.zeros(len(pts), dtype=bool)
        for p in self.pieces:
            inside |= p.contains(pts, tol)
        return inside

    def scaled(self, c):
        """Return the dilation ``c * Omega``."""
        pieces = []
        for p in self.pieces:
            vals = [getattr(p, f) * c for f in p.__dataclass_fields__]
            pieces.append(type(p)(*vals))
        return DomainSpec(self.dimension, tuple(pieces), self.label, self.notes)

    def to_text(self):
        lines = [f"dim={self.dimension}"] + [p.describe() for p in self.pieces]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# presets

def _dumbbell(m=2, eps=0.2, edge=3.0):
    m = int(m)
    if m < 2:
        raise ValidationError("dumbbell needs m >= 2")
    if not 0 < eps <= 1:
        raise ValidationError(f"dumbbell passage width must lie in (0, 1], got {eps}")
    if m == 2:
        centers = [(-edge / 2, 0.0), (edge / 2, 0.0)]
    else:
        circum = edge / (2 * math.sin(math.pi / m))
        centers = [(circum * math.cos(2 * math.pi * k / m), circum * math.sin(2 * math.pi * k / m))
                   for k in range(m)]
    pieces = [Disc(cx, cy, 1.0) for cx, cy in centers]
    if m == 2:
        (ax, ay), (bx, by) = centers
        pieces.append(Rect(ax, -eps / 2, bx, eps / 2))
    else:
        for k in range(m):
            (ax, ay), (bx, by) = centers[k], centers[(k + 1) % m]
            pieces.append(Strip(ax, ay, bx, by, eps))
    return DomainSpec(2, tuple(pieces), f"dumbbell(m={m},eps={eps:g})")


def _disjoint_balls(m=1):
    m = int(m)
    if m < 1:
        raise ValidationError("disjoint_balls needs m >= 1")
    pieces = tuple(Disc(3.0 * k, 0.0, 1.0) for k in range(m))
    return DomainSpec(2, pieces, f"disjoint_balls(m={m})")


def _interval_union(*lengths):
    if not lengths:
        raise ValidationError("interval_union needs at least one length")
    pieces, x = [], 0.0
    for ell in lengths:
        pieces.append(Interval(x, x + ell))
        x += ell + 1.0
    label = "interval_union(" + ",".join(f"{v:g}" for v in lengths) + ")"
    return DomainSpec(1, tuple(pieces), label)


def _packed_cubes(K=3):
    K = int(K)
    if K < 1:
        raise ValidationError("packed_cubes needs K >= 1")
    pieces, x = [], 0.0
    for k in range(1, K + 1):
        side = 2.0 ** -k
        pieces.append(Rect(x, 0.0, x + side, side))
        x += side
    notes = (f"countable family of shrinking cubes truncated to K={K} members",)
    return DomainSpec(2, tuple(pieces), f"packed_cubes(K={K})", notes)


def _unit_interval():
    return DomainSpec(1, (Interval(0.0, 1.0),), "unit_interval")


def _unit_square():
    return DomainSpec(2, (Rect(0.0, 0.0, 1.0, 1.0),), "unit_square")


def _unit_disc():
    return DomainSpec(2, (Disc(0.0, 0.0, 1.0),), "unit_disc")


PRESETS = {
    "dumbbell": _dumbbell,
    "disjoint_balls": _disjoint_balls,
    "interval_union": _interval_union,
    "packed_cubes": _packed_cubes,
    "unit_interval": _unit_interval,
    "unit_square": _unit_square,
    "unit_disc": _unit_disc,
}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PRESET_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def _number(tok, line, col):
    if not re.fullmatch(_NUMBER, tok):
        raise ParseError(f"expected a number, got {tok!r}", line, col)
    return float(tok)


def preset(text, line=1, col=1):
    """Build a preset domain from ``name(args)``, e.g. ``dumbbell(m=2, eps=0.2)``."""
    m = _PRESET_RE.match(text)
    if not m:
        raise ParseError(f"malformed preset call {text!r}", line, col)
    name, argtext = m.group(1), (m.group(2) or "").strip()
    if name not in PRESETS:
        raise ParseError(f"unknown preset {name!r}", line, col)
    args, kwargs = [], {}
    if argtext:
        for raw in argtext.split(","):
            raw = raw.strip()
            if "=" in raw:
                key, val = (s.strip() for s in raw.split("=", 1))
                kwargs[key] = _number(val, line, col)
            else:
                if kwargs:
                    raise ParseError("positional argument after keyword argument", line, col)
                args.append(_number(raw, line, col))
    try:
        return PRESETS[name](*args, **kwargs)
    except TypeError as exc:
        raise ParseError(f"bad arguments for preset {name}: {exc}", line, col) from None


def parse_domain(spec_text, label=""):
    """Parse the line-oriented domain format.

    Statements are separated by newlines or ``;``. A ``preset`` statement
    contributes all pieces of the preset domain.
    """
    dim = None
    pieces, notes, preset_labels = [], [], []
    n_primitive = 0
    for lineno, line in enumerate(spec_text.splitlines(), start=1):
        col = 1
        for stmt in line.split(";"):
            start = col + len(stmt) - len(stmt.lstrip())
            col += len(stmt) + 1
            stmt = stmt.split("#", 1)[0].strip()
            if not stmt:
                continue
            if stmt.startswith("dim"):
                m = re.fullmatch(r"dim\s*=\s*(\S+)", stmt)
                if not m or m.group(1) not in ("1", "2"):
                    raise ParseError(f"bad dimension statement {stmt!r}", lineno, start)
                dim = int(m.group(1))
                continue
            head, _, rest = stmt.partition(" ")
            if head == "preset":
                dom = preset(rest, lineno, start)
                if dim is None:
                    dim = dom.dimension
                elif dim != dom.dimension:
                    raise ParseError(f"preset {dom.label} is {dom.dimension}D in a {dim}D domain",
                                     lineno, start)
                pieces.extend(dom.pieces)
                notes.extend(dom.notes)
                preset_labels.append(dom.label)
                continue
            if head not in PRIMITIVES:
                raise ParseError(f"unknown statement {head!r}", lineno, start)
            toks = rest.split()
            if len(toks) != ARITY[head]:
                raise ParseError(f"{head} takes {ARITY[head]} numbers, got {len(toks)}", lineno, start)
            vals = [_number(t, lineno, start) for t in toks]
            pieces.append(PRIMITIVES[head](*vals))
            n_primitive += 1
    if dim is None:
        raise ParseError("missing dim=<1|2> statement", 1, 1)
    if not pieces:
        raise ParseError("domain has no pieces", 1, 1)
    if not label:
        if len(preset_labels) == 1 and n_primitive == 0:
            label = preset_labels[0]
        else:
            label = "custom"
    return DomainSpec(dim, tuple(pieces), label, tuple(notes))


def resolve_domain(text):
    """Accept either a bare preset call or full domain text."""
    if "\n" not in text and ";" not in text and "=" not in text.split("(")[0] and _PRESET_RE.match(text):
        return preset(text)
    return parse_domain(text)


# ---------------------------------------------------------------------------
# rasterization

@dataclass(frozen=True)
class GridMask:
    """Interior lattice nodes of a domain.

    Node ``k`` sits at ``h * (offset + indices[k])``. ``indices`` is sorted
    lexicographically and indexes into the bounding ``shape``.
    """

    h: float
    offset: tuple
    shape: tuple
    indices: np.ndarray = field(repr=False)
    scale: float = 1.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValidationError("mesh width must be positive")
        if len(self.indices) == 0:
            raise ValidationError("mask has no interior nodes")

    @property
    def dimension(self):
        return len(self.shape)

    @property
    def size(self):
        return len(self.indices)

    @property
    def cell_volume(self):
        return self.h ** self.dimension

    def coords(self):
        return self.h * (np.asarray(self.offset) + self.indices)

    def global_indices(self):
        return np.asarray(self.offset) + self.indices

    def as_array(self, values=None, fill=0.0):
        """Scatter node values (or a boolean occupancy) into the bounding box array."""
        if values is None:
            out = np.zeros(self.shape, dtype=bool)
            out[tuple(self.indices.T)] = True
            return out
        out = np.full(self.shape, fill, dtype=np.asarray(values).dtype)
        out[tuple(self.indices.T)] = values
        return out

    def subset(self, keep):
        """Mask restricted to the nodes where ``keep`` is true."""
        keep = np.asarray(keep, dtype=bool)
        return GridMask(self.h, self.offset, self.shape, self.indices[keep], self.scale)

    def rescaled(self, c):
        """The same lattice for the dilated domain ``c * Omega``.

        Only the physical mesh width changes; node indices are untouched,
        so the discrete spectrum scales by exactly ``1 / c**2``.
        """
        return GridMask(self.h * c, self.offset, self.shape, self.indices, self.scale * c)

    def bbox(self):
        lo = self.h * (np.asarray(self.offset) + self.indices.min(axis=0))
        hi = self.h * (np.asarray(self.offset) + self.indices.max(axis=0))
        return lo, hi


def rasterize(spec, h):
    """Collect every node of ``h * Z^d`` strictly inside the domain."""
    if not h > 0:
        raise ValidationError(f"mesh width must be positive, got {h}")
    tol = REL_TOL * h
    for p in spec.pieces:
        if p.width() < h:
            raise UnresolvedFeatureError(
                f"unresolved feature: {p.describe()} has width {p.width():g} < h = {h:g}",
                piece=p.describe(), minimal_h=p.width() / 2)
    lo, hi = spec.bbox()
    offset = np.floor(lo / h).astype(np.int64)
    top = np.ceil(hi / h).astype(np.int64)
    shape = tuple(int(v) for v in (top - offset + 1))
    axes = [h * (offset[i] + np.arange(shape[i])) for i in range(spec.dimension)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    inside = np.zeros(len(pts), dtype=bool)
    for p in spec.pieces:
        hit = p.contains(pts, tol)
        if not hit.any():
            raise UnresolvedFeatureError(
                f"unresolved feature: no lattice node inside {p.describe()} at h = {h:g}",
                piece=p.describe(), minimal_h=p.width() / 2)
        inside |= hit
    idx = np.argwhere(inside.reshape(shape))
    return GridMask(float(h), tuple(int(v) for v in offset), shape, idx)


# ---------------------------------------------------------------------------
# cube lattices

@dataclass(frozen=True)
class CubeLattice:
    """Cubes ``Q_{n,j} = n*(-1,1)^d + n*j`` and their 2x / 3x enlargements."""

    n: float
    dimension: int

    def center(self, j):
        return self.n * np.asarray(j, dtype=float)

    def cube(self, j, factor=1):
        c = self.center(j)
        half = factor * self.n
        return c - half, c + half

    def contains(self, j, pts, factor=1):
        """Points strictly inside the (possibly enlarged) open cube around ``n*j``."""
        pts = np.atleast_2d(pts)
        c = self.center(j)
        return np.all(np.abs(pts - c) < factor * self.n, axis=1)

    def indices_meeting(self, lo, hi, factor=1):
        """All ``j`` whose enlarged cube meets the box ``[lo, hi]``."""
        ranges = []
        for i in range(self.dimension):
            first = math.floor(lo[i] / self.n - factor) + 1
            last = math.ceil(hi[i] / self.n + factor) - 1
            ranges.append(range(first, last + 1))
        return [tuple(j) for j in itertools.product(*ranges)]

    def covering_count(self, pts):
        """Number of cubes ``Q_{n,j}`` containing each point."""
        pts = np.atleast_2d(pts)
        counts = np.ones(len(pts), dtype=int)
        for i in range(self.dimension):
            u = pts[:, i] / self.n
            # integers j with |u - j| < 1
            counts *= ((np.ceil(u + 1) - 1) - (np.floor(u - 1) + 1) + 1).astype(int)
        return counts


# ---------------------------------------------------------------------------
# inscribed cubes

def _largest_block(occ):
    """DP table: size of the largest all-true hypercube ending at each index."""
    if occ.ndim == 1:
        dp = np.zeros(occ.shape, dtype=np.int64)
        run = 0
        for i, v in enumerate(occ):
            run = run + 1 if v else 0
            dp[i] = run
        return dp
    rows, cols = occ.shape
    dp = np.zeros((rows, cols), dtype=np.int64)
    prev = np.zeros(cols, dtype=np.int64)
    for i in range(rows):
        cur = np.zeros(cols, dtype=np.int64)
        row = occ[i]
        left = 0
        for j in range(cols):
            if row[j]:
                diag = prev[j - 1] if j else 0
                left = min(prev[j], left, diag) + 1
            else:
                left = 0
            cur[j] = left
        dp[i] = cur
        prev = cur
    return dp


def largest_block_bruteforce(occ):
    """Exhaustive search for the largest all-true hypercube (test oracle)."""
    best = 0
    dims = occ.shape
    for start in itertools.product(*(range(s) for s in dims)):
        k = best + 1
        while all(st + k <= s for st, s in zip(start, dims)):
            sl = tuple(slice(st, st + k) for st in start)
            if not occ[sl].all():
                break
            best = k
            k += 1
    return best


def _cube_inside(spec, lo, side, h, d):
    step = h / 4
    m = max(1, int(round(side / step)))
    ticks = [lo[i] + (np.arange(m) + 0.5) * side / m for i in range(d)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*ticks, indexing="ij")], axis=1)
    return bool(spec.contains(pts).all())


def largest_inscribed_cube(spec, mask, max_candidates=16):
    """Volume of the largest lattice-resolved open cube inside the domain.

    The largest block of ``k^d`` interior nodes is found by dynamic
    programming. The cube spanning to the neighbouring lattice lines (side
    ``(k+1) h``) is accepted if a sub-sampled containment test agrees,
    otherwise smaller sides are tried. The result never exceeds the true
    inscribed-cube volume by more than the sampling resolution.
    """
    occ = mask.as_array()
    d = mask.dimension
    dp = _largest_block(occ)
    k = int(dp.max())
    h = mask.h
    ends = np.argwhere(dp == k)[:max_candidates]
    origin = h * np.asarray(mask.offset)
    for side_steps, shift in ((k + 1, 1.0), (k, 0.5)):
        side = side_steps * h
        for end in ends:
            first = end - (k - 1)
            lo = origin + h * first - shift * h
            if _cube_inside(spec, lo, side, h, d):
                return side ** d
    return ((k - 1) * h) ** d
