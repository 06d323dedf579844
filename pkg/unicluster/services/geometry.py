"""
Geometry Service

Concrete regions inside a compact box Ω ⊂ ℝ^d and the exact set
algebra the forest and measure layers are built on.

Region variants:
- Interval1D / IntervalUnion: rational intervals on the line with
  explicit endpoint openness (limit clusters such as [0,1/2) need it)
- DyadicCellUnion: closed union of dyadic cells of a box, stored as a
  packed bit mask so thousands of level components stay cheap
- Polyline: the image of a parameter span of a piecewise-linear carrier
- Atom: a single point

Key Design Decisions:
1. Exact: Fraction arithmetic everywhere except polyline arc length
2. Immutable: frozen dataclasses, safe to share across threads
3. Closed cells: every cell union is a closed set
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from unicluster.config import get_settings
from unicluster.errors import ClusteringError

settings = get_settings()

Rational = Fraction
Point = Tuple[Fraction, ...]


# =============================================================================
# RATIONALS
# =============================================================================

def as_rational(value: Union[str, int, Fraction]) -> Fraction:
    """Parse "p/q", an integer or a Fraction; "1/0" and garbage are parse errors."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ClusteringError("parse-error", f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ZeroDivisionError:
            raise ClusteringError("parse-error", f"zero denominator in rational {value!r}")
        except ValueError:
            raise ClusteringError("parse-error", f"malformed rational {value!r}")
    raise ClusteringError("parse-error", f"not a rational: {value!r}")


def as_point(coords: Iterable[Union[str, int, Fraction]]) -> Point:
    return tuple(as_rational(c) for c in coords)


def format_rational(x: Fraction) -> str:
    return str(x)


def exact_sqrt(x: Fraction) -> Union[Fraction, float]:
    """Square root, exact when numerator and denominator are perfect squares."""
    n, d = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if n * n == x.numerator and d * d == x.denominator:
        return Fraction(n, d)
    return math.sqrt(x)


# =============================================================================
# AMBIENT BOX
# =============================================================================

@dataclass(frozen=True)
class Box:
    """The compact ambient box Ω with rational corners."""
    lo: Point
    hi: Point

    def __post_init__(self):
        lo, hi = as_point(self.lo), as_point(self.hi)
        if len(lo) != len(hi) or not lo:
            raise ClusteringError("invalid-region", "box corners must have the same positive dimension")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ClusteringError("invalid-region", f"degenerate box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo, hi, dim: int) -> "Box":
        return cls(tuple([as_rational(lo)] * dim), tuple([as_rational(hi)] * dim))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> Fraction:
        return math.prod((b - a for a, b in zip(self.lo, self.hi)), start=Fraction(1))

    def side(self, depth: int) -> Tuple[Fraction, ...]:
        return tuple((b - a) / (2 ** depth) for a, b in zip(self.lo, self.hi))

    def shape(self, depth: int) -> Tuple[int, ...]:
        return (2 ** depth,) * self.dim

    def cell_bounds(self, depth: int, index: Sequence[int]) -> Tuple[Point, Point]:
        s = self.side(depth)
        lo = tuple(a + i * h for a, i, h in zip(self.lo, index, s))
        return lo, tuple(x + h for x, h in zip(lo, s))

    def edges(self, depth: int, axis: int) -> List[Fraction]:
        s = self.side(depth)[axis]
        return [self.lo[axis] + i * s for i in range(2 ** depth + 1)]

    def contains_point(self, p: Point) -> bool:
        return all(a <= x <= b for a, x, b in zip(self.lo, p, self.hi))

    def holds(self, region: "Region") -> bool:
        """Whether the closure of `region` lies inside the box."""
        if region.ambient_dim != self.dim:
            return False
        if isinstance(region, Atom):
            return self.contains_point(region.point)
        if isinstance(region, (Interval1D, IntervalUnion)):
            return self.lo[0] <= region.lo and region.hi <= self.hi[0]
        if isinstance(region, DyadicCellUnion):
            occupied = np.argwhere(region.mask)
            lo, _ = region.box.cell_bounds(region.depth, [int(i) for i in occupied.min(axis=0)])
            _, hi = region.box.cell_bounds(region.depth, [int(i) for i in occupied.max(axis=0)])
            return self.contains_point(lo) and self.contains_point(hi)
        # the box is convex, so span ends and inner vertices suffice
        parts = interval_parts(region.span)
        ts = {t for p in parts for t in (p.lo, p.hi)}
        ts |= {k for k in region.knots if any(p.lo < k < p.hi for p in parts)}
        return all(self.contains_point(region.point_at(t)) for t in ts)

    def expanded(self, margin) -> "Box":
        m = as_rational(margin)
        return Box(tuple(a - m for a in self.lo), tuple(b + m for b in self.hi))


# =============================================================================
# REGION VARIANTS
# =============================================================================

@dataclass(frozen=True)
class Interval1D:
    """Rational interval on the line; lo == hi is a closed point."""
    lo: Fraction
    hi: Fraction
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        lo, hi = as_rational(self.lo), as_rational(self.hi)
        if lo > hi:
            raise ClusteringError("invalid-region", f"interval with lo {lo} > hi {hi}")
        if lo == hi and not (self.lo_closed and self.hi_closed):
            raise ClusteringError("invalid-region", f"empty interval at {lo}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    kind = "interval"

    @property
    def dim(self) -> int:
        return 1

    @property
    def ambient_dim(self) -> int:
        return 1

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    def contains_value(self, x: Fraction) -> bool:
        above = x > self.lo or (x == self.lo and self.lo_closed)
        below = x < self.hi or (x == self.hi and self.hi_closed)
        return above and below

    def closure(self) -> "Interval1D":
        return Interval1D(self.lo, self.hi, True, True)

    def __str__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo},{self.hi}{right}"


@dataclass(frozen=True)
class IntervalUnion:
    """Two or more intervals whose union is not an interval; build with interval_region()."""
    parts: Tuple[Interval1D, ...]

    kind = "interval-union"

    @property
    def dim(self) -> int:
        return 1

    @property
    def ambient_dim(self) -> int:
        return 1

    @property
    def lo(self) -> Fraction:
        return self.parts[0].lo

    @property
    def hi(self) -> Fraction:
        return self.parts[-1].hi

    def __str__(self) -> str:
        return " ∪ ".join(str(p) for p in self.parts)


@dataclass(frozen=True)
class DyadicCellUnion:
    """Closed union of cells of the depth-`depth` dyadic grid on `box`."""
    box: Box
    depth: int
    bits: bytes = field(repr=False)

    kind = "cells"

    @classmethod
    def from_mask(cls, box: Box, depth: int, mask: np.ndarray) -> "DyadicCellUnion":
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != box.shape(depth):
            raise ClusteringError("invalid-region", f"mask shape {mask.shape} does not match depth {depth}")
        if not mask.any():
            raise ClusteringError("invalid-region", "empty cell union")
        return cls(box, depth, np.packbits(mask.ravel()).tobytes())

    @classmethod
    def from_cells(cls, box: Box, depth: int, cells: Iterable[Sequence[int]]) -> "DyadicCellUnion":
        mask = np.zeros(box.shape(depth), dtype=bool)
        n = 2 ** depth
        for cell in cells:
            cell = tuple(int(i) for i in cell)
            if len(cell) != box.dim or any(i < 0 or i >= n for i in cell):
                raise ClusteringError("invalid-region", f"cell {cell} outside the depth-{depth} grid")
            mask[cell] = True
        return cls.from_mask(box, depth, mask)

    @cached_property
    def mask(self) -> np.ndarray:
        shape = self.box.shape(self.depth)
        flat = np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8), count=math.prod(shape))
        mask = flat.astype(bool).reshape(shape)
        mask.flags.writeable = False
        return mask

    @property
    def cells(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(i) for i in c) for c in np.argwhere(self.mask))

    @cached_property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def ambient_dim(self) -> int:
        return self.box.dim

    @property
    def cell_volume(self) -> Fraction:
        return math.prod(self.box.side(self.depth), start=Fraction(1))

    def refined(self, depth: int) -> "DyadicCellUnion":
        if depth == self.depth:
            return self
        if depth < self.depth:
            raise ClusteringError("invalid-region", "cell unions only refine to finer depths")
        return DyadicCellUnion.from_mask(self.box, depth, refine_mask(self.mask, depth - self.depth))

    def __str__(self) -> str:
        return f"cells[depth={self.depth}, n={self.count}]"


@dataclass(frozen=True)
class Polyline:
    """Image of `span` ⊂ [0,1] under the piecewise-linear carrier through `vertices`."""
    vertices: Tuple[Point, ...]
    knots: Tuple[Fraction, ...]
    span: Union[Interval1D, IntervalUnion] = Interval1D(Fraction(0), Fraction(1))

    kind = "polyline"

    def __post_init__(self):
        vertices = tuple(as_point(v) for v in self.vertices)
        knots = tuple(as_rational(k) for k in self.knots)
        if len(vertices) < 2:
            raise ClusteringError("invalid-region", "polyline needs at least 2 vertices")
        if len({len(v) for v in vertices}) != 1:
            raise ClusteringError("invalid-region", "polyline vertices differ in dimension")
        if any(a == b for a, b in zip(vertices, vertices[1:])):
            raise ClusteringError("invalid-region", "consecutive polyline vertices coincide")
        if len(knots) != len(vertices) or knots[0] != 0 or knots[-1] != 1:
            raise ClusteringError("invalid-region", "knots must run from 0 to 1, one per vertex")
        if any(a >= b for a, b in zip(knots, knots[1:])):
            raise ClusteringError("invalid-region", "knots must be strictly increasing")
        if self.span.lo < 0 or self.span.hi > 1:
            raise ClusteringError("invalid-region", f"span {self.span} leaves [0,1]")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "knots", knots)

    @classmethod
    def through(cls, vertices: Sequence[Sequence], knots: Optional[Sequence] = None) -> "Polyline":
        n = len(vertices) - 1
        if knots is None:
            knots = [Fraction(i, n) for i in range(n + 1)] if n > 0 else []
        return cls(tuple(as_point(v) for v in vertices), tuple(as_rational(k) for k in knots))

    @property
    def dim(self) -> int:
        return 1

    @property
    def ambient_dim(self) -> int:
        return len(self.vertices[0])

    @property
    def carrier(self) -> Tuple[Tuple[Point, ...], Tuple[Fraction, ...]]:
        return self.vertices, self.knots

    def with_span(self, span: Union[Interval1D, IntervalUnion]) -> "Polyline":
        return Polyline(self.vertices, self.knots, span)

    @cached_property
    def segment_lengths(self) -> Tuple[float, ...]:
        return tuple(
            math.sqrt(float(sum((b - a) ** 2 for a, b in zip(p, q))))
            for p, q in zip(self.vertices, self.vertices[1:])
        )

    def point_at(self, t: Fraction) -> Point:
        """Exact carrier point at parameter t."""
        t = as_rational(t)
        for k in range(len(self.knots) - 1):
            t0, t1 = self.knots[k], self.knots[k + 1]
            if t <= t1 or k == len(self.knots) - 2:
                u = (t - t0) / (t1 - t0)
                p, q = self.vertices[k], self.vertices[k + 1]
                return tuple(a + u * (b - a) for a, b in zip(p, q))
        raise ClusteringError("invalid-region", f"parameter {t} outside [0,1]")

    def pieces(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Float segments covering the span, clipped at span boundaries."""
        out = []
        for part in interval_parts(self.span):
            for k in range(len(self.knots) - 1):
                a = max(part.lo, self.knots[k])
                b = min(part.hi, self.knots[k + 1])
                if a > b or (a == b and part.lo < part.hi):
                    continue
                out.append((
                    np.array([float(x) for x in self.point_at(a)]),
                    np.array([float(x) for x in self.point_at(b)]),
                ))
        return out

    def __str__(self) -> str:
        first, last = self.vertices[0], self.vertices[-1]
        fmt = lambda p: "(" + ",".join(str(x) for x in p) + ")"
        return f"curve{fmt(first)}->{fmt(last)}:{self.span}"


@dataclass(frozen=True)
class Atom:
    """A single point; its reference measure is counting measure."""
    point: Point

    kind = "atom"

    def __post_init__(self):
        object.__setattr__(self, "point", as_point(self.point))

    @property
    def dim(self) -> int:
        return 0

    @property
    def ambient_dim(self) -> int:
        return len(self.point)

    def __str__(self) -> str:
        if len(self.point) == 1:
            return "{" + str(self.point[0]) + "}"
        return "{(" + ",".join(str(x) for x in self.point) + ")}"


Region = Union[Interval1D, IntervalUnion, DyadicCellUnion, Polyline, Atom]
IntervalLike = Union[Interval1D, IntervalUnion]


def region_key(r: Region) -> tuple:
    """Total order on regions: by dimension class, then kind, larger-first within a kind."""
    if isinstance(r, (Interval1D, IntervalUnion)):
        parts = interval_parts(r)
        first, last = parts[0], parts[-1]
        return (r.dim, 0, first.lo, not first.lo_closed, -last.hi, not last.hi_closed,
                tuple((p.lo, not p.lo_closed, p.hi, not p.hi_closed) for p in parts))
    if isinstance(r, Polyline):
        return (r.dim, 1, r.vertices, r.knots, region_key(r.span))
    if isinstance(r, DyadicCellUnion):
        return (r.dim, 2, r.box.lo, r.box.hi, r.depth, -r.count, r.bits)
    return (r.dim, 3, r.point)


# =============================================================================
# INTERVAL ALGEBRA
# =============================================================================

def interval_parts(r: IntervalLike) -> Tuple[Interval1D, ...]:
    return r.parts if isinstance(r, IntervalUnion) else (r,)


def interval_region(parts: Iterable[Interval1D]) -> Optional[IntervalLike]:
    """Normalize a family of intervals into None, one Interval1D or an IntervalUnion."""
    ordered = sorted(parts, key=lambda p: (p.lo, not p.lo_closed))
    merged: List[Interval1D] = []
    for p in ordered:
        if merged:
            a = merged[-1]
            if p.lo < a.hi or (p.lo == a.hi and (a.hi_closed or p.lo_closed)):
                if p.hi > a.hi:
                    hi, hi_closed = p.hi, p.hi_closed
                elif p.hi == a.hi:
                    hi, hi_closed = a.hi, a.hi_closed or p.hi_closed
                else:
                    hi, hi_closed = a.hi, a.hi_closed
                merged[-1] = Interval1D(a.lo, hi, a.lo_closed, hi_closed)
                continue
        merged.append(p)
    if not merged:
        return None
    if len(merged) == 1:
        return merged[0]
    return IntervalUnion(tuple(merged))


def _intersect_intervals(a: Interval1D, b: Interval1D) -> Optional[Interval1D]:
    if a.lo > b.lo:
        lo, lo_closed = a.lo, a.lo_closed
    elif b.lo > a.lo:
        lo, lo_closed = b.lo, b.lo_closed
    else:
        lo, lo_closed = a.lo, a.lo_closed and b.lo_closed
    if a.hi < b.hi:
        hi, hi_closed = a.hi, a.hi_closed
    elif b.hi < a.hi:
        hi, hi_closed = b.hi, b.hi_closed
    else:
        hi, hi_closed = a.hi, a.hi_closed and b.hi_closed
    if lo < hi or (lo == hi and lo_closed and hi_closed):
        return Interval1D(lo, hi, lo_closed, hi_closed)
    return None


def _interval_within(inner: Interval1D, outer: Interval1D) -> bool:
    left = outer.lo < inner.lo or (outer.lo == inner.lo and (outer.lo_closed or not inner.lo_closed))
    right = inner.hi < outer.hi or (inner.hi == outer.hi and (outer.hi_closed or not inner.hi_closed))
    return left and right


def intersect_interval_sets(a: Sequence[Interval1D], b: Sequence[Interval1D]) -> List[Interval1D]:
    out = []
    for p in a:
        for q in b:
            x = _intersect_intervals(p, q)
            if x is not None:
                out.append(x)
    return out


def complement_interval_set(parts: Sequence[Interval1D], within: Interval1D) -> List[Interval1D]:
    """within \\ (union of parts), as intervals."""
    out: List[Interval1D] = []
    lo, lo_closed = within.lo, within.lo_closed
    region = interval_region(parts)
    for p in (interval_parts(region) if region is not None else ()):
        gap_hi, gap_hi_closed = p.lo, not p.lo_closed
        if lo < gap_hi or (lo == gap_hi and lo_closed and gap_hi_closed):
            piece = _intersect_intervals(Interval1D(lo, gap_hi, lo_closed, gap_hi_closed), within)
            if piece is not None:
                out.append(piece)
        lo, lo_closed = p.hi, not p.hi_closed
    if lo < within.hi or (lo == within.hi and lo_closed and within.hi_closed):
        piece = _intersect_intervals(Interval1D(lo, within.hi, lo_closed, within.hi_closed), within)
        if piece is not None:
            out.append(piece)
    return out


def interval_set_difference(a: Sequence[Interval1D], b: Sequence[Interval1D]) -> List[Interval1D]:
    if not a:
        return []
    hull = Interval1D(min(p.lo for p in a), max(p.hi for p in a))
    return intersect_interval_sets(a, complement_interval_set(b, hull))


def cells_to_intervals(cells: DyadicCellUnion) -> List[Interval1D]:
    """Closed intervals of a one-dimensional cell union, adjacent cells merged."""
    if cells.box.dim != 1:
        raise ClusteringError("dimension-mismatch", "only 1D cell unions convert to intervals")
    edges = cells.box.edges(cells.depth, 0)
    parts = [Interval1D(edges[i], edges[i + 1]) for i in np.flatnonzero(cells.mask)]
    region = interval_region(parts)
    return list(interval_parts(region)) if region is not None else []


def as_intervals(r: Region) -> Optional[List[Interval1D]]:
    """The interval decomposition of a one-dimensional-ambient region, else None."""
    if isinstance(r, Interval1D):
        return [r]
    if isinstance(r, IntervalUnion):
        return list(r.parts)
    if isinstance(r, DyadicCellUnion) and r.box.dim == 1:
        return cells_to_intervals(r)
    return None


# =============================================================================
# CELL ALGEBRA
# =============================================================================

def refine_mask(mask: np.ndarray, levels: int) -> np.ndarray:
    """Subdivide every cell of `mask` into 2^levels cells per axis."""
    out = mask
    for axis in range(mask.ndim):
        out = np.repeat(out, 2 ** levels, axis=axis)
    return out


def common_depth(a: DyadicCellUnion, b: DyadicCellUnion) -> Tuple[np.ndarray, np.ndarray]:
    """Masks of two same-box unions at their common (finer) depth."""
    depth = max(a.depth, b.depth)
    return (refine_mask(a.mask, depth - a.depth), refine_mask(b.mask, depth - b.depth))


def neighbor_offsets(dim: int) -> List[Tuple[int, ...]]:
    """The 3^d − 1 face, edge and corner neighbours of a closed cell."""
    grid = np.stack(np.meshgrid(*([np.arange(-1, 2)] * dim), indexing="ij"), -1).reshape(-1, dim)
    return [tuple(int(x) for x in o) for o in grid if any(o)]


def _dilate(mask: np.ndarray, offsets: Sequence[Tuple[int, ...]]) -> np.ndarray:
    reach = max((max(abs(x) for x in o) for o in offsets), default=0)
    footprint = np.zeros((2 * reach + 1,) * mask.ndim, dtype=bool)
    footprint[(reach,) * mask.ndim] = True
    for o in offsets:
        footprint[tuple(reach + x for x in o)] = True
    return ndimage.binary_dilation(mask, structure=footprint)


def compressed_axes(boxes_depths: Sequence[Tuple[Box, int]]) -> List[List[Fraction]]:
    """Per-axis merged edge lists of several grids."""
    dim = boxes_depths[0][0].dim
    axes = []
    for k in range(dim):
        edges = set()
        for box, depth in boxes_depths:
            edges.update(box.edges(depth, k))
        axes.append(sorted(edges))
    return axes


def mask_on_axes(cells: DyadicCellUnion, axes: List[List[Fraction]]) -> np.ndarray:
    """Rasterize a cell union onto a compressed grid by testing compressed-cell midpoints."""
    index_per_axis = []
    valid_per_axis = []
    for k, edges in enumerate(axes):
        lo, s = cells.box.lo[k], cells.box.side(cells.depth)[k]
        n = 2 ** cells.depth
        idx, ok = [], []
        for a, b in zip(edges, edges[1:]):
            u = ((a + b) / 2 - lo) / s
            i = math.floor(u)
            ok.append(0 <= i < n)
            idx.append(min(max(i, 0), n - 1))
        index_per_axis.append(np.array(idx, dtype=np.int64))
        valid_per_axis.append(np.array(ok, dtype=bool))
    out = cells.mask[np.ix_(*index_per_axis)]
    for k, ok in enumerate(valid_per_axis):
        shape = [1] * len(axes)
        shape[k] = len(ok)
        out = out & ok.reshape(shape)
    return out


def compress_pair(a: DyadicCellUnion, b: DyadicCellUnion):
    """Both unions on the coordinate-compressed grid of their two grids.

    Returns (mask_a, mask_b, axes); compressed cells are the boxes between
    consecutive merged edges.
    """
    axes = compressed_axes([(a.box, a.depth), (b.box, b.depth)])
    return mask_on_axes(a, axes), mask_on_axes(b, axes), axes


def _cell_rects(cells: DyadicCellUnion) -> List[Tuple[Point, Point]]:
    return [cells.box.cell_bounds(cells.depth, c) for c in cells.cells]


def _rect_gap_sq(a: Tuple[Point, Point], b: Tuple[Point, Point]) -> Fraction:
    total = Fraction(0)
    for alo, ahi, blo, bhi in zip(a[0], a[1], b[0], b[1]):
        gap = max(Fraction(0), blo - ahi, alo - bhi)
        total += gap * gap
    return total


def _same_grid_gap_sq(a: DyadicCellUnion, b: DyadicCellUnion) -> Fraction:
    """Exact min squared gap between two unions of one box, via integer index gaps."""
    ma, mb = common_depth(a, b)
    depth = max(a.depth, b.depth)
    side_sq = [s * s for s in a.box.side(depth)]
    denom = math.lcm(*(s.denominator for s in side_sq))
    weights = np.array([s.numerator * (denom // s.denominator) for s in side_sq], dtype=object)
    ia, ib = np.argwhere(ma).astype(np.int64), np.argwhere(mb).astype(np.int64)
    best = None
    chunk = max(1, 2_000_000 // max(len(ib), 1))
    for start in range(0, len(ia), chunk):
        block = ia[start:start + chunk]
        gaps = np.maximum(np.abs(block[:, None, :] - ib[None, :, :]) - 1, 0)
        if np.all(weights == weights[0]):
            # integer sum then one exact scale
            value = int((gaps ** 2).sum(axis=2).min()) * weights[0]
        else:
            value = min(
                sum(int(g) ** 2 * w for g, w in zip(row, weights))
                for row in gaps.reshape(-1, gaps.shape[-1])
            )
        best = value if best is None else min(best, value)
        if best == 0:
            break
    return Fraction(best, denom)


# =============================================================================
# POLYLINE ALGEBRA
# =============================================================================

def clip_segment(p: Point, q: Point, lo: Point, hi: Point) -> Optional[Tuple[Fraction, Fraction]]:
    """Exact Liang-Barsky: parameters u ∈ [0,1] with p + u(q−p) inside the closed box."""
    u0, u1 = Fraction(0), Fraction(1)
    for a, b, l, h in zip(p, q, lo, hi):
        d = b - a
        if d == 0:
            if a < l or a > h:
                return None
            continue
        t_l, t_h = (l - a) / d, (h - a) / d
        if t_l > t_h:
            t_l, t_h = t_h, t_l
        u0, u1 = max(u0, t_l), min(u1, t_h)
        if u0 > u1:
            return None
    return u0, u1


def polyline_cover(pl: Polyline, cells: DyadicCellUnion) -> List[Interval1D]:
    """Carrier parameters whose points lie in the closed cell union (whole carrier, not just span)."""
    box, depth = cells.box, cells.depth
    side = box.side(depth)
    n = 2 ** depth
    found: List[Interval1D] = []
    for k in range(len(pl.vertices) - 1):
        p, q = pl.vertices[k], pl.vertices[k + 1]
        t0, t1 = pl.knots[k], pl.knots[k + 1]
        ranges = []
        for axis in range(box.dim):
            a, b = sorted((p[axis], q[axis]))
            i0 = max(0, math.floor((a - box.lo[axis]) / side[axis]) - 1)
            i1 = min(n - 1, math.floor((b - box.lo[axis]) / side[axis]) + 1)
            if i0 > i1:
                ranges = None
                break
            ranges.append(slice(i0, i1 + 1))
        if ranges is None:
            continue
        local = np.argwhere(cells.mask[tuple(ranges)])
        for c in local:
            index = tuple(int(c[i]) + ranges[i].start for i in range(box.dim))
            lo, hi = box.cell_bounds(depth, index)
            clipped = clip_segment(p, q, lo, hi)
            if clipped is not None:
                u0, u1 = clipped
                found.append(Interval1D(t0 + u0 * (t1 - t0), t0 + u1 * (t1 - t0)))
    region = interval_region(found)
    return list(interval_parts(region)) if region is not None else []


def _param_length(pl: Polyline, parts: Sequence[Interval1D]) -> float:
    total = 0.0
    for k, length in enumerate(pl.segment_lengths):
        seg = Interval1D(pl.knots[k], pl.knots[k + 1])
        covered = sum((x.length for x in intersect_interval_sets(parts, [seg])), Fraction(0))
        total += length * float(covered / seg.length)
    return total


def _point_segment_sq(x: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    d = q - p
    denom = float(d @ d)
    u = 0.0 if denom == 0 else min(1.0, max(0.0, float((x - p) @ d) / denom))
    r = p + u * d - x
    return float(r @ r)


def _segment_segment_sq(p1, q1, p2, q2) -> float:
    """Squared distance between two segments in any dimension (closest-point clamping)."""
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = float(d1 @ d1), float(d2 @ d2), float(d2 @ r)
    if a <= 0 and e <= 0:
        return float(r @ r)
    if a <= 0:
        s, t = 0.0, min(1.0, max(0.0, f / e))
    else:
        c = float(d1 @ r)
        if e <= 0:
            t, s = 0.0, min(1.0, max(0.0, -c / a))
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > 0 else 0.0
            t = (b * s + f) / e
            if t < 0:
                t, s = 0.0, min(1.0, max(0.0, -c / a))
            elif t > 1:
                t, s = 1.0, min(1.0, max(0.0, (b - c) / a))
    diff = (p1 + s * d1) - (p2 + t * d2)
    return float(diff @ diff)


def _segment_boxes_sq(p: np.ndarray, q: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Min squared distance from one segment to many boxes (rows of lo/hi).

    The squared distance along the segment is convex and piecewise quadratic
    with breakpoints where a coordinate crosses a box face; its minimum sits
    at a breakpoint, an end, or a piece's stationary point.
    """
    d = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t_faces = np.concatenate([(lo - p) / d, (hi - p) / d], axis=1)
    t_faces = np.where(np.isfinite(t_faces), np.clip(t_faces, 0.0, 1.0), 0.0)
    ts = np.sort(np.concatenate([np.zeros((len(lo), 1)), t_faces, np.ones((len(lo), 1))], axis=1), axis=1)

    def dist_sq(t):
        x = p[None, None, :] + t[..., None] * d[None, None, :]
        under = np.maximum(lo[:, None, :] - x, 0.0)
        over = np.maximum(x - hi[:, None, :], 0.0)
        return ((under + over) ** 2).sum(axis=2)

    mids = (ts[:, :-1] + ts[:, 1:]) / 2
    xm = p[None, None, :] + mids[..., None] * d[None, None, :]
    below = xm < lo[:, None, :]
    above = xm > hi[:, None, :]
    target = np.where(below, lo[:, None, :], np.where(above, hi[:, None, :], np.nan))
    active = below | above
    # stationary point of Σ_active (p + t d − target)^2
    num = np.where(active, (target - p[None, None, :]) * d[None, None, :], 0.0).sum(axis=2)
    den = np.where(active, np.broadcast_to(d * d, active.shape), 0.0).sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = np.where(den > 0, num / den, mids)
    t_star = np.clip(t_star, ts[:, :-1], ts[:, 1:])
    candidates = np.concatenate([ts, t_star], axis=1)
    return float(dist_sq(candidates).min())


def _polyline_distance_sq(pl: Polyline, other: Region) -> float:
    segments = pl.pieces()
    if isinstance(other, Atom):
        x = np.array([float(c) for c in other.point])
        return min(_point_segment_sq(x, p, q) for p, q in segments)
    if isinstance(other, Polyline):
        return min(_segment_segment_sq(p1, q1, p2, q2)
                   for p1, q1 in segments for p2, q2 in other.pieces())
    if isinstance(other, DyadicCellUnion):
        if _cover_meets_span(pl, other):
            return 0.0
        rects = _cell_rects(other)
        lo = np.array([[float(x) for x in r[0]] for r in rects])
        hi = np.array([[float(x) for x in r[1]] for r in rects])
        return min(_segment_boxes_sq(p, q, lo, hi) for p, q in segments)
    raise ClusteringError("dimension-mismatch", f"no distance between polyline and {other.kind}")


def _cover_meets_span(pl: Polyline, cells: DyadicCellUnion) -> bool:
    return bool(intersect_interval_sets(polyline_cover(pl, cells), interval_parts(pl.span)))


def _same_carrier(a: Polyline, b: Polyline) -> bool:
    return a.carrier == b.carrier


# =============================================================================
# OPERATIONS
# =============================================================================

def measure(r: Region) -> Union[Fraction, float]:
    """Reference measure of r: counting, length ℋ¹ or volume ℋ^d by dimension class."""
    if isinstance(r, Atom):
        return Fraction(1)
    if isinstance(r, (Interval1D, IntervalUnion)):
        return sum((p.length for p in interval_parts(r)), Fraction(0))
    if isinstance(r, DyadicCellUnion):
        return r.count * r.cell_volume
    if isinstance(r, Polyline):
        return _param_length(r, interval_parts(r.span))
    raise ClusteringError("invalid-region", f"unknown region {r!r}")


def point_in(r: Region, point: Point) -> bool:
    point = as_point(point)
    if isinstance(r, Atom):
        return r.point == point
    if len(point) != r.ambient_dim:
        return False
    if isinstance(r, (Interval1D, IntervalUnion)):
        return any(p.contains_value(point[0]) for p in interval_parts(r))
    if isinstance(r, DyadicCellUnion):
        if not r.box.contains_point(point):
            return False
        side, n = r.box.side(r.depth), 2 ** r.depth
        candidates = []
        for x, lo, s in zip(point, r.box.lo, side):
            u = (x - lo) / s
            i = math.floor(u)
            axis = {min(i, n - 1)}
            if u == i and i > 0:
                axis.add(i - 1)
            candidates.append(sorted(axis))
        return any(r.mask[idx] for idx in product(*candidates))
    if isinstance(r, Polyline):
        x = np.array([float(c) for c in point])
        return min(_point_segment_sq(x, p, q) for p, q in r.pieces()) <= settings.float_tolerance ** 2
    return False


def contains(outer: Region, inner: Region) -> bool:
    """Exact set inclusion inner ⊂ outer, honouring interval openness."""
    if isinstance(inner, Atom):
        return point_in(outer, inner.point)
    if isinstance(outer, Atom) or outer.ambient_dim != inner.ambient_dim:
        return False
    outer_iv, inner_iv = as_intervals(outer), as_intervals(inner)
    if outer_iv is not None and inner_iv is not None:
        return all(any(_interval_within(p, q) for q in outer_iv) for p in inner_iv)
    if isinstance(outer, DyadicCellUnion) and isinstance(inner, DyadicCellUnion):
        if outer.box == inner.box:
            mo, mi = common_depth(outer, inner)
            return not np.any(mi & ~mo)
        mo, mi, _ = compress_pair(outer, inner)
        return not np.any(mi & ~mo)
    if isinstance(inner, Polyline):
        if isinstance(outer, Polyline):
            if not _same_carrier(outer, inner):
                return False
            return all(any(_interval_within(p, q) for q in interval_parts(outer.span))
                       for p in interval_parts(inner.span))
        if isinstance(outer, DyadicCellUnion):
            cover = polyline_cover(inner, outer)
            return all(any(_interval_within(p, q) for q in cover) for p in interval_parts(inner.span))
    return False


def intersects(a: Region, b: Region) -> bool:
    """Whether the point sets share a point (closed cells touching at a corner do)."""
    if isinstance(a, Atom):
        return point_in(b, a.point)
    if isinstance(b, Atom):
        return point_in(a, b.point)
    if a.ambient_dim != b.ambient_dim:
        return False
    a_iv, b_iv = as_intervals(a), as_intervals(b)
    if a_iv is not None and b_iv is not None:
        return bool(intersect_interval_sets(a_iv, b_iv))
    if isinstance(a, DyadicCellUnion) and isinstance(b, DyadicCellUnion):
        if a.box == b.box:
            ma, mb = common_depth(a, b)
            return bool(np.any(_dilate(ma, neighbor_offsets(a.dim)) & mb))
        return min(_rect_gap_sq(x, y) for x in _cell_rects(a) for y in _cell_rects(b)) == 0
    if isinstance(a, Polyline) and isinstance(b, Polyline) and _same_carrier(a, b):
        return bool(intersect_interval_sets(interval_parts(a.span), interval_parts(b.span)))
    if isinstance(a, Polyline) and isinstance(b, DyadicCellUnion):
        return _cover_meets_span(a, b)
    if isinstance(b, Polyline) and isinstance(a, DyadicCellUnion):
        return _cover_meets_span(b, a)
    return distance_sq(a, b) <= settings.float_tolerance ** 2


def distance_sq(a: Region, b: Region) -> Union[Fraction, float]:
    """Squared infimum distance; exact Fraction unless a polyline is involved."""
    if a.ambient_dim != b.ambient_dim:
        raise ClusteringError("dimension-mismatch", f"regions live in ℝ^{a.ambient_dim} and ℝ^{b.ambient_dim}")
    if isinstance(a, Polyline):
        return _polyline_distance_sq(a, b)
    if isinstance(b, Polyline):
        return _polyline_distance_sq(b, a)
    if isinstance(a, Atom) and isinstance(b, Atom):
        return sum(((x - y) ** 2 for x, y in zip(a.point, b.point)), Fraction(0))
    if isinstance(b, Atom):
        a, b = b, a
    if isinstance(a, Atom):
        b_iv = as_intervals(b)
        if b_iv is not None:
            x = a.point[0]
            return min(max(Fraction(0), p.lo - x, x - p.hi) for p in b_iv) ** 2
        return min(_rect_gap_sq((a.point, a.point), r) for r in _cell_rects(b))
    a_iv, b_iv = as_intervals(a), as_intervals(b)
    if a_iv is not None and b_iv is not None:
        return min(max(Fraction(0), q.lo - p.hi, p.lo - q.hi) for p in a_iv for q in b_iv) ** 2
    if isinstance(a, DyadicCellUnion) and isinstance(b, DyadicCellUnion):
        if a.box == b.box:
            return _same_grid_gap_sq(a, b)
        return min(_rect_gap_sq(x, y) for x in _cell_rects(a) for y in _cell_rects(b))
    raise ClusteringError("dimension-mismatch", f"no distance between {a.kind} and {b.kind}")


def distance(a: Region, b: Region) -> Union[Fraction, float]:
    """Infimum Euclidean distance; 0 when the sets intersect or touch."""
    d2 = distance_sq(a, b)
    return exact_sqrt(d2) if isinstance(d2, Fraction) else math.sqrt(d2)


def intersection(a: Region, b: Region) -> Optional[Region]:
    """a ∩ b as a region of a's kind, or None when empty."""
    if isinstance(a, Atom):
        return a if point_in(b, a.point) else None
    if isinstance(b, Atom):
        return b if point_in(a, b.point) else None
    if a.ambient_dim != b.ambient_dim:
        return None
    a_iv, b_iv = as_intervals(a), as_intervals(b)
    if a_iv is not None and b_iv is not None:
        return interval_region(intersect_interval_sets(a_iv, b_iv))
    if isinstance(a, DyadicCellUnion) and isinstance(b, DyadicCellUnion):
        if a.box != b.box:
            raise ClusteringError("invalid-region", "intersection of cell unions on different boxes")
        ma, mb = common_depth(a, b)
        both = ma & mb
        return DyadicCellUnion.from_mask(a.box, max(a.depth, b.depth), both) if both.any() else None
    if isinstance(a, Polyline) and isinstance(b, Polyline):
        if not _same_carrier(a, b):
            return None
        span = interval_region(intersect_interval_sets(interval_parts(a.span), interval_parts(b.span)))
        return a.with_span(span) if span is not None else None
    if isinstance(b, Polyline):
        a, b = b, a
    if isinstance(a, Polyline) and isinstance(b, DyadicCellUnion):
        span = interval_region(intersect_interval_sets(interval_parts(a.span), polyline_cover(a, b)))
        return a.with_span(span) if span is not None else None
    return None


def union(regions: Sequence[Region]) -> Region:
    """Union of a same-kind family (intervals, same-box cells, same-carrier polylines, equal atoms)."""
    if not regions:
        raise ClusteringError("invalid-region", "union of no regions")
    first = regions[0]
    if all(isinstance(r, DyadicCellUnion) and r.box == first.box for r in regions):
        depth = max(r.depth for r in regions)
        mask = np.zeros(first.box.shape(depth), dtype=bool)
        for r in regions:
            mask |= refine_mask(r.mask, depth - r.depth)
        return DyadicCellUnion.from_mask(first.box, depth, mask)
    intervals = [as_intervals(r) for r in regions]
    if all(iv is not None for iv in intervals):
        return interval_region([p for iv in intervals for p in iv])
    if all(isinstance(r, Polyline) and _same_carrier(r, first) for r in regions):
        return first.with_span(interval_region([p for r in regions for p in interval_parts(r.span)]))
    if all(isinstance(r, Atom) and r == first for r in regions):
        return first
    raise ClusteringError("invalid-region", "union of regions of different kinds or carriers")


def intersection_measure(a: Region, b: Region) -> Union[Fraction, float]:
    """μ_{dim a}(a ∩ b): the reference measure of a's class restricted to b."""
    if isinstance(a, Atom):
        return Fraction(1) if point_in(b, a.point) else Fraction(0)
    if isinstance(b, Atom) or b.dim < a.dim:
        return Fraction(0) if not isinstance(a, Polyline) else 0.0
    if isinstance(a, DyadicCellUnion) and isinstance(b, DyadicCellUnion) and a.box != b.box:
        ma, mb, axes = compress_pair(a, b)
        widths = [np.array([y - x for x, y in zip(e, e[1:])], dtype=object) for e in axes]
        vol = widths[0]
        for w in widths[1:]:
            vol = np.multiply.outer(vol, w)
        both = ma & mb
        return sum(vol[both].tolist(), Fraction(0))
    x = intersection(a, b)
    if x is None:
        return Fraction(0) if not isinstance(a, Polyline) else 0.0
    return measure(x)
