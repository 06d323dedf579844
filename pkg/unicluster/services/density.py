"""
Density Service

Density models the clustering engines consume:

- DensityModel1D: piecewise-linear density on the line with explicit
  point values at breakpoints (jumps for Merlon, M and Factory)
- BilinearDensity: a + b·x + c·y + e·x·y on a rectangle (the saddle)
- GridDensity: one value per dyadic cell, sampled from a continuous model
  at cell points ("center") or as the exact cell infimum ("lower")
- PointMasses / MeasureSum: atoms and sums, for null-set comparisons

Every model answers mass(region), box_integral(lo, hi), total_mass(),
sup() and scaled(alpha), which is all the forest and measure layers use.

Key Design Decisions:
1. Rational: values and integrals stay Fractions for rational input
2. Zero outside: every model vanishes outside its domain
3. Validated once: models reject negative values and spikes at construction
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from unicluster.config import get_settings
from unicluster.errors import ClusteringError
from unicluster.services.geometry import (
    Atom,
    Box,
    DyadicCellUnion,
    Interval1D,
    IntervalUnion,
    Polyline,
    Region,
    as_intervals,
    as_point,
    as_rational,
    compress_pair,
    interval_region,
    point_in,
    refine_mask,
)

settings = get_settings()
logger = logging.getLogger(__name__)

Number = Union[Fraction, float]


def _overlap(a: Fraction, b: Fraction, lo: Fraction, hi: Fraction) -> Fraction:
    return max(Fraction(0), min(b, hi) - max(a, lo))


# =============================================================================
# ONE-DIMENSIONAL PIECEWISE-LINEAR DENSITY
# =============================================================================

@dataclass(frozen=True)
class DensityModel1D:
    """f on [x_0, x_m]: linear from left[k] to right[k] on (x_k, x_{k+1}), points[k] at x_k, 0 outside."""
    breakpoints: Tuple[Fraction, ...]
    left: Tuple[Fraction, ...]
    right: Tuple[Fraction, ...]
    points: Tuple[Fraction, ...]

    def __post_init__(self):
        xs = tuple(as_rational(x) for x in self.breakpoints)
        left = tuple(as_rational(v) for v in self.left)
        right = tuple(as_rational(v) for v in self.right)
        points = tuple(as_rational(v) for v in self.points)
        if len(xs) < 2 or any(a >= b for a, b in zip(xs, xs[1:])):
            raise ClusteringError("invalid-region", "breakpoints must be at least two strictly increasing values")
        if len(left) != len(xs) - 1 or len(right) != len(xs) - 1 or len(points) != len(xs):
            raise ClusteringError("invalid-region", "one (left, right) pair per piece and one value per breakpoint")
        if min(left + right + points) < 0:
            raise ClusteringError("invalid-region", "density values must be nonnegative")
        for k, x in enumerate(xs):
            before = right[k - 1] if k > 0 else Fraction(0)
            after = left[k] if k < len(left) else Fraction(0)
            if points[k] not in (before, after):
                raise ClusteringError("invalid-region",
                                      f"value {points[k]} at {x} matches neither one-sided limit ({before}, {after})")
        object.__setattr__(self, "breakpoints", xs)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "points", points)
        count = self.local_maxima_count()
        if count > settings.max_local_maxima:
            raise ClusteringError("infinitely-many-maxima",
                                  f"{count} local maxima exceed the limit of {settings.max_local_maxima}")

    @classmethod
    def from_knots(cls, knots: Sequence[Tuple]) -> "DensityModel1D":
        """Continuous piecewise-linear density through (x, value) knots."""
        xs = [as_rational(x) for x, _ in knots]
        vs = [as_rational(v) for _, v in knots]
        return cls(tuple(xs), tuple(vs[:-1]), tuple(vs[1:]), tuple(vs))

    @classmethod
    def from_pieces(cls, breakpoints: Sequence, pieces: Sequence[Tuple], points: Sequence) -> "DensityModel1D":
        """Density with jumps: pieces[k] = (value after x_k, value before x_{k+1})."""
        return cls(
            tuple(as_rational(x) for x in breakpoints),
            tuple(as_rational(l) for l, _ in pieces),
            tuple(as_rational(r) for _, r in pieces),
            tuple(as_rational(p) for p in points),
        )

    @property
    def dim(self) -> int:
        return 1

    @property
    def domain(self) -> Interval1D:
        return Interval1D(self.breakpoints[0], self.breakpoints[-1])

    def _piece_value(self, k: int, x: Fraction) -> Fraction:
        x0, x1 = self.breakpoints[k], self.breakpoints[k + 1]
        return self.left[k] + (self.right[k] - self.left[k]) * (x - x0) / (x1 - x0)

    def value(self, x) -> Fraction:
        x = as_rational(x)
        xs = self.breakpoints
        if x < xs[0] or x > xs[-1]:
            return Fraction(0)
        for k, b in enumerate(xs):
            if x == b:
                return self.points[k]
        k = max(i for i in range(len(xs) - 1) if xs[i] < x)
        return self._piece_value(k, x)

    def __call__(self, point) -> Fraction:
        if isinstance(point, (tuple, list)):
            point = point[0]
        return self.value(point)

    def integral(self, a, b) -> Fraction:
        """∫_a^b f, exact."""
        a, b = as_rational(a), as_rational(b)
        total = Fraction(0)
        for k in range(len(self.left)):
            lo = max(a, self.breakpoints[k])
            hi = min(b, self.breakpoints[k + 1])
            if lo < hi:
                total += (hi - lo) * (self._piece_value(k, lo) + self._piece_value(k, hi)) / 2
        return total

    def mass(self, region: Region) -> Fraction:
        if isinstance(region, Atom):
            return Fraction(0)
        parts = as_intervals(region)
        if parts is None:
            raise ClusteringError("dimension-mismatch", f"a line density cannot weigh a {region.kind}")
        return sum((self.integral(p.lo, p.hi) for p in parts), Fraction(0))

    def box_integral(self, lo, hi) -> Fraction:
        return self.integral(lo[0], hi[0])

    def total_mass(self) -> Fraction:
        return self.integral(self.breakpoints[0], self.breakpoints[-1])

    def infimum(self, lo, hi) -> Fraction:
        """Essential infimum over the cell (lo, hi); 0 once the cell leaves the domain."""
        a, b = as_rational(lo[0] if isinstance(lo, tuple) else lo), as_rational(hi[0] if isinstance(hi, tuple) else hi)
        if a < self.breakpoints[0] or b > self.breakpoints[-1]:
            return Fraction(0)
        best = None
        for k in range(len(self.left)):
            x0, x1 = max(a, self.breakpoints[k]), min(b, self.breakpoints[k + 1])
            if x0 < x1:
                m = min(self._piece_value(k, x0), self._piece_value(k, x1))
                best = m if best is None else min(best, m)
        return best if best is not None else Fraction(0)

    def sup(self) -> Fraction:
        return max(self.left + self.right + self.points)

    def scaled(self, alpha) -> "DensityModel1D":
        alpha = as_rational(alpha)
        return DensityModel1D(
            self.breakpoints,
            tuple(alpha * v for v in self.left),
            tuple(alpha * v for v in self.right),
            tuple(alpha * v for v in self.points),
        )

    def critical_levels(self) -> List[Fraction]:
        """Every value the density takes at a breakpoint or piece end, plus 0."""
        return sorted(set(self.left) | set(self.right) | set(self.points) | {Fraction(0)})

    def level_set(self, level) -> Optional[Region]:
        """{f > level} with exact endpoint openness, or None when empty."""
        lam = as_rational(level)
        parts: List[Interval1D] = []
        for k, (l, r) in enumerate(zip(self.left, self.right)):
            x0, x1 = self.breakpoints[k], self.breakpoints[k + 1]
            if l > lam and r > lam:
                parts.append(Interval1D(x0, x1, False, False))
            elif l > lam:
                parts.append(Interval1D(x0, x0 + (l - lam) / (l - r) * (x1 - x0), False, False))
            elif r > lam:
                parts.append(Interval1D(x0 + (lam - l) / (r - l) * (x1 - x0), x1, False, False))
        parts.extend(Interval1D(x, x) for x, v in zip(self.breakpoints, self.points) if v > lam)
        return interval_region(parts)

    def ess_superlevel(self, level) -> List[Interval1D]:
        """Closed intervals of positive length on which f ≥ level, merged."""
        h = as_rational(level)
        parts: List[Interval1D] = []
        for k, (l, r) in enumerate(zip(self.left, self.right)):
            x0, x1 = self.breakpoints[k], self.breakpoints[k + 1]
            if l >= h and r >= h:
                parts.append(Interval1D(x0, x1))
            elif l > h:
                parts.append(Interval1D(x0, x0 + (l - h) / (l - r) * (x1 - x0)))
            elif r > h:
                parts.append(Interval1D(x0 + (h - l) / (r - l) * (x1 - x0), x1))
        region = interval_region(parts)
        if region is None:
            return []
        return list(region.parts) if isinstance(region, IntervalUnion) else [region]

    def local_maxima_count(self) -> int:
        sequence = [Fraction(0)]
        for l, r in zip(self.left, self.right):
            sequence.extend((l, r))
        sequence.append(Fraction(0))
        runs = [v for i, v in enumerate(sequence) if i == 0 or v != sequence[i - 1]]
        return sum(1 for i in range(1, len(runs) - 1) if runs[i - 1] < runs[i] > runs[i + 1])


# =============================================================================
# BILINEAR DENSITY
# =============================================================================

@dataclass(frozen=True)
class BilinearDensity:
    """f(x, y) = a + b·x + c·y + e·x·y on a rectangle, 0 outside."""
    box: Box
    a: Fraction
    b: Fraction = Fraction(0)
    c: Fraction = Fraction(0)
    e: Fraction = Fraction(0)

    def __post_init__(self):
        if self.box.dim != 2:
            raise ClusteringError("dimension-mismatch", "bilinear densities live on a rectangle")
        for name in ("a", "b", "c", "e"):
            object.__setattr__(self, name, as_rational(getattr(self, name)))
        if min(self._corner_values(self.box.lo, self.box.hi)) < 0:
            raise ClusteringError("invalid-region", "bilinear density is negative on its box")

    @property
    def dim(self) -> int:
        return 2

    def _raw(self, x: Fraction, y: Fraction) -> Fraction:
        return self.a + self.b * x + self.c * y + self.e * x * y

    def _corner_values(self, lo, hi) -> List[Fraction]:
        return [self._raw(x, y) for x in (lo[0], hi[0]) for y in (lo[1], hi[1])]

    def __call__(self, point) -> Fraction:
        p = as_point(point)
        if not self.box.contains_point(p):
            return Fraction(0)
        return self._raw(*p)

    def infimum(self, lo, hi) -> Fraction:
        """Exact infimum over a closed cell; bilinear extremes sit at corners."""
        lo, hi = as_point(lo), as_point(hi)
        if not (self.box.contains_point(lo) and self.box.contains_point(hi)):
            return Fraction(0)
        return min(self._corner_values(lo, hi))

    def box_integral(self, lo, hi) -> Fraction:
        lo, hi = as_point(lo), as_point(hi)
        x0, x1 = max(lo[0], self.box.lo[0]), min(hi[0], self.box.hi[0])
        y0, y1 = max(lo[1], self.box.lo[1]), min(hi[1], self.box.hi[1])
        if x0 >= x1 or y0 >= y1:
            return Fraction(0)
        w, h = x1 - x0, y1 - y0
        sx, sy = (x1 * x1 - x0 * x0) / 2, (y1 * y1 - y0 * y0) / 2
        return self.a * w * h + self.b * sx * h + self.c * w * sy + self.e * sx * sy

    def mass(self, region: Region) -> Fraction:
        if isinstance(region, (Atom, Polyline)):
            return Fraction(0)
        if not isinstance(region, DyadicCellUnion):
            raise ClusteringError("dimension-mismatch", f"a plane density cannot weigh a {region.kind}")
        return sum(
            (self.box_integral(*region.box.cell_bounds(region.depth, c)) for c in region.cells),
            Fraction(0),
        )

    def total_mass(self) -> Fraction:
        return self.box_integral(self.box.lo, self.box.hi)

    def sup(self) -> Fraction:
        return max(self._corner_values(self.box.lo, self.box.hi))

    def scaled(self, alpha) -> "BilinearDensity":
        alpha = as_rational(alpha)
        return BilinearDensity(self.box, alpha * self.a, alpha * self.b, alpha * self.c, alpha * self.e)


# =============================================================================
# GRID DENSITY
# =============================================================================

@dataclass(frozen=True, eq=False)
class GridDensity:
    """One nonnegative value per cell of the depth-`depth` dyadic grid on `box`."""
    box: Box
    depth: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=object)
        if values.shape != self.box.shape(self.depth):
            raise ClusteringError("invalid-region", f"grid values of shape {values.shape} do not match depth {self.depth}")
        if any(v < 0 for v in values.flat):
            raise ClusteringError("invalid-region", "grid values must be nonnegative")
        if not any(v > 0 for v in values.flat):
            raise ClusteringError("invalid-region", "grid density needs at least one positive cell")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(
        cls,
        f: Callable,
        box: Box,
        depth: int,
        sampling: str = "center",
        offset=None,
    ) -> "GridDensity":
        """Sample f per cell: at lo + offset·side ("center", offset 1/2) or the cell infimum ("lower")."""
        values = np.empty(box.shape(depth), dtype=object)
        if sampling == "lower":
            if not hasattr(f, "infimum"):
                raise ClusteringError("parse-error", "lower sampling needs a model with an exact cell infimum")
            for index in np.ndindex(*values.shape):
                values[index] = f.infimum(*box.cell_bounds(depth, index))
        elif sampling == "center":
            u = as_rational(offset) if offset is not None else Fraction(1, 2)
            if not 0 <= u <= 1:
                raise ClusteringError("parse-error", f"sampling offset {u} outside [0,1]")
            side = box.side(depth)
            for index in np.ndindex(*values.shape):
                point = tuple(lo + (i + u) * s for lo, i, s in zip(box.lo, index, side))
                values[index] = f(point)
        else:
            raise ClusteringError("parse-error", f"unknown sampling mode {sampling!r}")
        logger.debug("[Grid] sampled %s cells at depth %d (%s)", values.size, depth, sampling)
        return cls(box, depth, values)

    @classmethod
    def from_values(cls, box: Box, depth: int, values) -> "GridDensity":
        array = np.asarray(values, dtype=object)
        return cls(box, depth, np.vectorize(as_rational, otypes=[object])(array))

    @classmethod
    def indicator(cls, cells: DyadicCellUnion, weight=1) -> "GridDensity":
        values = np.full(cells.mask.shape, Fraction(0), dtype=object)
        values[cells.mask] = as_rational(weight)
        return cls(cells.box, cells.depth, values)

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def cell_volume(self) -> Fraction:
        return math.prod(self.box.side(self.depth), start=Fraction(1))

    @cached_property
    def distinct_values(self) -> Tuple[Number, ...]:
        """Distinct positive values, ascending."""
        return tuple(sorted({v for v in self.values.flat if v > 0}))

    def mask_at_least(self, level) -> np.ndarray:
        return np.vectorize(lambda v: v >= level, otypes=[bool])(self.values)

    def positive_mask(self) -> np.ndarray:
        return np.vectorize(lambda v: v > 0, otypes=[bool])(self.values)

    def support(self) -> DyadicCellUnion:
        return DyadicCellUnion.from_mask(self.box, self.depth, self.positive_mask())

    def refined(self, depth: int) -> "GridDensity":
        if depth < self.depth:
            raise ClusteringError("invalid-region", "grid densities only refine to finer depths")
        return GridDensity(self.box, depth, refine_mask(self.values, depth - self.depth))

    def __call__(self, point) -> Number:
        p = as_point(point)
        if not self.box.contains_point(p):
            return Fraction(0)
        side, n = self.box.side(self.depth), 2 ** self.depth
        index = tuple(min(math.floor((x - lo) / s), n - 1) for x, lo, s in zip(p, self.box.lo, side))
        return self.values[index]

    def box_integral(self, lo, hi) -> Number:
        """∫ over the box [lo, hi], exact for rational values."""
        lo, hi = as_point(lo), as_point(hi)
        side, n = self.box.side(self.depth), 2 ** self.depth
        slices, weights = [], []
        for k in range(self.dim):
            a, b = max(lo[k], self.box.lo[k]), min(hi[k], self.box.hi[k])
            if a >= b:
                return Fraction(0)
            i0 = max(0, math.floor((a - self.box.lo[k]) / side[k]))
            i1 = min(n - 1, math.ceil((b - self.box.lo[k]) / side[k]) - 1)
            edges = [self.box.lo[k] + i * side[k] for i in range(i0, i1 + 2)]
            slices.append(slice(i0, i1 + 1))
            weights.append(np.array([_overlap(x, y, a, b) for x, y in zip(edges, edges[1:])], dtype=object))
        w = weights[0]
        for extra in weights[1:]:
            w = np.multiply.outer(w, extra)
        return sum((self.values[tuple(slices)] * w).flat, Fraction(0))

    def infimum(self, lo, hi) -> Number:
        """Minimum over the cells meeting the open box (lo, hi); 0 outside the grid."""
        lo, hi = as_point(lo), as_point(hi)
        if not (self.box.contains_point(lo) and self.box.contains_point(hi)):
            return Fraction(0)
        side, n = self.box.side(self.depth), 2 ** self.depth
        slices = []
        for k in range(self.dim):
            i0 = max(0, math.floor((lo[k] - self.box.lo[k]) / side[k]))
            i1 = min(n - 1, math.ceil((hi[k] - self.box.lo[k]) / side[k]) - 1)
            slices.append(slice(i0, max(i0, i1) + 1))
        return min(self.values[tuple(slices)].flat)

    def mass(self, region: Region) -> Number:
        if isinstance(region, Atom):
            return Fraction(0)
        if isinstance(region, Polyline):
            if self.dim == 1:
                raise ClusteringError("dimension-mismatch", "a line grid cannot weigh a curve")
            return Fraction(0)
        if isinstance(region, DyadicCellUnion):
            if region.box == self.box:
                depth = max(region.depth, self.depth)
                mask = refine_mask(region.mask, depth - region.depth)
                values = refine_mask(self.values, depth - self.depth)
                volume = math.prod(self.box.side(depth), start=Fraction(1))
                return sum(values[mask].tolist(), Fraction(0)) * volume
            own = DyadicCellUnion.from_mask(self.box, self.depth, np.ones(self.box.shape(self.depth), dtype=bool))
            _, mask, axes = compress_pair(own, region)
            total = Fraction(0)
            for idx in np.argwhere(mask):
                total += self.box_integral(tuple(axes[k][i] for k, i in enumerate(idx)),
                                           tuple(axes[k][i + 1] for k, i in enumerate(idx)))
            return total
        parts = as_intervals(region)
        if parts is None or self.dim != 1:
            raise ClusteringError("dimension-mismatch", f"a {self.dim}D grid cannot weigh a {region.kind}")
        return sum((self.box_integral((p.lo,), (p.hi,)) for p in parts), Fraction(0))

    def total_mass(self) -> Number:
        return sum(self.values.flat, Fraction(0)) * self.cell_volume

    def sup(self) -> Number:
        return max(self.values.flat)

    def scaled(self, alpha) -> "GridDensity":
        alpha = as_rational(alpha)
        return GridDensity(self.box, self.depth, self.values * alpha)


# =============================================================================
# ATOMS & SUMS
# =============================================================================

@dataclass(frozen=True)
class PointMasses:
    """Σ w_i δ_{x_i}."""
    atoms: Tuple[Tuple[Tuple[Fraction, ...], Fraction], ...]

    def __post_init__(self):
        atoms = tuple((as_point(p), as_rational(w)) for p, w in self.atoms)
        if any(w <= 0 for _, w in atoms):
            raise ClusteringError("invalid-region", "atom weights must be positive")
        object.__setattr__(self, "atoms", atoms)

    @property
    def dim(self) -> int:
        return 0

    def mass(self, region: Region) -> Fraction:
        return sum((w for p, w in self.atoms if point_in(region, p)), Fraction(0))

    def box_integral(self, lo, hi) -> Fraction:
        lo, hi = as_point(lo), as_point(hi)
        return sum((w for p, w in self.atoms if all(a <= x <= b for a, x, b in zip(lo, p, hi))), Fraction(0))

    def __call__(self, point) -> Fraction:
        return Fraction(0)

    def infimum(self, lo, hi) -> Fraction:
        return Fraction(0)

    def total_mass(self) -> Fraction:
        return sum((w for _, w in self.atoms), Fraction(0))

    def sup(self) -> Fraction:
        return max(w for _, w in self.atoms)

    def scaled(self, alpha) -> "PointMasses":
        alpha = as_rational(alpha)
        return PointMasses(tuple((p, alpha * w) for p, w in self.atoms))


@dataclass(frozen=True)
class MeasureSum:
    """A finite sum of density models."""
    parts: Tuple[object, ...]

    def mass(self, region: Region) -> Number:
        return sum((p.mass(region) for p in self.parts), Fraction(0))

    def box_integral(self, lo, hi) -> Number:
        return sum((p.box_integral(lo, hi) for p in self.parts), Fraction(0))

    def __call__(self, point) -> Number:
        return sum((p(point) for p in self.parts), Fraction(0))

    def infimum(self, lo, hi) -> Number:
        return sum((p.infimum(lo, hi) for p in self.parts), Fraction(0))

    def total_mass(self) -> Number:
        return sum((p.total_mass() for p in self.parts), Fraction(0))

    def sup(self) -> Number:
        return max(p.sup() for p in self.parts)

    def scaled(self, alpha) -> "MeasureSum":
        return MeasureSum(tuple(p.scaled(alpha) for p in self.parts))


def density_leq(low: GridDensity, high: GridDensity) -> bool:
    """low ≤ high cellwise on the common refinement of two grids on one box."""
    if low.box != high.box:
        raise ClusteringError("dimension-mismatch", "grid densities on different boxes")
    depth = max(low.depth, high.depth)
    a = refine_mask(low.values, depth - low.depth)
    b = refine_mask(high.values, depth - high.depth)
    return all(x <= y for x, y in zip(a.flat, b.flat))
