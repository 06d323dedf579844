"""
Measure Service

Base measures α·Q_A (Q_A the normalized reference measure of A's
dimension class), simple measures Σ α_A Q_A on a ⊥-forest, levels,
restrictions, majorization and monotone-sequence checks.

Key Design Decisions:
1. One reference measure per dimension class: counting, length, volume
2. Flat densities: a simple measure is compared through its piecewise
   constant density on the common refinement of all node boundaries
3. Unique representation: duplicate regions are merged before the
   forest is validated
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from unicluster.config import get_settings
from unicluster.errors import ClusteringError
from unicluster.services.density import (
    DensityModel1D,
    GridDensity,
    MeasureSum,
    Number,
    PointMasses,
    density_leq,
)
from unicluster.services.forest import Forest
from unicluster.services.geometry import (
    Atom,
    DyadicCellUnion,
    Interval1D,
    Polyline,
    Region,
    as_intervals,
    as_rational,
    compressed_axes,
    interval_parts,
    intersection_measure,
    mask_on_axes,
    measure as reference_measure,
)
from unicluster.services.separation import SeparationRelation

settings = get_settings()
logger = logging.getLogger(__name__)


# =============================================================================
# MODELS
# =============================================================================

@dataclass(frozen=True)
class BaseMeasure:
    """α·Q_A with flat height α / μ(A)."""
    region: Region
    weight: Fraction

    def __post_init__(self):
        weight = as_rational(self.weight) if not isinstance(self.weight, float) else self.weight
        if weight <= 0:
            raise ClusteringError("invalid-region", f"base measure weight {weight} must be positive")
        if reference_measure(self.region) <= 0:
            raise ClusteringError("invalid-region", f"{self.region} has zero reference measure")
        object.__setattr__(self, "weight", weight)

    @property
    def height(self) -> Number:
        return self.weight / reference_measure(self.region)

    def mass(self, region: Region) -> Number:
        return self.weight * intersection_measure(self.region, region) / reference_measure(self.region)

    def total_mass(self) -> Number:
        return self.weight


@dataclass(frozen=True)
class SimpleMeasure:
    """Σ_{A ∈ forest} α_A Q_A; weights align with forest.nodes."""
    forest: Forest
    weights: Tuple[Number, ...]
    source: Optional[GridDensity] = field(default=None, compare=False, repr=False)

    @classmethod
    def empty(cls, relation: SeparationRelation) -> "SimpleMeasure":
        return cls(Forest.empty(relation), ())

    @classmethod
    def base(cls, region: Region, weight, relation: SeparationRelation) -> "SimpleMeasure":
        return validate_representation([(region, weight)], relation)

    @property
    def relation(self) -> SeparationRelation:
        return self.forest.relation

    @cached_property
    def terms(self) -> Tuple[BaseMeasure, ...]:
        return tuple(BaseMeasure(r, w) for r, w in zip(self.forest.nodes, self.weights))

    def weight_of(self, region: Region) -> Number:
        return self.weights[self.forest.index(region)]

    def mass(self, region: Region) -> Number:
        return sum((t.mass(region) for t in self.terms), Fraction(0))

    def box_integral(self, lo, hi) -> Number:
        total = Fraction(0)
        for t in self.terms:
            r = t.region
            if isinstance(r, Atom):
                inside = all(a <= x <= b for a, x, b in zip(lo, r.point, hi))
                total += t.weight if inside else 0
            elif as_intervals(r) is not None and len(lo) == 1:
                total += t.mass(Interval1D(lo[0], hi[0]))
            elif isinstance(r, DyadicCellUnion):
                total += t.height * _cells_in_box(r, lo, hi)
        return total

    def total_mass(self) -> Number:
        return sum(self.weights, Fraction(0))

    def scaled(self, alpha) -> "SimpleMeasure":
        alpha = as_rational(alpha)
        source = self.source.scaled(alpha) if self.source is not None else None
        return SimpleMeasure(self.forest, tuple(alpha * w for w in self.weights), source)

    def restricted(self, indices: Sequence[int]) -> "SimpleMeasure":
        """Q|_{F'} for the sub-forest on `indices`."""
        keep = sorted(set(indices))
        return SimpleMeasure(self.forest.subset(keep), tuple(self.weights[i] for i in keep))

    def to_density(self):
        """The flat density of Q as a density model (line, single-box grid, atoms, or their sum)."""
        if self.source is not None:
            return self.source
        classes = _flat_pieces(self)
        parts = []
        if classes.atoms:
            parts.append(PointMasses(tuple(classes.atoms.items())))
        if classes.line:
            parts.append(_line_density(classes.line))
        if classes.cells:
            parts.append(_grid_density(classes.cells))
        if classes.curves:
            raise ClusteringError("unsupported-dimension", "curve measures have no ambient density")
        if not parts:
            raise ClusteringError("invalid-region", "the zero measure has no density")
        return parts[0] if len(parts) == 1 else MeasureSum(tuple(parts))


def _cells_in_box(cells: DyadicCellUnion, lo, hi) -> Fraction:
    side = cells.box.side(cells.depth)
    overlaps = []
    for k in range(cells.box.dim):
        edges = cells.box.edges(cells.depth, k)
        overlaps.append(np.array(
            [max(Fraction(0), min(b, hi[k]) - max(a, lo[k])) for a, b in zip(edges, edges[1:])],
            dtype=object,
        ))
    w = overlaps[0]
    for extra in overlaps[1:]:
        w = np.multiply.outer(w, extra)
    return sum(w[cells.mask].tolist(), Fraction(0))


@dataclass(frozen=True)
class LevelMeasure:
    """λ_Q(A): the flat base measure collecting every ancestor's height on A."""
    node: Region
    base: BaseMeasure
    origin: SimpleMeasure


# =============================================================================
# OPERATIONS
# =============================================================================

def validate_representation(terms: Sequence[Tuple[Region, object]], relation: SeparationRelation) -> SimpleMeasure:
    """Σ α_A Q_A from (region, weight) pairs; equal regions merge, the rest must form a ⊥-forest."""
    merged: Dict[Region, Number] = {}
    for region, weight in terms:
        w = as_rational(weight) if not isinstance(weight, float) else weight
        if w <= 0:
            raise ClusteringError("invalid-region", f"weight {w} of {region} must be positive")
        merged[region] = merged.get(region, Fraction(0)) + w
    forest = Forest.build(list(merged), relation)
    return SimpleMeasure(forest, tuple(merged[r] for r in forest.nodes))


def level(q: SimpleMeasure, node: Region) -> LevelMeasure:
    i = q.forest.index(node)
    mu = reference_measure(node)
    weight = q.weights[i]
    for j in q.forest.ancestors(i):
        weight += q.weights[j] * mu / reference_measure(q.forest.nodes[j])
    return LevelMeasure(node, BaseMeasure(node, weight), q)


def restrict_below(q: SimpleMeasure, node: Region) -> SimpleMeasure:
    """Q|_{<A}: the terms strictly below A."""
    return q.restricted(q.forest.descendants(q.forest.index(node)))


def evaluate(q: Union[SimpleMeasure, BaseMeasure, LevelMeasure], region: Region) -> Number:
    """Q(B)."""
    if isinstance(q, LevelMeasure):
        q = q.base
    regions = [q.region] if isinstance(q, BaseMeasure) else list(q.forest.nodes)
    for r in regions:
        if r.ambient_dim != region.ambient_dim and not isinstance(r, Atom):
            raise ClusteringError("dimension-mismatch",
                                  f"{region} lives in ℝ^{region.ambient_dim}, the measure in ℝ^{r.ambient_dim}")
    return q.mass(region)


# =============================================================================
# FLAT DENSITIES & MAJORIZATION
# =============================================================================

@dataclass
class _FlatPieces:
    atoms: Dict[Tuple, Number]
    line: List[Tuple[Interval1D, Number]]
    cells: List[Tuple[DyadicCellUnion, Number]]
    curves: Dict[tuple, List[Tuple[Polyline, Number]]]


def _flat_pieces(q: Union[SimpleMeasure, BaseMeasure]) -> _FlatPieces:
    terms = [q] if isinstance(q, BaseMeasure) else q.terms
    out = _FlatPieces(defaultdict(lambda: Fraction(0)), [], [], defaultdict(list))
    for t in terms:
        r = t.region
        if isinstance(r, Atom):
            out.atoms[r.point] += t.weight
        elif isinstance(r, Polyline):
            out.curves[r.carrier].append((r, t.height))
        elif as_intervals(r) is not None and r.ambient_dim == 1 and not isinstance(r, DyadicCellUnion):
            out.line.extend((p, t.height) for p in as_intervals(r))
        else:
            out.cells.append((r, t.height))
    out.atoms = dict(out.atoms)
    out.curves = dict(out.curves)
    return out


def _elementary(points: Sequence[Fraction]) -> List[Tuple[Fraction, Fraction]]:
    xs = sorted(set(points))
    return list(zip(xs, xs[1:]))


def _height_at(pieces: Sequence[Tuple[Interval1D, Number]], x: Fraction) -> Number:
    return sum((h for p, h in pieces if p.contains_value(x)), Fraction(0))


def _height_grid(cells: Sequence[Tuple[DyadicCellUnion, Number]], axes) -> np.ndarray:
    heights = np.full(tuple(len(a) - 1 for a in axes), Fraction(0), dtype=object)
    for region, h in cells:
        heights = heights + np.where(mask_on_axes(region, axes), h, Fraction(0))
    return heights


def _line_density(line: Sequence[Tuple[Interval1D, Number]]) -> DensityModel1D:
    xs = sorted({x for p, _ in line for x in (p.lo, p.hi)})
    pieces = [_height_at(line, (a + b) / 2) for a, b in zip(xs, xs[1:])]
    points = [max(pieces[k - 1] if k > 0 else 0, pieces[k] if k < len(pieces) else 0) for k in range(len(xs))]
    return DensityModel1D.from_pieces(xs, [(h, h) for h in pieces], points)


def _grid_density(cells: Sequence[Tuple[DyadicCellUnion, Number]]) -> GridDensity:
    box = cells[0][0].box
    if any(c.box != box for c, _ in cells):
        raise ClusteringError("unsupported-dimension", "cell measures on different boxes have no common grid")
    depth = max(c.depth for c, _ in cells)
    axes = compressed_axes([(box, depth)])
    return GridDensity(box, depth, _height_grid(cells, axes))


def _compare_atoms(low: Dict, high) -> bool:
    for point, m in low.items():
        if isinstance(high, dict):
            if m > high.get(point, 0):
                return False
        elif m > high.mass(Atom(point)):
            return False
    return True


def _below_measure(a: _FlatPieces, b: _FlatPieces) -> bool:
    if not _compare_atoms(a.atoms, b.atoms):
        return False
    if a.line:
        points = [x for p, _ in a.line + b.line for x in (p.lo, p.hi)]
        for lo, hi in _elementary(points):
            mid = (lo + hi) / 2
            h = _height_at(a.line, mid)
            if h > 0 and h > _height_at(b.line, mid):
                return False
    if a.cells:
        if not b.cells:
            return False
        axes = compressed_axes([(c.box, c.depth) for c, _ in a.cells + b.cells])
        ha, hb = _height_grid(a.cells, axes), _height_grid(b.cells, axes)
        if any(x > y for x, y in zip(ha.flat, hb.flat)):
            return False
    for carrier, pieces in a.curves.items():
        other = b.curves.get(carrier, [])
        spans = [(p, h) for pl, h in pieces for p in interval_parts(pl.span)]
        other_spans = [(p, h) for pl, h in other for p in interval_parts(pl.span)]
        points = [x for p, _ in spans + other_spans for x in (p.lo, p.hi)]
        for lo, hi in _elementary(points):
            mid = (lo + hi) / 2
            h = _height_at(spans, mid)
            if h > 0 and h > _height_at(other_spans, mid):
                return False
    return True


def _below_density(a: _FlatPieces, density) -> bool:
    if not _compare_atoms(a.atoms, density):
        return False
    if a.curves:
        raise ClusteringError("dimension-mismatch", "curve measures compare only against measures on the same curve")
    if a.line:
        points = [x for p, _ in a.line for x in (p.lo, p.hi)]
        points += list(getattr(density, "breakpoints", ()))
        if isinstance(density, GridDensity):
            points += density.box.edges(density.depth, 0)
        for lo, hi in _elementary(points):
            h = _height_at(a.line, (lo + hi) / 2)
            if h > 0 and h > density.infimum((lo,), (hi,)):
                return False
    if a.cells:
        grids = [(c.box, c.depth) for c, _ in a.cells]
        if isinstance(density, GridDensity):
            grids.append((density.box, density.depth))
        axes = compressed_axes(grids)
        heights = _height_grid(a.cells, axes)
        for idx in np.argwhere(np.vectorize(lambda v: v > 0, otypes=[bool])(heights)):
            lo = tuple(axes[k][i] for k, i in enumerate(idx))
            hi = tuple(axes[k][i + 1] for k, i in enumerate(idx))
            if heights[tuple(idx)] > density.infimum(lo, hi):
                return False
    return True


def majorizes(low, high) -> bool:
    """low ≤ high setwise, i.e. `high` majorizes `low`.

    `low` is a simple or base measure; `high` is a simple or base measure
    or any density model exposing infimum() and mass().
    """
    if isinstance(low, SimpleMeasure) and not low.weights:
        return True
    if isinstance(low, SimpleMeasure) and low.source is not None:
        other = high.source if isinstance(high, SimpleMeasure) else high
        if isinstance(other, GridDensity) and other.box == low.source.box:
            return density_leq(low.source, other)
    a = _flat_pieces(low)
    if isinstance(high, (SimpleMeasure, BaseMeasure)):
        return _below_measure(a, _flat_pieces(high))
    return _below_density(a, high)


@dataclass(frozen=True)
class ConvergenceReport:
    ok: bool
    residual: Number


def monotone_convergence_check(sequence: Sequence[SimpleMeasure], density) -> ConvergenceReport:
    """Q_1 ≤ … ≤ Q_m ≤ P, with residual P(Ω) − Q_m(Ω)."""
    for n in range(len(sequence) - 1):
        if not majorizes(sequence[n], sequence[n + 1]):
            raise ClusteringError("monotonicity-violation", f"term {n + 1} does not majorize term {n}", index=n + 1)
    if sequence and not majorizes(sequence[-1], density):
        raise ClusteringError("monotonicity-violation", "the last term is not below P", index=len(sequence))
    last = sequence[-1].total_mass() if sequence else Fraction(0)
    residual = density.total_mass() - last
    logger.info("[Measure] monotone sequence of %d terms, residual mass %s", len(sequence), residual)
    return ConvergenceReport(True, residual)
