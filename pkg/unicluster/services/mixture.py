"""
Mixture Service

Measures that combine Hausdorff dimensions: atoms (0), densities on the
line or along polyline carriers (1) and grid densities on a box (d).
Each component is clustered by its own engine and the forests are
joined; nodes of different dimension classes never nest.

Key Design Decisions:
1. Niveau-line condition: where a lower-dimensional piece meets the
   support of a higher component, the higher density must be constant
   on it; this is checked, never assumed
2. Parameter domain: curve densities are clustered in the carrier
   parameter and mapped back as spans of the same carrier
3. Independent components: engines run in a thread pool, the union is
   assembled sequentially
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from unicluster.config import get_settings
from unicluster.errors import ClusteringError
from unicluster.services.clustering import cluster_density_1d, cluster_density_grid
from unicluster.services.density import DensityModel1D, GridDensity, Number
from unicluster.services.forest import Forest
from unicluster.services.geometry import (
    Atom,
    DyadicCellUnion,
    Interval1D,
    IntervalUnion,
    Polyline,
    Region,
    as_point,
    as_rational,
    clip_segment,
    intersection,
    interval_parts,
    intersects,
    point_in,
)
from unicluster.services.separation import SeparationRelation, separated

settings = get_settings()
logger = logging.getLogger(__name__)


# =============================================================================
# MODELS
# =============================================================================

@dataclass(frozen=True)
class DimComponent:
    """One dimension class of a mixture: exactly one payload is set."""
    dim: int
    atoms: Tuple[Tuple[Tuple[Fraction, ...], Fraction], ...] = ()
    density1d: Optional[DensityModel1D] = None
    carrier: Optional[Polyline] = None
    grid: Optional[GridDensity] = None
    source: Optional[object] = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.dim, int) or self.dim < 0:
            raise ClusteringError("unsupported-dimension", f"dimension {self.dim!r} is not a whole number")
        object.__setattr__(self, "atoms", tuple((as_point(p), as_rational(w)) for p, w in self.atoms))
        payloads = sum(x is not None for x in (self.density1d, self.grid)) + bool(self.atoms)
        if payloads != 1:
            raise ClusteringError("parse-error", "a mixture component carries exactly one payload")
        if self.atoms and self.dim != 0:
            raise ClusteringError("unsupported-dimension", "atoms form the 0-dimensional component")
        if self.density1d is not None and self.dim != 1:
            raise ClusteringError("unsupported-dimension", "line and curve densities are 1-dimensional")
        if self.grid is not None and self.dim != self.grid.dim:
            raise ClusteringError("unsupported-dimension", f"a {self.grid.dim}D grid cannot be dimension {self.dim}")
        if self.carrier is not None and self.density1d is None:
            raise ClusteringError("parse-error", "a carrier needs a 1D density along it")
        if self.atoms and any(w <= 0 for _, w in self.atoms):
            raise ClusteringError("invalid-region", "atom weights must be positive")

    @classmethod
    def of_atoms(cls, atoms) -> "DimComponent":
        return cls(0, atoms=tuple(atoms))

    @classmethod
    def on_line(cls, density: DensityModel1D) -> "DimComponent":
        return cls(1, density1d=density)

    @classmethod
    def on_curve(cls, density: DensityModel1D, carrier: Polyline) -> "DimComponent":
        return cls(1, density1d=density, carrier=carrier)

    @classmethod
    def on_grid(cls, grid: GridDensity, source=None) -> "DimComponent":
        return cls(grid.dim, grid=grid, source=source)

    @property
    def ambient_dim(self) -> int:
        if self.atoms:
            return len(self.atoms[0][0])
        if self.grid is not None:
            return self.grid.dim
        return self.carrier.ambient_dim if self.carrier is not None else 1

    def _sort_key(self):
        return (self.dim, str(self.carrier.vertices) if self.carrier is not None else "")

    def mass(self, region: Region) -> Number:
        """This component's measure of `region`; sets of the wrong kind are null sets."""
        if self.atoms:
            return sum((w for p, w in self.atoms if point_in(region, p)), Fraction(0))
        if self.grid is not None:
            return self.grid.mass(region) if isinstance(region, DyadicCellUnion) else Fraction(0)
        if self.carrier is not None:
            if isinstance(region, Atom):
                return Fraction(0)
            piece = intersection(self.carrier, region)
            return self.density1d.mass(piece.span) if piece is not None else Fraction(0)
        if isinstance(region, (Interval1D, IntervalUnion)):
            return self.density1d.mass(region)
        return Fraction(0)


@dataclass(frozen=True)
class MixtureMeasure:
    """Components ordered by increasing dimension."""
    components: Tuple[DimComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ClusteringError("parse-error", "a mixture needs at least one component")
        object.__setattr__(self, "components", tuple(sorted(self.components, key=DimComponent._sort_key)))

    def mass(self, region: Region) -> Number:
        return sum((c.mass(region) for c in self.components), Fraction(0))


@dataclass(frozen=True)
class MixtureCheck:
    ok: bool
    diagnostics: Tuple[str, ...]


# =============================================================================
# NIVEAU-LINE CONDITION
# =============================================================================

def _pieces(component: DimComponent, relation: SeparationRelation) -> List[Region]:
    """⊥-connected pieces of a component's support."""
    if component.atoms:
        return [Atom(p) for p, _ in component.atoms]
    roots = [r for r, p in zip(*_cluster(component, relation)[:2]) if p is None]
    return roots


def _crossed_cells(piece: Polyline, grid: GridDensity) -> List[Tuple[int, ...]]:
    """Grid cells the piece runs through for a positive parameter length."""
    box, depth = grid.box, grid.depth
    side, n = box.side(depth), 2 ** depth
    cells: Dict[Tuple[int, ...], None] = {}
    for part in interval_parts(piece.span):
        for k in range(len(piece.knots) - 1):
            a, b = max(part.lo, piece.knots[k]), min(part.hi, piece.knots[k + 1])
            if a >= b:
                continue
            p, q = piece.point_at(a), piece.point_at(b)
            ranges = []
            for axis in range(box.dim):
                x0, x1 = sorted((p[axis], q[axis]))
                i0 = max(0, math.floor((x0 - box.lo[axis]) / side[axis]))
                i1 = min(n - 1, math.floor((x1 - box.lo[axis]) / side[axis]))
                ranges.append(range(i0, i1 + 1))
            for index in itertools.product(*ranges):
                lo, hi = box.cell_bounds(depth, index)
                clipped = clip_segment(p, q, lo, hi)
                if clipped is not None and clipped[0] < clipped[1]:
                    cells[index] = None
    return list(cells)


def _values_along(piece: Region, high: DimComponent) -> List[Tuple[str, object]]:
    """Density of `high` on `piece`: the continuous source at vertices if known, else every crossed cell."""
    grid, source = high.grid, high.source
    if isinstance(piece, Atom):
        model = source if source is not None else (high.density1d if high.density1d is not None else grid)
        return [(str(piece), model(piece.point))]
    if source is not None:
        parts = interval_parts(piece.span)
        params = {p.lo for p in parts} | {p.hi for p in parts}
        params |= {k for k in piece.knots if any(p.contains_value(k) for p in parts)}
        return [(f"t={t}", source(piece.point_at(t))) for t in sorted(params)]
    return [(f"cell {cell}", grid.values[cell]) for cell in _crossed_cells(piece, grid)]


def check_mixture_condition(low: DimComponent, high: DimComponent,
                            relation: SeparationRelation = SeparationRelation()) -> MixtureCheck:
    """The higher density is constant on every ⊥-piece of the lower support that meets its support."""
    if low.dim >= high.dim:
        raise ClusteringError("dimension-mismatch", "the condition compares a lower with a higher dimension")
    if low.ambient_dim != high.ambient_dim:
        return MixtureCheck(True, ("different ambient spaces",))
    diagnostics = []
    ok = True
    high_support = _support(high, relation)
    for piece in _pieces(low, relation):
        if not any(intersects(piece, s) for s in high_support):
            diagnostics.append(f"{piece}: outside the higher support")
            continue
        values = _values_along(piece, high)
        if isinstance(piece, Atom):
            diagnostics.append(f"{piece}: density {values[0][1]}")
            continue
        exact = high.source is None or all(isinstance(v, Fraction) for _, v in values)
        tol = 0 if exact else settings.float_tolerance
        first_label, first = values[0]
        for label, v in values[1:]:
            if abs(v - first) > tol:
                ok = False
                diagnostics.append(f"{piece}: density {first} at {first_label} but {v} at {label}")
                break
        else:
            diagnostics.append(f"{piece}: constant density {first}")
    return MixtureCheck(ok, tuple(diagnostics))


def _support(component: DimComponent, relation: SeparationRelation) -> List[Region]:
    if component.grid is not None:
        return [component.grid.support()]
    return _pieces(component, relation)


# =============================================================================
# CLUSTERING
# =============================================================================

def _cluster(component: DimComponent, relation: SeparationRelation):
    """(regions, parents, levels) of one component's clustering."""
    if component.atoms:
        regions = [Atom(p) for p, _ in component.atoms]
        return regions, [None] * len(regions), [Fraction(0)] * len(regions)
    if component.grid is not None:
        forest = cluster_density_grid(component.grid, relation)
    else:
        forest = cluster_density_1d(component.density1d, relation)
    regions = list(forest.nodes)
    if component.carrier is not None:
        regions = [component.carrier.with_span(r) for r in regions]
    return regions, list(forest.parents), list(forest.levels)


def cluster_mixture(mixture: MixtureMeasure, relation: SeparationRelation) -> Forest:
    """Union of the per-component clusterings, after checking every dimension pair."""
    components = mixture.components
    for i, low in enumerate(components):
        for high in components[i + 1:]:
            if low.dim == high.dim:
                continue
            check = check_mixture_condition(low, high, relation)
            if not check.ok:
                raise ClusteringError("mixture-condition-failure", "; ".join(check.diagnostics),
                                      diagnostics=list(check.diagnostics))
    with ThreadPoolExecutor(max_workers=settings.max_workers) as pool:
        results = list(pool.map(lambda c: _cluster(c, relation), components))

    regions, parents, levels, roots = [], [], [], []
    for nodes, links, node_levels in results:
        offset = len(regions)
        component_roots = [offset + k for k, p in enumerate(links) if p is None]
        for r in component_roots:
            for other in roots:
                a, b = regions[other], nodes[r - offset]
                if a.dim == b.dim and not separated(relation, a, b):
                    raise ClusteringError("forest-violation",
                                          f"{a} and {b} belong to different components but are not separated",
                                          first=a, second=b)
        roots.extend(component_roots)
        regions.extend(nodes)
        parents.extend(offset + p if p is not None else None for p in links)
        levels.extend(node_levels)
    forest = Forest.from_parents(regions, relation, parents, levels)
    logger.info("[Mixture] %d components -> %d clusters", len(components), len(forest))
    return forest
