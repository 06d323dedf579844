"""
Clustering Service

The clustering engines:

- cluster_simple: c(Q) = s(F_Q) for a simple measure
- cluster_density_grid: descending merge-tree sweep over the distinct
  cell values of a GridDensity; every branch is a structure node
- cluster_density_1d: exact level-set clustering of a piecewise-linear
  density through a parameterized chain skeleton
- canonical_simple_measure / grid_level_forest: a grid density viewed as
  the simple measure on its finite level forest

Key Design Decisions:
1. Union-find sweep: one pass over the cells sorted by value, so the
   grid engine never re-labels whole level sets
2. Exact events: 1D split levels are rational solutions of linear pieces,
   never sampled
3. Chains not levels: between two events the 1D level components move
   affinely, so two sample levels per event cell fix each chain's union
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from unicluster.config import get_settings
from unicluster.errors import ClusteringError
from unicluster.services.density import DensityModel1D, GridDensity
from unicluster.services.forest import Forest, ParamChain, ParamChainForest, structure
from unicluster.services.geometry import (
    DyadicCellUnion,
    Interval1D,
    Region,
    contains,
    interval_parts,
    interval_region,
    measure as reference_measure,
)
from unicluster.services.measure import SimpleMeasure
from unicluster.services.separation import SeparationRelation, grid_stencil, group_intervals, separated

settings = get_settings()
logger = logging.getLogger(__name__)


# =============================================================================
# UNION-FIND
# =============================================================================

class UnionFind:
    """Dictionary-based disjoint-set forest with union by rank and path compression.

    Works with any hashable type and does not store singleton sets.
    """

    def __init__(self):
        self._parents = {}
        self._ranks = {}

    def union(self, a, b):
        root_a, root_b = self.find(a), self.find(b)
        if root_a == root_b:
            return root_a
        rank_a = self._ranks.setdefault(root_a, 1)
        rank_b = self._ranks.setdefault(root_b, 1)
        if rank_a < rank_b:
            self._parents[root_a] = root_b
            return root_b
        self._parents[root_b] = root_a
        if rank_a == rank_b:
            self._ranks[root_a] += 1
        return root_a

    def find(self, a):
        if a not in self._parents:
            return a
        path = [a]
        root = self._parents[a]
        while root != path[-1]:
            path.append(root)
            root = self._parents.get(root, root)
        for node in path:
            self._parents[node] = root
        return root


# =============================================================================
# SIMPLE MEASURES
# =============================================================================

def cluster_simple(q: SimpleMeasure) -> Forest:
    """c(Q) = s(F_Q)."""
    return structure(q.forest)


# =============================================================================
# GRID ENGINE
# =============================================================================

@dataclass
class _Branch:
    cells: Optional[np.ndarray] = None
    level: Fraction = Fraction(0)
    parent: Optional[int] = None


@dataclass
class _SweepResult:
    branches: List[_Branch]
    level_regions: List[DyadicCellUnion] = field(default_factory=list)
    level_parents: List[Optional[int]] = field(default_factory=list)
    level_heights: List[Fraction] = field(default_factory=list)


def _sweep(grid: GridDensity, relation: SeparationRelation, record_levels: bool = False) -> _SweepResult:
    """Descending sweep over distinct values, merging ⊥-adjacent cells with a union-find."""
    shape = grid.values.shape
    flat = grid.values.ravel()
    size = flat.size
    stencil = np.array(grid_stencil(relation, grid.box, grid.depth), dtype=np.int64).reshape(-1, len(shape))
    active = np.zeros(size, dtype=bool)

    by_value: Dict[object, List[int]] = {}
    for i, v in enumerate(flat):
        if v > 0:
            by_value.setdefault(v, []).append(i)
    values = sorted(by_value, reverse=True)

    uf = UnionFind()
    members: Dict[int, List[int]] = {}
    branch_of: Dict[int, int] = {}
    node_of: Dict[int, int] = {}
    result = _SweepResult([])

    def as_mask(cells: List[int]) -> np.ndarray:
        mask = np.zeros(size, dtype=bool)
        mask[cells] = True
        return mask.reshape(shape)

    for rank, v in enumerate(values):
        lower = values[rank + 1] if rank + 1 < len(values) else Fraction(0)
        new = by_value[v]
        active[new] = True
        old_roots = list(members)
        coords = np.array(np.unravel_index(new, shape)).T
        for cell, coord in zip(new, coords):
            neighbours = coord[None, :] + stencil
            inside = np.all((neighbours >= 0) & (neighbours < np.array(shape)), axis=1)
            for n in np.ravel_multi_index(neighbours[inside].T, shape):
                if active[n]:
                    uf.union(cell, int(n))

        groups: Dict[int, Tuple[List[int], List[int]]] = {}
        for r in old_roots:
            groups.setdefault(uf.find(r), ([], []))[0].append(r)
        for c in new:
            groups.setdefault(uf.find(c), ([], []))[1].append(c)

        for root, (olds, fresh) in groups.items():
            if len(olds) >= 2:
                merged = len(result.branches)
                result.branches.append(_Branch())
                for r in olds:
                    branch = result.branches[branch_of.pop(r)]
                    branch.cells = as_mask(members[r])
                    branch.level = v
                    branch.parent = merged
                branch_of[root] = merged
            elif len(olds) == 1:
                branch_of[root] = branch_of.pop(olds[0])
            else:
                branch_of[root] = len(result.branches)
                result.branches.append(_Branch())

            lists = sorted((members.pop(r) for r in olds), key=len, reverse=True)
            cells = lists[0] if lists else []
            for extra in lists[1:]:
                cells.extend(extra)
            members[root] = cells

            if record_levels and (fresh or len(olds) != 1):
                node = len(result.level_regions)
                for r in olds:
                    result.level_parents[node_of.pop(r)] = node
                node_of[root] = node
                result.level_parents.append(None)
                result.level_heights.append(Fraction(0))
                result.level_regions.append(None)
            elif record_levels:
                node_of[root] = node_of.pop(olds[0])
            members[root].extend(fresh)

        if record_levels:
            for root, node in node_of.items():
                if result.level_regions[node] is None:
                    result.level_regions[node] = DyadicCellUnion.from_mask(
                        grid.box, grid.depth, as_mask(members[root]))
                result.level_heights[node] += v - lower
        logger.debug("[Grid] level %s: %d components", v, len(members))

    for root, b in branch_of.items():
        result.branches[b].cells = as_mask(members[root])
        result.branches[b].level = Fraction(0)
    return result


def cluster_density_grid(grid: GridDensity, relation: SeparationRelation) -> Forest:
    """s(F) of the level forest of a grid density; nodes carry split levels (roots 0)."""
    sweep = _sweep(grid, relation)
    regions = [DyadicCellUnion.from_mask(grid.box, grid.depth, b.cells) for b in sweep.branches]
    forest = Forest.from_parents(
        regions, relation, [b.parent for b in sweep.branches], [b.level for b in sweep.branches]
    )
    logger.info("[Grid] depth %d, %d distinct values -> %d clusters",
                grid.depth, len(grid.distinct_values), len(forest))
    return forest


def _level_measure(grid: GridDensity, relation: SeparationRelation) -> Tuple[Forest, Dict[Region, Fraction]]:
    sweep = _sweep(grid, relation, record_levels=True)
    forest = Forest.from_parents(sweep.level_regions, relation, sweep.level_parents)
    weights = {
        r: h * reference_measure(r) for r, h in zip(sweep.level_regions, sweep.level_heights)
    }
    return forest, weights


def grid_level_forest(grid: GridDensity, relation: SeparationRelation) -> Forest:
    """Every distinct ⊥-component of {f ≥ v} over the distinct cell values v."""
    return _level_measure(grid, relation)[0]


def canonical_simple_measure(grid: GridDensity, relation: SeparationRelation) -> SimpleMeasure:
    """f = Σ_k (v_k − v_{k−1}) 1_{f ≥ v_k} regrouped per component: weights (v_k − v_{k−1})·μ(A)."""
    forest, weights = _level_measure(grid, relation)
    return SimpleMeasure(forest, tuple(weights[r] for r in forest.nodes), source=grid)


# =============================================================================
# EXACT ONE-DIMENSIONAL ENGINE
# =============================================================================

def _components(f: DensityModel1D, relation: SeparationRelation, level: Fraction) -> List[List[Interval1D]]:
    region = f.level_set(level)
    if region is None:
        return []
    return group_intervals(list(interval_parts(region)), relation)


def tau_events(f: DensityModel1D, relation: SeparationRelation) -> List[Fraction]:
    """Levels strictly between critical levels at which a gap of {f > λ} equals τ."""
    if relation.kind != "tau":
        return []
    critical = f.critical_levels()
    events = []
    for lo, hi in zip(critical, critical[1:]):
        a, b = lo + (hi - lo) / 3, lo + 2 * (hi - lo) / 3
        parts_a = interval_parts(f.level_set(a))
        parts_b = interval_parts(f.level_set(b))
        if len(parts_a) != len(parts_b):
            continue
        for k in range(len(parts_a) - 1):
            gap_a = parts_a[k + 1].lo - parts_a[k].hi
            gap_b = parts_b[k + 1].lo - parts_b[k].hi
            if gap_a == gap_b:
                continue
            # gap(λ) is affine inside the cell
            at = a + (relation.tau - gap_a) * (b - a) / (gap_b - gap_a)
            if lo < at < hi:
                events.append(at)
    return sorted(set(events))


def event_levels(f: DensityModel1D, relation: SeparationRelation) -> List[Fraction]:
    return sorted(set(f.critical_levels()) | set(tau_events(f, relation)))


def _extrapolate(at_a: Sequence[Interval1D], at_b: Sequence[Interval1D], a: Fraction, b: Fraction,
                 target: Fraction) -> Region:
    """Union over λ ∈ (target, b] of an affinely moving family, from its members at a and b."""
    parts = []
    for pa, pb in zip(at_a, at_b):
        lo = pa.lo + (pa.lo - pb.lo) * (a - target) / (b - a)
        hi = pa.hi + (pa.hi - pb.hi) * (a - target) / (b - a)
        lo_closed = pa.lo_closed if pa.lo == pb.lo else False
        hi_closed = pa.hi_closed if pa.hi == pb.hi else False
        parts.append(Interval1D(lo, hi, lo_closed, hi_closed))
    return interval_region(parts)


def level_chain_forest(f: DensityModel1D, relation: SeparationRelation) -> ParamChainForest:
    """The level forest of f as parameterized chains, one per component per event cell."""
    events = event_levels(f, relation)
    chains: List[ParamChain] = []
    previous: List[Tuple[int, Region]] = []
    for lo, hi in zip(events, events[1:]):
        a, b = lo + (hi - lo) / 3, lo + 2 * (hi - lo) / 3
        comps_a, comps_b = _components(f, relation, a), _components(f, relation, b)
        if len(comps_a) != len(comps_b):
            raise ClusteringError("closure-separation-violation",
                                  f"component count changes inside the event cell ({lo}, {hi})", level=lo)
        _check_closures(comps_a, relation, a)
        current = []
        for ga, gb in zip(comps_a, comps_b):
            sample = interval_region(ga)
            parent = next((i for i, r in previous if contains(r, sample)), None)
            if previous and parent is None:
                raise ClusteringError("forest-violation", f"level component {sample} has no parent at level {lo}")
            chains.append(ParamChain(_extrapolate(ga, gb, a, b, lo), lo, hi, parent))
            current.append((len(chains) - 1, interval_region(gb)))
        previous = current
    return ParamChainForest(tuple(chains), relation)


def _check_closures(components: Sequence[Sequence[Interval1D]], relation: SeparationRelation, level) -> None:
    closures = [interval_region([p.closure() for p in comp]) for comp in components]
    for i in range(len(closures)):
        for j in range(i + 1, len(closures)):
            if not separated(relation, closures[i], closures[j]):
                raise ClusteringError("closure-separation-violation",
                                      f"closures of level components meet at level {level}", level=level)


def cluster_density_1d(f: DensityModel1D, relation: SeparationRelation) -> Forest:
    """Generalized structure of the level forest of f; leaves biject with the local maxima."""
    forest = level_chain_forest(f, relation).generalized_structure()
    logger.info("[Exact1D] %d event levels -> %d clusters", len(event_levels(f, relation)), len(forest))
    return forest


# =============================================================================
# CHECKS
# =============================================================================

def leaves_match_maxima(f: DensityModel1D, relation: SeparationRelation) -> bool:
    """Under disjointness the leaves of c(P) correspond one-to-one to the strict local maxima."""
    forest = cluster_density_1d(f, relation)
    leaf_count = sum(1 for kids in forest.children if not kids)
    return leaf_count == f.local_maxima_count()


def scale_invariant(density, relation: SeparationRelation, alpha) -> bool:
    """c(αP) = c(P) node for node."""
    engine = cluster_density_1d if isinstance(density, DensityModel1D) else cluster_density_grid
    return engine(density, relation).nodes == engine(density.scaled(alpha), relation).nodes
