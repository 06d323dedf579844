"""
Forest Service

Finite ⊥-forests: sets of regions in which any two nodes are nested or
separated. Holds the structure operation s(F), sub-forest queries, the
forest relating map (FRM) witnessing F ≤ F', isomonotone limits of
finite sequences, and equality up to P-null symmetric differences.

Nodes of different dimension classes never nest: a lower-dimensional
node is a null set for the higher reference measure. Such pairs are
exempt from the nested-or-separated requirement (mixture forests).
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from unicluster.config import get_settings
from unicluster.errors import ClusteringError
from unicluster.services.geometry import (
    DyadicCellUnion,
    Polyline,
    Region,
    as_intervals,
    compress_pair,
    common_depth,
    contains,
    interval_parts,
    interval_region,
    interval_set_difference,
    region_key,
    union,
)
from unicluster.services.separation import SeparationRelation, separated

settings = get_settings()
logger = logging.getLogger(__name__)


# =============================================================================
# FOREST
# =============================================================================

@dataclass(frozen=True)
class Forest:
    """Canonically ordered nodes with parent links and optional split levels."""
    nodes: Tuple[Region, ...]
    relation: SeparationRelation
    parents: Tuple[Optional[int], ...]
    levels: Tuple[Optional[Fraction], ...] = ()

    def __post_init__(self):
        if not self.levels:
            object.__setattr__(self, "levels", (None,) * len(self.nodes))

    @classmethod
    def empty(cls, relation: SeparationRelation) -> "Forest":
        return cls((), relation, ())

    @classmethod
    def build(
        cls,
        regions: Sequence[Region],
        relation: SeparationRelation,
        levels: Optional[Sequence[Optional[Fraction]]] = None,
    ) -> "Forest":
        """Validate the ⊥-forest property and derive parents from inclusion."""
        levels = list(levels) if levels is not None else [None] * len(regions)
        seen: Dict[Region, Optional[Fraction]] = {}
        for r, lv in zip(regions, levels):
            seen.setdefault(r, lv)
        nodes = sorted(seen, key=region_key)
        n = len(nodes)
        ancestors: List[List[int]] = [[] for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                a, b = nodes[i], nodes[j]
                if a.dim != b.dim:
                    continue
                a_in_b, b_in_a = contains(b, a), contains(a, b)
                if a_in_b and b_in_a:
                    raise ClusteringError("forest-violation", f"{a} and {b} are the same set",
                                          first=a, second=b)
                if a_in_b:
                    ancestors[i].append(j)
                elif b_in_a:
                    ancestors[j].append(i)
                elif not separated(relation, a, b):
                    raise ClusteringError("forest-violation", f"{a} and {b} are neither nested nor separated",
                                          first=a, second=b)
        parents = tuple(
            max(anc, key=lambda j: len(ancestors[j])) if anc else None
            for anc in ancestors
        )
        return cls(tuple(nodes), relation, parents, tuple(seen[r] for r in nodes))

    @classmethod
    def from_parents(
        cls,
        regions: Sequence[Region],
        relation: SeparationRelation,
        parents: Sequence[Optional[int]],
        levels: Optional[Sequence[Optional[Fraction]]] = None,
    ) -> "Forest":
        """Trusted constructor for engine output: reorders canonically, keeps the given links."""
        levels = list(levels) if levels is not None else [None] * len(regions)
        order = sorted(range(len(regions)), key=lambda i: region_key(regions[i]))
        position = {old: new for new, old in enumerate(order)}
        return cls(
            tuple(regions[i] for i in order),
            relation,
            tuple(position[parents[i]] if parents[i] is not None else None for i in order),
            tuple(levels[i] for i in order),
        )

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    @cached_property
    def _index(self) -> Dict[Region, int]:
        return {r: i for i, r in enumerate(self.nodes)}

    def index(self, region: Region) -> int:
        try:
            return self._index[region]
        except KeyError:
            raise ClusteringError("node-not-found", f"{region} is not a node of the forest", node=region)

    @cached_property
    def children(self) -> Tuple[Tuple[int, ...], ...]:
        kids: List[List[int]] = [[] for _ in self.nodes]
        for i, p in enumerate(self.parents):
            if p is not None:
                kids[p].append(i)
        return tuple(tuple(k) for k in kids)

    @property
    def root_indices(self) -> Tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.parents) if p is None)

    def ancestors(self, i: int) -> List[int]:
        out = []
        p = self.parents[i]
        while p is not None:
            out.append(p)
            p = self.parents[p]
        return out

    def descendants(self, i: int) -> List[int]:
        out, stack = [], list(self.children[i])
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.children[j])
        return sorted(out)

    def level_of(self, region: Region) -> Optional[Fraction]:
        return self.levels[self.index(region)]

    def sibling_sets(self) -> List[Tuple[int, ...]]:
        """Groups of direct siblings (same parent, or all roots) with at least two members."""
        groups = [self.root_indices] + [c for c in self.children]
        return [g for g in groups if len(g) >= 2]

    def subset(self, keep: Sequence[int]) -> "Forest":
        """The sub-forest on `keep`; each node links to its nearest kept ancestor."""
        kept = set(keep)
        position = {old: new for new, old in enumerate(sorted(kept))}
        parents = []
        for i in sorted(kept):
            p = self.parents[i]
            while p is not None and p not in kept:
                p = self.parents[p]
            parents.append(position[p] if p is not None else None)
        return Forest(
            tuple(self.nodes[i] for i in sorted(kept)),
            self.relation,
            tuple(parents),
            tuple(self.levels[i] for i in sorted(kept)),
        )

    def node_set(self) -> frozenset:
        return frozenset(self.nodes)

    def shape(self) -> str:
        """Canonical (AHU) encoding of the unordered forest shape, tagged by dimension class."""
        def encode(i: int) -> str:
            return f"{self.nodes[i].dim}(" + "".join(sorted(encode(c) for c in self.children[i])) + ")"
        return "".join(sorted(encode(r) for r in self.root_indices))


# =============================================================================
# PARAMETERIZED CHAINS
# =============================================================================

@dataclass(frozen=True)
class ParamChain:
    """A decreasing family {B(λ) : λ ∈ (level_lo, level_hi)} stored as its union."""
    union: Region
    level_lo: Fraction
    level_hi: Fraction
    parent: Optional[int] = None


@dataclass(frozen=True)
class ParamChainForest:
    """A finite skeleton of parameterized chains standing in for an infinite level forest."""
    chains: Tuple[ParamChain, ...]
    relation: SeparationRelation

    def validate(self) -> None:
        for i, chain in enumerate(self.chains):
            if chain.parent is None:
                continue
            parent = self.chains[chain.parent]
            if not contains(parent.union, chain.union):
                raise ClusteringError("forest-violation", f"chain {chain.union} escapes its parent {parent.union}",
                                      first=chain.union, second=parent.union)
            if parent.level_hi > chain.level_lo:
                raise ClusteringError("forest-violation", f"chain {i} starts below its parent's levels")

    def generalized_structure(self) -> Forest:
        """Replace every maximal pure chain by its union and keep roots and sibling-bearing chains."""
        self.validate()
        parents = [c.parent for c in self.chains]
        keep = _structure_indices(parents)
        kept_regions, kept_parents, kept_levels = [], [], []
        position = {old: new for new, old in enumerate(keep)}
        keep_set = set(keep)
        for i in keep:
            p = parents[i]
            while p is not None and p not in keep_set:
                p = parents[p]
            kept_regions.append(self.chains[i].union)
            kept_parents.append(position[p] if p is not None else None)
            kept_levels.append(self.chains[i].level_lo)
        return Forest.from_parents(kept_regions, self.relation, kept_parents, kept_levels)


def _structure_indices(parents: Sequence[Optional[int]]) -> List[int]:
    counts: Dict[int, int] = {}
    for p in parents:
        if p is not None:
            counts[p] = counts.get(p, 0) + 1
    return [i for i, p in enumerate(parents) if p is None or counts[p] >= 2]


# =============================================================================
# OPERATIONS
# =============================================================================

def structure(forest: Forest) -> Forest:
    """s(F): roots plus every node with a direct sibling."""
    return forest.subset(_structure_indices(forest.parents))


def roots(forest: Forest) -> Forest:
    return forest.subset(forest.root_indices)


def leaves(forest: Forest) -> Forest:
    return forest.subset([i for i, kids in enumerate(forest.children) if not kids])


def ground(forest: Forest) -> Region:
    """Gr(F): the union of the roots."""
    if not forest.nodes:
        raise ClusteringError("node-not-found", "the empty forest has no ground")
    return union([forest.nodes[i] for i in forest.root_indices])


def sub_forest(forest: Forest, node: Region, mode: str) -> Forest:
    """F_{>A}, F_{≥A}, F_{≤A} or F_{<A} for mode ">", ">=", "<=", "<"."""
    i = forest.index(node)
    if mode == ">":
        keep = forest.ancestors(i)
    elif mode == ">=":
        keep = [i] + forest.ancestors(i)
    elif mode == "<":
        keep = forest.descendants(i)
    elif mode == "<=":
        keep = [i] + forest.descendants(i)
    else:
        raise ClusteringError("parse-error", f"unknown sub-forest mode {mode!r}")
    return forest.subset(keep)


@dataclass(frozen=True)
class ForestRelatingMap:
    """ζ: domain → codomain, an inclusion-preserving bijection with A ⊂ ζ(A)."""
    domain: Forest
    codomain: Forest
    mapping: Tuple[int, ...]

    def __call__(self, region: Region) -> Region:
        return self.codomain.nodes[self.mapping[self.domain.index(region)]]

    def then(self, other: "ForestRelatingMap") -> "ForestRelatingMap":
        """Composition: self followed by other."""
        return ForestRelatingMap(self.domain, other.codomain, tuple(other.mapping[j] for j in self.mapping))


def frm(f1: Forest, f2: Forest) -> ForestRelatingMap:
    """The unique FRM witnessing F1 ≤ F2, matched root-first through containment."""
    if len(f1) != len(f2) or f1.shape() != f2.shape():
        raise ClusteringError("not-isomorphic", f"forests of shape {f1.shape()} and {f2.shape()} differ")
    mapping: Dict[int, int] = {}

    def match(src: Sequence[int], dst: Sequence[int]) -> None:
        if len(src) != len(dst):
            raise ClusteringError("isomorphic-but-not-contained", "containment pairs nodes with different sibling counts")
        used = set()
        for i in src:
            a = f1.nodes[i]
            candidates = [j for j in dst if f2.nodes[j].dim == a.dim and contains(f2.nodes[j], a)]
            if len(candidates) != 1 or candidates[0] in used:
                raise ClusteringError("isomorphic-but-not-contained", f"{a} has no unique container in the larger forest",
                                      node=a)
            j = candidates[0]
            used.add(j)
            mapping[i] = j
            match(f1.children[i], f2.children[j])

    match(f1.root_indices, f2.root_indices)
    return ForestRelatingMap(f1, f2, tuple(mapping[i] for i in range(len(f1))))


def isomonotone_limit(sequence: Sequence[Forest]) -> Forest:
    """Node-wise union along the FRM chains of s(F_1) ≤ s(F_2) ≤ … ≤ s(F_m)."""
    if not sequence:
        raise ClusteringError("monotonicity-violation", "empty forest sequence", index=0)
    structures = [structure(f) for f in sequence]
    maps: List[ForestRelatingMap] = []
    for n in range(len(structures) - 1):
        try:
            maps.append(frm(structures[n], structures[n + 1]))
        except ClusteringError as e:
            raise ClusteringError("monotonicity-violation",
                                  f"term {n + 1} does not dominate term {n} ({e.code})", index=n + 1)
    last = structures[-1]
    chains: List[List[Region]] = [[r] for r in last.nodes]
    # walk each final node back through the earlier terms
    for n in range(len(maps) - 1, -1, -1):
        composed = maps[n]
        for k in range(n + 1, len(maps)):
            composed = composed.then(maps[k])
        inverse = {j: i for i, j in enumerate(composed.mapping)}
        for j, chain in enumerate(chains):
            chain.append(structures[n].nodes[inverse[j]])
    regions = []
    for chain in chains:
        try:
            regions.append(union(chain))
        except ClusteringError as e:
            raise ClusteringError("forest-violation", f"limit node has no common representation ({e.message})",
                                  chain=[str(r) for r in chain])
    return Forest.from_parents(regions, last.relation, last.parents, last.levels)


# =============================================================================
# EQUALITY UP TO NULL SETS
# =============================================================================

@dataclass(frozen=True)
class NullEquality:
    """Outcome of F1 =_P F2: the witness isomorphism and the worst symmetric-difference mass."""
    equal: bool
    mapping: Optional[Tuple[int, ...]]
    worst: object
    tolerance: object


def symmetric_difference_mass(density, a: Region, b: Region):
    """P(a △ b) for any density exposing mass(region) and box_integral(lo, hi)."""
    if a == b:
        return Fraction(0)
    a_iv, b_iv = as_intervals(a), as_intervals(b)
    if a_iv is not None and b_iv is not None:
        parts = interval_set_difference(a_iv, b_iv) + interval_set_difference(b_iv, a_iv)
        region = interval_region(parts)
        return density.mass(region) if region is not None else Fraction(0)
    if isinstance(a, DyadicCellUnion) and isinstance(b, DyadicCellUnion):
        if a.box == b.box:
            ma, mb = common_depth(a, b)
            xor = ma ^ mb
            if not xor.any():
                return Fraction(0)
            return density.mass(DyadicCellUnion.from_mask(a.box, max(a.depth, b.depth), xor))
        ma, mb, axes = compress_pair(a, b)
        total = Fraction(0)
        for idx in np.argwhere(ma ^ mb):
            lo = tuple(axes[k][i] for k, i in enumerate(idx))
            hi = tuple(axes[k][i + 1] for k, i in enumerate(idx))
            total += density.box_integral(lo, hi)
        return total
    if isinstance(a, Polyline) and isinstance(b, Polyline) and a.carrier == b.carrier:
        sa, sb = interval_parts(a.span), interval_parts(b.span)
        span = interval_region(interval_set_difference(sa, sb) + interval_set_difference(sb, sa))
        return density.mass(a.with_span(span)) if span is not None else Fraction(0)
    return density.mass(a) + density.mass(b)


def equal_mod_P(f1: Forest, f2: Forest, density, tolerance=None) -> NullEquality:
    """F1 =_P F2: a shape isomorphism whose node symmetric differences have P-mass ≤ tolerance.

    Default tolerance is exact zero when every mass is rational, else
    float_tolerance · P(Ω).
    """
    if len(f1) != len(f2) or f1.shape() != f2.shape():
        return NullEquality(False, None, None, tolerance)
    cache: Dict[Tuple[int, int], object] = {}

    def cost(i: int, j: int):
        if (i, j) not in cache:
            a, b = f1.nodes[i], f2.nodes[j]
            cache[(i, j)] = symmetric_difference_mass(density, a, b) if a.dim == b.dim else None
        return cache[(i, j)]

    mapping: Dict[int, int] = {}
    worst = [Fraction(0)]

    def limit(value):
        if tolerance is not None:
            return tolerance
        if isinstance(value, Fraction):
            return Fraction(0)
        return settings.float_tolerance * float(density.total_mass())

    def match(src: Sequence[int], dst: Sequence[int]) -> bool:
        if len(src) != len(dst):
            return False
        if not src:
            return True
        matrix = np.array([[float(cost(i, j)) if cost(i, j) is not None else 1e300 for j in dst] for i in src])
        rows, cols = linear_sum_assignment(matrix)
        for r, c in zip(rows, cols):
            i, j = src[r], dst[c]
            value = cost(i, j)
            if value is None or value > limit(value):
                return False
            worst[0] = max(worst[0], value)
            mapping[i] = j
            if not match(f1.children[i], f2.children[j]):
                return False
        return True

    if not match(f1.root_indices, f2.root_indices):
        return NullEquality(False, None, worst[0], tolerance)
    return NullEquality(True, tuple(mapping[i] for i in range(len(f1))), worst[0], tolerance)
