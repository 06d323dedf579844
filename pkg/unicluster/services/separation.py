"""
Separation relations, ⊥-intersection graphs and unique ⊥-decomposition.

Two relations are supported: plain disjointness (closed cells touching at
a corner are NOT separated) and τ-separation (distance ≥ τ). Grid code
gets the matching neighbour stencil so labeling never compares cells
pairwise.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from unicluster.config import get_settings
from unicluster.errors import ClusteringError
from unicluster.services.geometry import (
    Box,
    DyadicCellUnion,
    Interval1D,
    Region,
    as_rational,
    distance_sq,
    intersects,
    neighbor_offsets,
    region_key,
)

settings = get_settings()
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeparationRelation:
    """⊥_∅ (kind="disjoint") or ⊥_τ (kind="tau", tau > 0)."""
    kind: str = "disjoint"
    tau: Optional[Fraction] = None

    def __post_init__(self):
        if self.kind not in ("disjoint", "tau"):
            raise ClusteringError("parse-error", f"unknown separation relation {self.kind!r}")
        if self.kind == "tau":
            tau = as_rational(self.tau) if self.tau is not None else None
            if tau is None or tau <= 0:
                raise ClusteringError("parse-error", "tau separation needs a positive tau")
            object.__setattr__(self, "tau", tau)
        elif self.tau is not None:
            raise ClusteringError("parse-error", "disjointness takes no tau")

    @classmethod
    def disjoint(cls) -> "SeparationRelation":
        return cls("disjoint")

    @classmethod
    def tau_separation(cls, tau) -> "SeparationRelation":
        return cls("tau", as_rational(tau))

    @classmethod
    def parse(cls, text: str) -> "SeparationRelation":
        """Parse the CLI form: "disjoint" or "tau:<p/q>"."""
        text = text.strip()
        if text == "disjoint":
            return cls.disjoint()
        if text.startswith("tau:"):
            return cls.tau_separation(text[4:])
        raise ClusteringError("parse-error", f"separation must be 'disjoint' or 'tau:<p/q>', got {text!r}")

    def __str__(self) -> str:
        return "disjoint" if self.kind == "disjoint" else f"tau:{self.tau}"


def separated(rel: SeparationRelation, r1: Region, r2: Region) -> bool:
    """r1 ⊥ r2. Float distances within tolerance of τ count as separated."""
    if rel.kind == "disjoint":
        return not intersects(r1, r2)
    if r1.ambient_dim != r2.ambient_dim:
        return True
    d2 = distance_sq(r1, r2)
    if isinstance(d2, Fraction):
        return d2 >= rel.tau * rel.tau
    return math.sqrt(d2) >= float(rel.tau) - settings.float_tolerance


# =============================================================================
# INTERSECTION GRAPHS
# =============================================================================

@dataclass(frozen=True)
class IntersectionGraph:
    """Nodes are regions; i–j is an edge iff ¬(node_i ⊥ node_j)."""
    nodes: Tuple[Region, ...]
    edges: FrozenSet[Tuple[int, int]]

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(len(self.nodes)))
        g.add_edges_from(self.edges)
        return g


def intersection_graph(rel: SeparationRelation, parts: Sequence[Region]) -> IntersectionGraph:
    nodes = tuple(parts)
    edges = frozenset(
        (i, j)
        for i in range(len(nodes))
        for j in range(i + 1, len(nodes))
        if not separated(rel, nodes[i], nodes[j])
    )
    return IntersectionGraph(nodes, edges)


def decompose(rel: SeparationRelation, parts: Sequence[Region]) -> List[List[Region]]:
    """Connected components of the intersection graph, in canonical order.

    Within a group every pair is joined by a ¬⊥ path; across groups all
    pairs are ⊥. The grouping does not depend on the input order.
    """
    if not parts:
        raise ClusteringError("invalid-region", "decompose needs at least one region")
    graph = intersection_graph(rel, parts).to_networkx()
    groups = [sorted((parts[i] for i in comp), key=region_key) for comp in nx.connected_components(graph)]
    return sorted(groups, key=lambda g: region_key(g[0]))


def is_connected_union(rel: SeparationRelation, parts: Sequence[Region]) -> bool:
    return len(decompose(rel, parts)) == 1


def group_intervals(parts: Sequence[Interval1D], rel: SeparationRelation) -> List[List[Interval1D]]:
    """⊥-components of sorted pairwise-disjoint intervals: runs of consecutive non-separated parts."""
    groups: List[List[Interval1D]] = []
    for p in sorted(parts, key=lambda q: (q.lo, not q.lo_closed)):
        if groups and not separated(rel, groups[-1][-1], p):
            groups[-1].append(p)
        else:
            groups.append([p])
    return groups


# =============================================================================
# GRID STENCILS & LABELING
# =============================================================================

def grid_stencil(rel: SeparationRelation, box: Box, depth: int) -> List[Tuple[int, ...]]:
    """Index offsets Δ ≠ 0 whose closed cells are NOT separated from the origin cell.

    For τ: the per-axis gap between cells Δ apart is max(|Δ_k| − 1, 0)·side_k,
    and cells are joined iff Σ gap_k² < τ².
    """
    if rel.kind == "disjoint":
        return neighbor_offsets(box.dim)
    side = box.side(depth)
    reach = [math.ceil(rel.tau / s) + 1 for s in side]
    axes = [np.arange(-r, r + 1) for r in reach]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, box.dim)
    tau_sq = rel.tau * rel.tau
    out = []
    for offset in grid:
        if not offset.any():
            continue
        gap_sq = sum((max(abs(int(o)) - 1, 0) * s) ** 2 for o, s in zip(offset, side))
        if gap_sq < tau_sq:
            out.append(tuple(int(o) for o in offset))
    return out


def label_mask(mask: np.ndarray, rel: SeparationRelation, box: Box, depth: int) -> Tuple[np.ndarray, int]:
    """Label the ⊥-components of a cell mask; 0 is background, components are 1..n in scan order."""
    if rel.kind == "disjoint":
        labels, count = ndimage.label(mask, structure=np.ones((3,) * mask.ndim, dtype=bool))
        return labels, int(count)

    index = -np.ones(mask.shape, dtype=np.int64)
    n = int(mask.sum())
    index[mask] = np.arange(n)
    rows, cols = [], []
    for offset in grid_stencil(rel, box, depth):
        if offset <= tuple(0 for _ in offset):
            continue  # each undirected pair once
        if any(abs(o) >= size for o, size in zip(offset, mask.shape)):
            continue
        src = tuple(slice(max(0, -o), size - max(0, o)) for o, size in zip(offset, mask.shape))
        dst = tuple(slice(max(0, o), size - max(0, -o)) for o, size in zip(offset, mask.shape))
        a, b = index[src], index[dst]
        both = (a >= 0) & (b >= 0)
        rows.append(a[both])
        cols.append(b[both])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    graph = sparse.coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    count, component = csgraph.connected_components(graph, directed=False)
    labels = np.zeros(mask.shape, dtype=np.int64)
    labels[mask] = component + 1
    return labels, int(count)


def cell_components(mask: np.ndarray, rel: SeparationRelation, box: Box, depth: int) -> List[DyadicCellUnion]:
    labels, count = label_mask(mask, rel, box, depth)
    return [DyadicCellUnion.from_mask(box, depth, labels == k) for k in range(1, count + 1)]
