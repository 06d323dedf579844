"""Separation relations, intersection graphs and ⊥-decompositions."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import ndimage

from unicluster.errors import ClusteringError
from unicluster.services.geometry import Box, DyadicCellUnion, Interval1D, union
from unicluster.services.separation import (
    SeparationRelation,
    cell_components,
    decompose,
    grid_stencil,
    intersection_graph,
    is_connected_union,
    separated,
)

F = Fraction
SQUARE = Box((-1, -1), (1, 1))
DISJOINT = SeparationRelation.disjoint()

cells_8 = st.sets(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=1, max_size=24)


def cells(*indices, depth=3):
    return DyadicCellUnion.from_cells(SQUARE, depth, indices)


def test_parse_relations():
    assert SeparationRelation.parse("disjoint") == DISJOINT
    assert SeparationRelation.parse("tau:1/10").tau == F(1, 10)
    assert str(SeparationRelation.parse("tau:2/4")) == "tau:1/2"
    for bad in ("tau:0", "tau:-1", "tau:1/0", "near"):
        with pytest.raises(ClusteringError) as e:
            SeparationRelation.parse(bad)
        assert e.value.code == "parse-error"


def test_merlon_top_pieces_are_disjoint():
    assert separated(DISJOINT, Interval1D(0, F(1, 3)), Interval1D(F(2, 3), 1))


def test_corner_squares_are_not_disjoint():
    assert not separated(DISJOINT, cells((3, 3)), cells((4, 4)))


def test_tau_compares_gap_to_tau():
    rel = SeparationRelation.tau_separation(F(1, 3))
    assert not separated(rel, Interval1D(0, F(1, 3)), Interval1D(F(1, 2), 1))
    assert separated(rel, Interval1D(0, F(1, 4)), Interval1D(F(3, 4), 1))
    # a gap of exactly tau counts as separated
    assert separated(rel, Interval1D(0, F(1, 3)), Interval1D(F(2, 3), 1))


def test_merlon_level_set_decomposes_in_two():
    parts = [Interval1D(0, F(1, 3)), Interval1D(F(2, 3), 1)]
    assert len(decompose(DISJOINT, parts)) == 2


def test_single_region_is_one_component():
    assert decompose(DISJOINT, [cells((0, 0), (0, 1))]) == [[cells((0, 0), (0, 1))]]


def test_decompose_needs_parts():
    with pytest.raises(ClusteringError):
        decompose(DISJOINT, [])


def test_ring_with_diagonal_contact_is_one_component():
    ring = [(2, 2), (2, 3), (2, 4), (3, 4), (4, 4), (4, 3), (4, 2)]
    pieces = [cells(c) for c in ring] + [cells((5, 1))]
    assert is_connected_union(DISJOINT, pieces)


def test_cross_of_segments_is_connected():
    cross = [
        cells(*[(i, 4) for i in range(8)]),
        cells(*[(4, j) for j in range(8)]),
    ]
    assert is_connected_union(DISJOINT, cross)


def test_two_disjoint_cells_are_not_connected():
    assert not is_connected_union(DISJOINT, [cells((0, 0)), cells((5, 5))])


@pytest.mark.parametrize("k", [1, 2, 5, 8])
def test_face_adjacent_chain_is_connected(k):
    assert is_connected_union(DISJOINT, [cells((i, 0)) for i in range(k)])


def test_intersection_graph_has_no_self_edges():
    graph = intersection_graph(DISJOINT, [cells((0, 0)), cells((1, 1)), cells((6, 6))])
    assert graph.edges == frozenset({(0, 1)})
    assert all(i != j for i, j in graph.edges)


def test_tau_stencil_counts_cells_within_reach():
    rel = SeparationRelation.tau_separation(F(1, 3))
    # side 1/4 at depth 3: neighbours plus cells one cell apart
    stencil = set(grid_stencil(rel, SQUARE, 3))
    assert (1, 1) in stencil and (2, 0) in stencil
    assert (2, 2) not in stencil and (3, 0) not in stencil


# =============================================================================
# PROPERTIES
# =============================================================================

@given(chosen=cells_8)
def test_reflexivity(chosen):
    region = cells(*chosen)
    assert not separated(DISJOINT, region, region)
    assert not separated(SeparationRelation.tau_separation(F(1, 10)), region, region)


@given(outer=cells_8, drop=st.integers(0, 23), other=cells_8, tau=st.sampled_from(["disjoint", "tau:1/4", "tau:1"]))
def test_monotonicity(outer, drop, other, tau):
    rel = SeparationRelation.parse(tau)
    big = cells(*outer)
    kept = sorted(outer)
    kept = kept[:drop % len(kept)] + kept[drop % len(kept) + 1:] or kept
    small = cells(*kept)
    b = cells(*other)
    if separated(rel, big, b):
        assert separated(rel, small, b)


@given(chain=st.lists(cells_8, min_size=1, max_size=4), other=cells_8)
def test_stability_of_increasing_chains(chain, other):
    grown, acc = [], set()
    for step in chain:
        acc |= step
        grown.append(cells(*acc))
    b = cells(*other)
    if all(separated(DISJOINT, r, b) for r in grown):
        assert separated(DISJOINT, union(grown), b)


@given(chosen=cells_8, seed=st.randoms())
def test_decompose_is_permutation_invariant(chosen, seed):
    parts = [cells(c) for c in chosen]
    shuffled = list(parts)
    seed.shuffle(shuffled)
    assert decompose(DISJOINT, parts) == decompose(DISJOINT, shuffled)


@given(a=cells_8, b=cells_8)
def test_disjointness_means_disjoint_closures(a, b):
    if separated(DISJOINT, cells(*a), cells(*b)):
        assert not (set(a) & set(b))


@given(chosen=cells_8)
def test_components_match_flood_fill(chosen):
    mask = np.zeros((8, 8), dtype=bool)
    for c in chosen:
        mask[c] = True
    _, expected = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    assert len(cell_components(mask, DISJOINT, SQUARE, 3)) == expected
    assert len(decompose(DISJOINT, [cells(c) for c in chosen])) == expected


@pytest.mark.parametrize("relation, expected", [("tau:1/2", 4), ("tau:2", 1)])
def test_tau_wider_than_the_grid(relation, expected):
    unit = Box((0, 0), (1, 1))
    mask = np.zeros((4, 4), dtype=bool)
    for corner in [(0, 0), (0, 3), (3, 0), (3, 3)]:
        mask[corner] = True
    assert len(cell_components(mask, SeparationRelation.parse(relation), unit, 2)) == expected
