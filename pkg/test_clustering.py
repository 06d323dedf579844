"""Clustering engines: simple measures, exact 1D level sets and dyadic grids."""

from fractions import Fraction

import numpy as np
import pytest

from unicluster.data import examples
from unicluster.errors import ClusteringError
from unicluster.services import density as density_module
from unicluster.services.clustering import (
    canonical_simple_measure,
    cluster_density_1d,
    cluster_density_grid,
    cluster_simple,
    grid_level_forest,
    leaves_match_maxima,
    scale_invariant,
    tau_events,
)
from unicluster.services.density import DensityModel1D, GridDensity
from unicluster.services.geometry import Box, DyadicCellUnion, Interval1D
from unicluster.services.measure import SimpleMeasure, majorizes, validate_representation
from unicluster.services.separation import SeparationRelation

F = Fraction
DISJOINT = SeparationRelation.disjoint()
UNIT = Box((0, 0), (1, 1))


def labels(forest):
    return [str(r) for r in forest.nodes]


# =============================================================================
# SIMPLE MEASURES
# =============================================================================

def test_single_base_measure_clusters_to_its_set():
    q = SimpleMeasure.base(Interval1D(0, 1), 1, DISJOINT)
    assert cluster_simple(q).nodes == (Interval1D(0, 1),)


def test_separated_trees_cluster_independently():
    left = [(Interval1D(0, 4), 1), (Interval1D(0, 1), 1), (Interval1D(2, 3), 1)]
    right = [(Interval1D(5, 8), 1), (Interval1D(6, 7), 1)]
    both = cluster_simple(validate_representation(left + right, DISJOINT))
    parts = cluster_simple(validate_representation(left, DISJOINT)).node_set() | \
        cluster_simple(validate_representation(right, DISJOINT)).node_set()
    assert both.node_set() == parts
    assert labels(both) == ["[0,4]", "[0,1]", "[2,3]", "[5,8]"]


# =============================================================================
# EXACT ONE-DIMENSIONAL ENGINE
# =============================================================================

@pytest.mark.parametrize("name, relation, expected", [
    ("twin-peaks", "disjoint", ["(0,1)", "(1/6,1/2)", "(1/2,5/6)"]),
    ("twin-peaks", "tau:1/10", ["(0,1)", "(13/60,9/20)", "(11/20,47/60)"]),
    ("twin-peaks", "tau:1/6", ["(0,1)", "(1/4,5/12)", "(7/12,3/4)"]),
    ("twin-peaks", "tau:1/2", ["(0,1)"]),
    ("twin-peaks", "tau:2", ["(0,1)"]),
    ("merlon", "disjoint", ["[0,1]", "[0,1/3]", "[2/3,1]"]),
    ("merlon", "tau:1/10", ["[0,1]", "[0,1/3]", "[2/3,1]"]),
    ("merlon", "tau:2", ["[0,1]"]),
    ("camel", "disjoint", ["(0,1)", "(1/8,1/2)", "(1/2,7/8)"]),
    ("camel", "tau:1/10", ["(0,1)", "(3/20,9/20)", "(11/20,17/20)"]),
    ("camel", "tau:2", ["(0,1)"]),
    ("m", "disjoint", ["[0,1]", "[0,1/2)", "(1/2,1]"]),
    ("m", "tau:1/10", ["[0,1]", "[0,9/20)", "(11/20,1]"]),
    ("m", "tau:2", ["[0,1]"]),
    ("factory", "disjoint", ["[0,1]", "[0,1/2)", "[1/2,1]"]),
    ("factory", "tau:1/10", ["[0,1]", "[0,2/5)", "[1/2,1]"]),
    ("factory", "tau:2", ["[0,1]"]),
])
def test_one_dimensional_examples(name, relation, expected):
    forest = cluster_density_1d(examples.density_1d(name), SeparationRelation.parse(relation))
    assert labels(forest) == expected


def test_twin_peaks_children_hang_from_the_root():
    forest = cluster_density_1d(examples.density_1d("twin-peaks"), DISJOINT)
    assert forest.parents == (None, 0, 0)
    assert forest.levels == (F(0), F(1, 6), F(1, 6))


def test_twin_peaks_tau_event():
    f = examples.density_1d("twin-peaks")
    # the gap between the level components is 2λ − 1/3
    assert tau_events(f, SeparationRelation.tau_separation(F(1, 10))) == [F(13, 60)]
    assert tau_events(f, DISJOINT) == []


@pytest.mark.parametrize("name", ["twin-peaks", "merlon", "camel", "m", "factory", "double-tent"])
def test_leaves_match_local_maxima(name):
    assert leaves_match_maxima(examples.density_1d(name), DISJOINT)


@pytest.mark.parametrize("alpha", [F(1, 3), 2, 7])
def test_scale_invariance(alpha):
    assert scale_invariant(examples.density_1d("camel"), DISJOINT, alpha)
    assert scale_invariant(examples.indicator("separated-squares"), DISJOINT, alpha)


def test_too_many_maxima_is_rejected(monkeypatch):
    monkeypatch.setattr(density_module.settings, "max_local_maxima", 1)
    with pytest.raises(ClusteringError) as e:
        examples.density_1d("camel")
    assert e.value.code == "infinitely-many-maxima"


def test_single_bump_is_one_cluster():
    tent = DensityModel1D.from_knots([(0, 0), (F(1, 2), 1), (1, 0)])
    assert labels(cluster_density_1d(tent, DISJOINT)) == ["(0,1)"]


# =============================================================================
# GRID ENGINE
# =============================================================================

def test_connected_indicator_is_a_single_root():
    cells = DyadicCellUnion.from_cells(UNIT, 2, [(0, 0), (0, 1), (1, 1), (2, 1)])
    forest = cluster_density_grid(GridDensity.indicator(cells), DISJOINT)
    assert forest.nodes == (cells,)


@pytest.mark.parametrize("name, counts", [
    ("corner-squares", [32]),
    ("overlapping-discs", [20]),
    ("separated-squares", [9, 9]),
])
def test_indicator_examples(name, counts):
    forest = cluster_density_grid(examples.indicator(name), DISJOINT)
    assert [r.count for r in forest.nodes] == counts


def test_corner_squares_stay_joined_under_tau():
    forest = cluster_density_grid(examples.indicator("corner-squares"), SeparationRelation.tau_separation(F(1, 8)))
    assert [r.count for r in forest.nodes] == [32]


def test_saddle_splits_into_opposite_quadrants():
    grid = GridDensity.from_function(examples.saddle(), examples.SQUARE, 6, "center")
    forest = cluster_density_grid(grid, DISJOINT)
    h = F(2, 2 ** 6)
    assert len(forest) == 3
    root = forest.root_indices[0]
    assert forest.nodes[root].count == 64 * 64
    children = forest.children[root]
    assert len(children) == 2
    assert {forest.levels[i] for i in children} == {1 + h * h / 4}
    assert all(forest.nodes[i].count == 32 * 32 - 1 for i in children)
    first, second = (forest.nodes[i].mask for i in children)
    assert {bool(first[63, 63]), bool(second[63, 63])} == {True, False}
    assert {bool(first[0, 0]), bool(second[0, 0])} == {True, False}
    assert not (first[:32, 32:].any() or second[:32, 32:].any())


def test_grid_level_forest_and_canonical_measure():
    grid = GridDensity.from_values(UNIT, 1, [[1, 2], [0, 3]])
    forest = grid_level_forest(grid, DISJOINT)
    assert [r.count for r in forest.nodes] == [3, 2, 1]
    q = canonical_simple_measure(grid, DISJOINT)
    assert q.total_mass() == grid.total_mass() == F(3, 2)
    assert majorizes(q, grid)
    assert cluster_simple(q).node_set() == cluster_density_grid(grid, DISJOINT).node_set()


def test_two_separated_peaks_in_a_grid():
    values = np.zeros((4, 4), dtype=object)
    values[0, 0], values[3, 3], values[0, 1] = 2, 3, 1
    forest = cluster_density_grid(GridDensity.from_values(UNIT, 2, values), DISJOINT)
    assert [r.count for r in forest.nodes] == [2, 1]
    assert forest.parents == (None, None)
