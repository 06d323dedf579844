"""⊥-forests: construction, structure, FRMs, isomonotone limits and null-set equality."""

from fractions import Fraction

import pytest

from unicluster.errors import ClusteringError
from unicluster.services.density import DensityModel1D
from unicluster.services.forest import (
    Forest,
    ParamChain,
    ParamChainForest,
    equal_mod_P,
    frm,
    ground,
    isomonotone_limit,
    leaves,
    roots,
    structure,
    sub_forest,
)
from unicluster.services.geometry import Atom, Box, DyadicCellUnion, Interval1D
from unicluster.services.separation import SeparationRelation

F = Fraction
DISJOINT = SeparationRelation.disjoint()
UNIFORM = DensityModel1D.from_knots([(0, 1), (1, 1)])


def iv(lo, hi, lo_closed=True, hi_closed=True):
    return Interval1D(F(lo), F(hi), lo_closed, hi_closed)


def merlon_like(*extra):
    return Forest.build([iv(0, 1), iv(0, F(1, 3)), iv(F(2, 3), 1), *extra], DISJOINT)


def test_parents_follow_inclusion():
    forest = merlon_like(iv(0, F(1, 6)))
    assert forest.nodes == (iv(0, 1), iv(0, F(1, 3)), iv(0, F(1, 6)), iv(F(2, 3), 1))
    assert forest.parents == (None, 0, 1, 0)
    assert forest.root_indices == (0,)
    assert forest.sibling_sets() == [(1, 3)]


def test_overlap_is_a_forest_violation():
    with pytest.raises(ClusteringError) as e:
        Forest.build([iv(0, F(1, 2)), iv(F(1, 3), 1)], DISJOINT)
    assert e.value.code == "forest-violation"


def test_tau_forest_needs_gaps():
    tau = SeparationRelation.tau_separation(F(1, 2))
    with pytest.raises(ClusteringError):
        Forest.build([iv(0, F(1, 3)), iv(F(2, 3), 1)], tau)
    assert len(Forest.build([iv(0, F(1, 4)), iv(F(3, 4), 1)], tau)) == 2


def test_lower_dimensional_nodes_never_nest():
    forest = Forest.build([iv(0, 1), Atom((F(1, 2),))], DISJOINT)
    assert forest.parents == (None, None)


def test_duplicate_regions_collapse():
    assert len(Forest.build([iv(0, 1), iv(0, 1)], DISJOINT)) == 1


def test_structure_drops_only_children():
    forest = merlon_like(iv(0, F(1, 6)))
    assert structure(forest).node_set() == merlon_like().node_set()


def test_structure_of_a_chain_is_its_root():
    chain = Forest.build([iv(0, 1), iv(F(1, 4), F(3, 4)), iv(F(1, 3), F(1, 2))], DISJOINT)
    assert structure(chain).nodes == (iv(0, 1),)


def test_structure_is_idempotent():
    forest = merlon_like(iv(0, F(1, 6)), iv(F(3, 4), F(5, 6)))
    once = structure(forest)
    assert structure(once) == once


def test_roots_leaves_and_ground():
    forest = Forest.build([iv(0, F(1, 3)), iv(F(2, 3), 1), iv(0, F(1, 6))], DISJOINT)
    assert roots(forest).nodes == (iv(0, F(1, 3)), iv(F(2, 3), 1))
    assert leaves(forest).nodes == (iv(0, F(1, 6)), iv(F(2, 3), 1))
    assert str(ground(forest)) == "[0,1/3] ∪ [2/3,1]"


def test_ground_of_empty_forest():
    with pytest.raises(ClusteringError) as e:
        ground(Forest.empty(DISJOINT))
    assert e.value.code == "node-not-found"


def test_sub_forests():
    forest = merlon_like(iv(0, F(1, 6)))
    node = iv(0, F(1, 3))
    assert sub_forest(forest, node, ">").nodes == (iv(0, 1),)
    assert sub_forest(forest, node, ">=").nodes == (iv(0, 1), node)
    assert sub_forest(forest, node, "<").nodes == (iv(0, F(1, 6)),)
    assert sub_forest(forest, node, "<=").nodes == (node, iv(0, F(1, 6)))
    with pytest.raises(ClusteringError) as e:
        sub_forest(forest, iv(0, F(1, 5)), "<")
    assert e.value.code == "node-not-found"


# =============================================================================
# FOREST RELATING MAPS
# =============================================================================

def test_frm_matches_by_containment():
    small = merlon_like()
    big = Forest.build([iv(0, 1), iv(0, F(1, 2), True, False), iv(F(1, 2), 1, False, True)], DISJOINT)
    zeta = frm(small, big)
    assert zeta(iv(0, F(1, 3))) == iv(0, F(1, 2), True, False)
    assert zeta(iv(F(2, 3), 1)) == iv(F(1, 2), 1, False, True)


def test_frm_composes():
    a = Forest.build([iv(F(1, 4), F(1, 3)), iv(F(2, 3), F(3, 4))], DISJOINT)
    b = Forest.build([iv(F(1, 5), F(2, 5)), iv(F(3, 5), F(4, 5))], DISJOINT)
    c = Forest.build([iv(0, F(1, 2), True, False), iv(F(1, 2), 1, False, True)], DISJOINT)
    assert frm(a, b).then(frm(b, c)).mapping == frm(a, c).mapping


def test_frm_rejects_different_shapes():
    with pytest.raises(ClusteringError) as e:
        frm(merlon_like(), Forest.build([iv(0, 1)], DISJOINT))
    assert e.value.code == "not-isomorphic"


def test_frm_rejects_missing_containment():
    narrower = Forest.build([iv(0, 1), iv(0, F(1, 4)), iv(F(3, 4), 1)], DISJOINT)
    with pytest.raises(ClusteringError) as e:
        frm(merlon_like(), narrower)
    assert e.value.code == "isomorphic-but-not-contained"


# =============================================================================
# ISOMONOTONE LIMITS
# =============================================================================

def growing_sequence():
    return [
        Forest.build([iv(0, 1), iv(F(1, 4), F(1, 3)), iv(F(2, 3), F(3, 4))], DISJOINT),
        Forest.build([iv(0, 1), iv(F(1, 5), F(2, 5)), iv(F(3, 5), F(4, 5)), iv(F(1, 4), F(1, 3))], DISJOINT),
        Forest.build([iv(0, 1), iv(F(1, 6), F(9, 20)), iv(F(11, 20), F(5, 6))], DISJOINT),
    ]


def test_isomonotone_limit_takes_node_wise_unions():
    limit = isomonotone_limit(growing_sequence())
    assert limit.nodes == (iv(0, 1), iv(F(1, 6), F(9, 20)), iv(F(11, 20), F(5, 6)))
    assert limit.parents == (None, 0, 0)


def test_non_monotone_sequence_is_reported_with_its_index():
    with pytest.raises(ClusteringError) as e:
        isomonotone_limit(list(reversed(growing_sequence())))
    assert e.value.code == "monotonicity-violation"
    assert e.value.detail["index"] == 1


def test_empty_sequence():
    with pytest.raises(ClusteringError):
        isomonotone_limit([])


def test_limit_across_different_grids_is_rejected():
    small = DyadicCellUnion.from_cells(Box((0, 0), (1, 1)), 1, [(0, 0)])
    large = DyadicCellUnion.from_cells(Box((0, 0), (2, 2)), 1, [(0, 0)])
    sequence = [Forest.build([small], DISJOINT), Forest.build([large], DISJOINT)]
    with pytest.raises(ClusteringError) as e:
        isomonotone_limit(sequence)
    assert e.value.code == "forest-violation"
    assert len(e.value.detail["chain"]) == 2


# =============================================================================
# PARAMETERIZED CHAINS
# =============================================================================

def test_generalized_structure_drops_pure_chains():
    chains = ParamChainForest((
        ParamChain(iv(0, 1), F(0), F(1, 6)),
        ParamChain(iv(F(1, 12), F(11, 12), False, False), F(1, 6), F(1, 4), parent=0),
        ParamChain(iv(F(1, 6), F(1, 2), False, False), F(1, 4), F(1, 3), parent=1),
        ParamChain(iv(F(1, 2), F(5, 6), False, False), F(1, 4), F(1, 3), parent=1),
    ), DISJOINT)
    forest = chains.generalized_structure()
    assert len(forest) == 3
    assert forest.parents == (None, 0, 0)
    assert forest.levels == (F(0), F(1, 4), F(1, 4))


def test_escaping_chain_is_rejected():
    chains = ParamChainForest((
        ParamChain(iv(0, F(1, 2)), F(0), F(1, 6)),
        ParamChain(iv(F(1, 4), 1), F(1, 6), F(1, 3), parent=0),
    ), DISJOINT)
    with pytest.raises(ClusteringError) as e:
        chains.generalized_structure()
    assert e.value.code == "forest-violation"


# =============================================================================
# EQUALITY UP TO NULL SETS
# =============================================================================

def test_endpoints_are_null():
    open_unit = Forest.build([iv(0, 1, False, False)], DISJOINT)
    closed_unit = Forest.build([iv(0, 1)], DISJOINT)
    result = equal_mod_P(open_unit, closed_unit, UNIFORM)
    assert result.equal
    assert result.worst == 0
    assert result.mapping == (0,)


def test_half_mass_difference_is_not_null():
    result = equal_mod_P(Forest.build([iv(0, 1)], DISJOINT), Forest.build([iv(0, F(1, 2))], DISJOINT), UNIFORM)
    assert not result.equal


def test_tolerance_admits_small_differences():
    a = merlon_like()
    b = Forest.build([iv(0, 1), iv(0, F(3, 10)), iv(F(2, 3), 1)], DISJOINT)
    assert not equal_mod_P(a, b, UNIFORM).equal
    loose = equal_mod_P(a, b, UNIFORM, tolerance=F(1, 20))
    assert loose.equal and loose.worst == F(1, 30)


def test_shape_mismatch_is_unequal():
    assert not equal_mod_P(merlon_like(), Forest.build([iv(0, 1)], DISJOINT), UNIFORM).equal
