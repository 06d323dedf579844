"""Simple measures: representation, evaluation, levels and majorization."""

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from unicluster.errors import ClusteringError
from unicluster.services.density import DensityModel1D
from unicluster.services.forest import ground
from unicluster.services.geometry import Atom, Box, DyadicCellUnion, Interval1D, contains, intersection
from unicluster.services.measure import (
    BaseMeasure,
    SimpleMeasure,
    evaluate,
    level,
    majorizes,
    monotone_convergence_check,
    restrict_below,
    validate_representation,
)
from unicluster.services.separation import SeparationRelation

F = Fraction
DISJOINT = SeparationRelation.disjoint()
UNIFORM = DensityModel1D.from_knots([(0, 1), (1, 1)])

# five intervals, two roots
FAMILY = [
    (Interval1D(0, 4), 2),
    (Interval1D(0, 1), 1),
    (Interval1D(2, 3), F(1, 2)),
    (Interval1D(5, 8), 3),
    (Interval1D(6, 7), 1),
]

small = st.fractions(min_value=-1, max_value=9, max_denominator=8)


def chain():
    return validate_representation([(Interval1D(0, 4), 1), (Interval1D(1, 2), 1)], DISJOINT)


def flat(lo, hi, height=1):
    """P_n-style indicator measure: height·Lebesgue on [lo, hi]."""
    return SimpleMeasure.base(Interval1D(lo, hi), height * (F(hi) - F(lo)), DISJOINT)


def test_nested_pair_is_a_chain():
    q = chain()
    assert q.forest.parents == (None, 0)
    assert q.weights == (1, 1)


def test_overlap_is_rejected():
    with pytest.raises(ClusteringError) as e:
        validate_representation([(Interval1D(0, 2), 1), (Interval1D(1, 3), 1)], DISJOINT)
    assert e.value.code == "forest-violation"


def test_five_interval_family():
    q = validate_representation(FAMILY, DISJOINT)
    assert len(q.forest) == 5
    assert len(q.forest.root_indices) == 2
    assert q.total_mass() == F(15, 2)


def test_nonpositive_weight_is_rejected():
    with pytest.raises(ClusteringError) as e:
        validate_representation([(Interval1D(0, 1), 0)], DISJOINT)
    assert e.value.code == "invalid-region"


def test_equal_regions_merge_weights():
    q = validate_representation([(Interval1D(0, 1), 1), (Interval1D(0, 1), F(1, 2))], DISJOINT)
    assert q.weights == (F(3, 2),)


def test_zero_measure_base_set_is_rejected():
    with pytest.raises(ClusteringError):
        BaseMeasure(Interval1D(F(1, 2), F(1, 2)), 1)


# =============================================================================
# EVALUATION & LEVELS
# =============================================================================

def test_level_of_inner_node_collects_ancestor_height():
    lam = level(chain(), Interval1D(1, 2))
    assert lam.base.weight == F(5, 4)
    assert lam.base.height == F(5, 4)


def test_level_of_root_is_its_own_term():
    q = chain()
    assert level(q, Interval1D(0, 4)).base == BaseMeasure(Interval1D(0, 4), 1)
    single = SimpleMeasure.base(Interval1D(0, 1), 3, DISJOINT)
    assert level(single, Interval1D(0, 1)).base == single.terms[0]


def test_evaluate():
    assert evaluate(BaseMeasure(Interval1D(0, 1), 1), Interval1D(0, F(1, 2))) == F(1, 2)
    assert evaluate(chain(), Interval1D(1, 2)) == F(5, 4)
    dirac = SimpleMeasure.base(Atom((0,)), 1, DISJOINT)
    assert evaluate(dirac, Interval1D(-1, F(1, 2))) == 1


def test_evaluate_across_dimensions_fails():
    cells = DyadicCellUnion.from_cells(Box((0, 0), (1, 1)), 0, [(0, 0)])
    with pytest.raises(ClusteringError) as e:
        evaluate(chain(), cells)
    assert e.value.code == "dimension-mismatch"


def test_restrict_below():
    q = validate_representation(FAMILY, DISJOINT)
    below = restrict_below(q, Interval1D(0, 4))
    assert below.forest.nodes == (Interval1D(0, 1), Interval1D(2, 3))
    assert below.weights == (1, F(1, 2))


def test_flat_density_of_a_chain():
    f = chain().to_density()
    assert f(F(1, 2)) == F(1, 4)
    assert f(F(3, 2)) == F(5, 4)
    assert f(5) == 0


# =============================================================================
# MAJORIZATION
# =============================================================================

def test_half_is_below_whole():
    a = BaseMeasure(Interval1D(0, 1), 1)
    assert majorizes(BaseMeasure(Interval1D(0, 1), F(1, 2)), a)


def test_taller_base_is_not_below_wider_one():
    assert not majorizes(BaseMeasure(Interval1D(0, 1), 1), BaseMeasure(Interval1D(0, 2), 1))


def test_majorized_by_a_density():
    assert majorizes(flat(F(1, 4), F(3, 4)), UNIFORM)
    assert not majorizes(flat(F(1, 4), F(3, 4), 2), UNIFORM)
    assert not majorizes(flat(F(1, 2), F(3, 2)), UNIFORM)


@given(a=small, b=small, c=small, d=small, h1=st.integers(1, 4), h2=st.integers(1, 4))
def test_base_order_is_inclusion_and_height(a, b, c, d, h1, h2):
    if a == b or c == d:
        return
    inner = Interval1D(min(a, b), max(a, b))
    outer = Interval1D(min(c, d), max(c, d))
    low = BaseMeasure(inner, h1 * inner.length)
    high = BaseMeasure(outer, h2 * outer.length)
    assert majorizes(low, high) == (contains(outer, inner) and h1 <= h2)


# =============================================================================
# MONOTONE CONVERGENCE
# =============================================================================

def test_constant_sequence():
    q = flat(F(1, 4), F(3, 4))
    report = monotone_convergence_check([q, q, q], UNIFORM)
    assert report.ok
    assert report.residual == F(1, 2)


def test_shrinking_margins_converge():
    sequence = [flat(F(1, n), 1 - F(1, n)) for n in (4, 8)]
    report = monotone_convergence_check(sequence, UNIFORM)
    assert report.residual == F(1, 4)


def test_shuffled_sequence_fails_at_first_inversion():
    sequence = [flat(F(1, n), 1 - F(1, n)) for n in (4, 16, 8)]
    with pytest.raises(ClusteringError) as e:
        monotone_convergence_check(sequence, UNIFORM)
    assert e.value.code == "monotonicity-violation"
    assert e.value.detail["index"] == 2


# =============================================================================
# PROPERTIES
# =============================================================================

@given(order=st.permutations(range(len(FAMILY))))
def test_representation_is_unique(order):
    q = validate_representation(FAMILY, DISJOINT)
    again = validate_representation([FAMILY[i] for i in order], DISJOINT)
    assert again.forest == q.forest
    assert again.weights == q.weights


@given(lo=small, hi=small, node=st.sampled_from([r for r, _ in FAMILY]))
def test_level_decomposition(lo, hi, node):
    q = validate_representation(FAMILY, DISJOINT)
    b = Interval1D(min(lo, hi), max(lo, hi))
    inside = intersection(b, node)
    left = evaluate(q, inside) if inside is not None else 0
    right = evaluate(level(q, node), b) + restrict_below(q, node).mass(b)
    assert left == right


def test_support_is_the_ground():
    q = validate_representation(FAMILY, DISJOINT)
    assert str(ground(q.forest)) == "[0,4] ∪ [5,8]"
    outside = [Interval1D(-1, 0, True, False), Interval1D(4, 5, False, False), Interval1D(8, 9, False, True)]
    assert all(evaluate(q, r) == 0 for r in outside)
    assert all(q.mass(r) > 0 for r in q.forest.nodes)


@given(a=small, b=small, c=small, d=small)
def test_majorization_implies_support_inclusion(a, b, c, d):
    if a == b or c == d:
        return
    low = BaseMeasure(Interval1D(min(a, b), max(a, b)), 1)
    high = BaseMeasure(Interval1D(min(c, d), max(c, d)), 1)
    if majorizes(low, high):
        assert contains(high.region, low.region)
