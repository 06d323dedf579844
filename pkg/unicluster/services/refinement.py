"""
Refinement Service

Grid approximations of a continuous density at increasing depths:
cluster every depth, check the approximations are monotone and adapted,
and compare the stabilized structure of two independent schedules up to
P-null sets.

Lower sampling (exact cell infima) makes successive depths monotone,
Q_n ≤ Q_{n+1} ≤ P. A second schedule uses a grid on an enlarged box, so
its cell boundaries do not line up with the first one.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

from unicluster.config import get_settings
from unicluster.errors import ClusteringError
from unicluster.services.adapted import AdaptednessReport, is_adapted
from unicluster.services.clustering import canonical_simple_measure, cluster_density_grid
from unicluster.services.density import GridDensity, Number, density_leq
from unicluster.services.forest import Forest, NullEquality, equal_mod_P, isomonotone_limit
from unicluster.services.geometry import Box, as_rational
from unicluster.services.measure import SimpleMeasure
from unicluster.services.separation import SeparationRelation

settings = get_settings()
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefinementStep:
    depth: int
    grid: GridDensity
    measure: SimpleMeasure
    forest: Forest


@dataclass(frozen=True)
class RefinementReport:
    steps: Tuple[RefinementStep, ...]
    limit: Forest
    adaptedness: Tuple[AdaptednessReport, ...]

    @property
    def finest_side(self) -> Fraction:
        last = self.steps[-1].grid
        return max(last.box.side(last.depth))


def _step(f, box: Box, depth: int, relation: SeparationRelation, sampling: str, offset) -> RefinementStep:
    grid = GridDensity.from_function(f, box, depth, sampling, offset)
    return RefinementStep(depth, grid, canonical_simple_measure(grid, relation), cluster_density_grid(grid, relation))


def refine_and_cluster(
    f,
    box: Box,
    depths: Sequence[int],
    relation: SeparationRelation,
    sampling: str = "lower",
    offset=None,
    margin=0,
) -> RefinementReport:
    """Cluster f sampled at each depth; verify monotonicity, isomonotonicity and adaptedness."""
    depths = list(depths)
    if not depths or any(a >= b for a, b in zip(depths, depths[1:])):
        raise ClusteringError("monotonicity-violation", "depths must be strictly increasing", index=0)
    grid_box = box.expanded(margin) if as_rational(margin) else box
    with ThreadPoolExecutor(max_workers=settings.max_workers) as pool:
        steps = list(pool.map(lambda d: _step(f, grid_box, d, relation, sampling, offset), depths))

    if sampling == "lower":
        for n in range(len(steps) - 1):
            if not density_leq(steps[n].grid, steps[n + 1].grid):
                raise ClusteringError("monotonicity-violation",
                                      f"depth {steps[n + 1].depth} is not above depth {steps[n].depth}", index=n + 1)
    limit = isomonotone_limit([s.forest for s in steps])

    finest = steps[-1].grid
    reports = []
    for n, step in enumerate(steps):
        report = is_adapted(step.measure, finest)
        if not report.adapted:
            raise ClusteringError("not-adapted", f"depth {step.depth}: {report.reason}", index=n,
                                  reason=report.reason)
        reports.append(report)
    logger.info("[Refine] depths %s -> %d stable clusters", depths, len(limit))
    return RefinementReport(tuple(steps), limit, tuple(reports))


@dataclass(frozen=True)
class UniquenessReport:
    first: RefinementReport
    second: RefinementReport
    equality: NullEquality
    tolerance: Number


def uniqueness_check(
    f,
    box: Box,
    depths: Sequence[int],
    relation: SeparationRelation,
    second_depths: Optional[Sequence[int]] = None,
    margin=Fraction(1, 10),
) -> UniquenessReport:
    """Two schedules (shifted depths, enlarged box) must agree up to P-mass 4h·sup f."""
    second_depths = list(second_depths) if second_depths is not None else [d + 1 for d in depths]
    first = refine_and_cluster(f, box, depths, relation)
    second = refine_and_cluster(f, box, second_depths, relation, margin=margin)
    h = max(first.finest_side, second.finest_side)
    tolerance = 4 * h * f.sup()
    equality = equal_mod_P(first.limit, second.limit, f, tolerance)
    logger.info("[Refine] schedules agree: %s (worst %s, tolerance %s)",
                equality.equal, equality.worst, tolerance)
    return UniquenessReport(first, second, equality, tolerance)
