"""
Adaptedness Service

Kinship below a density and the grounded / fine / strictly motivated
conditions that make a simple measure P-adapted.

Kinship is searched only over base sets that are ⊥-components of the
essential superlevel sets {f ≥ h}: every admissible base measure lies
inside such a component at the same height, so the search is finite.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

from unicluster.errors import ClusteringError
from unicluster.services.clustering import tau_events
from unicluster.services.density import DensityModel1D, GridDensity, Number
from unicluster.services.geometry import Region, as_intervals, contains, interval_region
from unicluster.services.measure import BaseMeasure, SimpleMeasure, level, majorizes
from unicluster.services.separation import SeparationRelation, cell_components, group_intervals

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KinshipCertificate:
    """B ∪ B' ⊂ support, a ⊥-connected part of {f ≥ height}; `attained` is False for a supremum."""
    b: Region
    b_prime: Region
    support: Region
    height: Number
    attained: bool


@dataclass(frozen=True)
class SiblingReport:
    first: Region
    second: Region
    kin: bool
    height: Optional[Number]
    grounded: bool
    fine: bool
    motivated: bool
    margin: Optional[Number]


@dataclass(frozen=True)
class AdaptednessReport:
    siblings: Tuple[SiblingReport, ...]

    @property
    def adapted(self) -> bool:
        return self.reason is None

    @property
    def reason(self) -> Optional[str]:
        if not all(s.grounded for s in self.siblings):
            return "not grounded"
        if not all(s.fine for s in self.siblings):
            return "not fine"
        if not all(s.motivated for s in self.siblings):
            return "not strictly motivated"
        return None


def _as_density(p):
    if isinstance(p, SimpleMeasure):
        return p.to_density()
    if isinstance(p, BaseMeasure):
        return SimpleMeasure.base(p.region, p.weight, SeparationRelation.disjoint()).to_density()
    if isinstance(p, (DensityModel1D, GridDensity)):
        return p
    raise ClusteringError("unsupported-dimension", f"kinship is not available below a {type(p).__name__}")


def _support_at(f, h, relation: SeparationRelation) -> List[Region]:
    """⊥-components of the essential superlevel set {f ≥ h}."""
    if isinstance(f, DensityModel1D):
        return [interval_region(g) for g in group_intervals(f.ess_superlevel(h), relation)]
    mask = f.mask_at_least(h)
    if not mask.any():
        return []
    return cell_components(mask, relation, f.box, f.depth)


def _holding(f, h, relation: SeparationRelation, b: Region, b_prime: Region) -> Optional[Region]:
    return next((c for c in _support_at(f, h, relation) if contains(c, b) and contains(c, b_prime)), None)


def _ess_inf(f: DensityModel1D, region: Region) -> Optional[Fraction]:
    parts = as_intervals(region) or []
    values = [f.infimum(p.lo, p.hi) for p in parts if p.lo < p.hi]
    return min(values) if values else None


def kinship(p, b: Region, b_prime: Region,
            relation: SeparationRelation = SeparationRelation()) -> Optional[KinshipCertificate]:
    """The highest flat base measure below P whose support holds B ∪ B', or None."""
    f = _as_density(p)
    if isinstance(f, GridDensity):
        values = f.distinct_values
        lo, hi, best = 0, len(values) - 1, None
        while lo <= hi:
            mid = (lo + hi) // 2
            support = _holding(f, values[mid], relation, b, b_prime)
            if support is not None:
                best = KinshipCertificate(b, b_prime, support, values[mid], True)
                lo = mid + 1
            else:
                hi = mid - 1
        return best

    candidates = set(f.critical_levels()) | set(tau_events(f, relation))
    candidates |= {v for v in (_ess_inf(f, b), _ess_inf(f, b_prime)) if v is not None}
    heights = sorted((h for h in candidates if h > 0), reverse=True)
    for i, h in enumerate(heights):
        support = _holding(f, h, relation, b, b_prime)
        if support is not None:
            return KinshipCertificate(b, b_prime, support, h, True)
        below = heights[i + 1] if i + 1 < len(heights) else Fraction(0)
        support = _holding(f, (h + below) / 2, relation, b, b_prime)
        if support is not None:
            return KinshipCertificate(b, b_prime, support, h, False)
    return None


def is_adapted(q: SimpleMeasure, p) -> AdaptednessReport:
    """Grounded, fine and strictly motivated for every pair of direct siblings of F_Q."""
    if not majorizes(q, p):
        raise ClusteringError("Q-not-below-P", "the simple measure is not majorized by P")
    relation = q.relation
    forest = q.forest
    reports = []
    for group in forest.sibling_sets():
        siblings = [forest.nodes[i] for i in group]
        for x in range(len(group)):
            for y in range(x + 1, len(group)):
                a1, a2 = siblings[x], siblings[y]
                cert = kinship(p, a1, a2, relation)
                if cert is None:
                    reports.append(SiblingReport(a1, a2, False, None, True, True, True, None))
                    continue
                grounded = forest.parents[group[x]] is not None
                fine = all(contains(cert.support, s) for s in siblings)
                top = min(level(q, a1).base.height, level(q, a2).base.height)
                reports.append(SiblingReport(
                    a1, a2, True, cert.height, grounded, fine, cert.height < top, cert.height / top,
                ))
    report = AdaptednessReport(tuple(reports))
    logger.info("[Adapted] %d sibling pairs, %s", len(reports), report.reason or "adapted")
    return report
