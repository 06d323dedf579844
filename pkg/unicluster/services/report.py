"""
Report Service

Wire formats for everything the CLI writes: forest JSON, DOT text,
adaptedness reports, refinement sequence reports and example tables.

Key Design Decisions:
1. Deterministic: sorted keys, fixed indentation, rationals as "p/q"
   strings, so identical inputs give byte-identical files
2. Round-trip: a forest JSON parses back into the same Forest
3. Regions carry a `kind` discriminator (interval, interval-union,
   cells, polyline, atom)
"""

import hashlib
import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import networkx as nx
from pydantic import BaseModel

from unicluster.errors import ClusteringError
from unicluster.services.adapted import AdaptednessReport
from unicluster.services.forest import Forest
from unicluster.services.geometry import (
    Atom,
    Box,
    DyadicCellUnion,
    Interval1D,
    IntervalUnion,
    Polyline,
    Region,
    as_rational,
    format_rational,
    interval_region,
)
from unicluster.services.refinement import RefinementReport
from unicluster.services.separation import SeparationRelation

logger = logging.getLogger(__name__)


# =============================================================================
# REGIONS
# =============================================================================

def _num(x) -> str:
    return format_rational(x) if isinstance(x, Fraction) else repr(float(x))


def _interval_dict(p: Interval1D) -> Dict[str, Any]:
    return {"kind": "interval", "lo": _num(p.lo), "hi": _num(p.hi),
            "lo_closed": p.lo_closed, "hi_closed": p.hi_closed}


def region_to_dict(r: Region) -> Dict[str, Any]:
    if isinstance(r, Interval1D):
        return _interval_dict(r)
    if isinstance(r, IntervalUnion):
        return {"kind": "interval-union", "parts": [_interval_dict(p) for p in r.parts]}
    if isinstance(r, DyadicCellUnion):
        return {
            "kind": "cells",
            "box": {"lo": [_num(x) for x in r.box.lo], "hi": [_num(x) for x in r.box.hi]},
            "depth": r.depth,
            "cells": [list(c) for c in sorted(r.cells)],
        }
    if isinstance(r, Polyline):
        return {
            "kind": "polyline",
            "vertices": [[_num(x) for x in v] for v in r.vertices],
            "knots": [_num(k) for k in r.knots],
            "span": region_to_dict(r.span),
        }
    if isinstance(r, Atom):
        return {"kind": "atom", "point": [_num(x) for x in r.point]}
    raise ClusteringError("invalid-region", f"cannot serialize {r!r}")


def region_from_dict(data: Dict[str, Any]) -> Region:
    kind = data.get("kind")
    try:
        if kind == "interval":
            return Interval1D(as_rational(data["lo"]), as_rational(data["hi"]),
                              bool(data["lo_closed"]), bool(data["hi_closed"]))
        if kind == "interval-union":
            return interval_region(region_from_dict(p) for p in data["parts"])
        if kind == "cells":
            box = Box(tuple(data["box"]["lo"]), tuple(data["box"]["hi"]))
            return DyadicCellUnion.from_cells(box, int(data["depth"]), data["cells"])
        if kind == "polyline":
            return Polyline(tuple(tuple(v) for v in data["vertices"]), tuple(data["knots"]),
                            region_from_dict(data["span"]))
        if kind == "atom":
            return Atom(tuple(data["point"]))
    except KeyError as e:
        raise ClusteringError("parse-error", f"{kind} region is missing field {e}")
    raise ClusteringError("parse-error", f"unknown region kind {kind!r}")


# =============================================================================
# WIRE MODELS
# =============================================================================

class Provenance(BaseModel):
    spec_sha256: str
    engine: str
    depth: Optional[int] = None


class NodeReport(BaseModel):
    id: int
    region: Dict[str, Any]
    label: str
    dim: int
    parent: Optional[int] = None
    level: Optional[str] = None
    mass: Optional[str] = None


class ForestReport(BaseModel):
    separation: str
    nodes: List[NodeReport]
    provenance: Provenance

    @classmethod
    def from_forest(
        cls,
        forest: Forest,
        provenance: Provenance,
        mass_of: Optional[Callable[[Region], Any]] = None,
    ) -> "ForestReport":
        nodes = []
        for i, r in enumerate(forest.nodes):
            lv = forest.levels[i]
            nodes.append(NodeReport(
                id=i,
                region=region_to_dict(r),
                label=str(r),
                dim=r.dim,
                parent=forest.parents[i],
                level=_num(lv) if lv is not None else None,
                mass=_num(mass_of(r)) if mass_of is not None else None,
            ))
        return cls(separation=str(forest.relation), nodes=nodes, provenance=provenance)

    @classmethod
    def from_json(cls, text: str) -> "ForestReport":
        return cls.model_validate_json(text)

    def to_json(self) -> str:
        return dump_json(self.model_dump(mode="json"))

    def to_forest(self) -> Forest:
        regions = [region_from_dict(n.region) for n in self.nodes]
        levels = [as_rational(n.level) if n.level is not None else None for n in self.nodes]
        return Forest.from_parents(regions, SeparationRelation.parse(self.separation),
                                   [n.parent for n in self.nodes], levels)

    def graph(self) -> nx.DiGraph:
        """Containment graph with child → parent edges."""
        g = nx.DiGraph()
        for n in self.nodes:
            g.add_node(n.id, label=n.label, level=n.level, dim=n.dim)
        g.add_edges_from((n.id, n.parent) for n in self.nodes if n.parent is not None)
        return g

    def to_dot(self) -> str:
        g = self.graph()
        lines = ["digraph forest {", "  rankdir=BT;", "  node [shape=box];"]
        for i in sorted(g.nodes):
            data = g.nodes[i]
            label = data["label"] if data["level"] is None else f"{data['label']}\\nlevel {data['level']}"
            label = label.replace('"', '\\"')
            lines.append(f'  n{i} [label="{label}", dim={data["dim"]}];')
        for child, parent in sorted(g.edges):
            lines.append(f"  n{child} -> n{parent};")
        lines.append("}")
        return "\n".join(lines) + "\n"


class SiblingModel(BaseModel):
    first: str
    second: str
    kin: bool
    height: Optional[str] = None
    grounded: bool
    fine: bool
    motivated: bool
    margin: Optional[str] = None


class AdaptednessModel(BaseModel):
    adapted: bool
    reason: Optional[str] = None
    siblings: List[SiblingModel]

    @classmethod
    def from_report(cls, report: AdaptednessReport) -> "AdaptednessModel":
        return cls(
            adapted=report.adapted,
            reason=report.reason,
            siblings=[
                SiblingModel(
                    first=str(s.first), second=str(s.second), kin=s.kin,
                    height=_num(s.height) if s.height is not None else None,
                    grounded=s.grounded, fine=s.fine, motivated=s.motivated,
                    margin=_num(s.margin) if s.margin is not None else None,
                )
                for s in report.siblings
            ],
        )

    def to_json(self) -> str:
        return dump_json(self.model_dump(mode="json"))


class StepModel(BaseModel):
    depth: int
    forest: ForestReport
    adapted: bool


class SequenceModel(BaseModel):
    steps: List[StepModel]
    limit: ForestReport
    finest_side: str

    @classmethod
    def from_report(cls, report: RefinementReport, spec_sha256: str) -> "SequenceModel":
        steps = [
            StepModel(
                depth=s.depth,
                forest=ForestReport.from_forest(s.forest, Provenance(spec_sha256=spec_sha256, engine="grid",
                                                                     depth=s.depth), s.grid.mass),
                adapted=a.adapted,
            )
            for s, a in zip(report.steps, report.adaptedness)
        ]
        last = report.steps[-1]
        limit = ForestReport.from_forest(report.limit, Provenance(spec_sha256=spec_sha256, engine="refinement",
                                                                  depth=last.depth))
        return cls(steps=steps, limit=limit, finest_side=_num(report.finest_side))

    def to_json(self) -> str:
        return dump_json(self.model_dump(mode="json"))


class TableRow(BaseModel):
    density: str
    relation: str
    count: int
    nodes: List[str]


class TableModel(BaseModel):
    name: str
    rows: List[TableRow]

    def to_json(self) -> str:
        return dump_json(self.model_dump(mode="json"))

    def diff(self, golden: "TableModel") -> List[str]:
        """Mismatching cells as "density × relation: expected … got …"."""
        mine = {(r.density, r.relation): r for r in self.rows}
        theirs = {(r.density, r.relation): r for r in golden.rows}
        problems = []
        for key in sorted(set(mine) | set(theirs)):
            a, b = mine.get(key), theirs.get(key)
            if a is None or b is None:
                problems.append(f"{key[0]} × {key[1]}: {'missing' if a is None else 'unexpected'} row")
            elif (a.count, a.nodes) != (b.count, b.nodes):
                problems.append(f"{key[0]} × {key[1]}: expected {b.count} {b.nodes}, got {a.count} {a.nodes}")
        return problems


# =============================================================================
# OUTPUT
# =============================================================================

def dump_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def spec_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("[Report] wrote %s", path)
    return path
