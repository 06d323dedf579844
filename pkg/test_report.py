"""Report wire models, DOT rendering and golden table diffs."""

import json
from fractions import Fraction

import pytest

from unicluster.data import examples
from unicluster.errors import ClusteringError
from unicluster.routers.commands import GOLDEN_DIR
from unicluster.services.clustering import cluster_density_1d
from unicluster.services.forest import Forest
from unicluster.services.geometry import Atom, Box, DyadicCellUnion, Interval1D, Polyline
from unicluster.services.report import (
    ForestReport,
    Provenance,
    TableModel,
    TableRow,
    dump_json,
    region_from_dict,
    region_to_dict,
    spec_digest,
)
from unicluster.services.separation import SeparationRelation

F = Fraction
DISJOINT = SeparationRelation.disjoint()


def twin_peaks_report(relation=DISJOINT):
    f = examples.density_1d("twin-peaks")
    forest = cluster_density_1d(f, relation)
    return forest, ForestReport.from_forest(forest, Provenance(spec_sha256=spec_digest(""), engine="exact-1d"), f.mass)


def test_forest_report_fields():
    _, report = twin_peaks_report()
    assert [n.label for n in report.nodes] == ["(0,1)", "(1/6,1/2)", "(1/2,5/6)"]
    assert [n.parent for n in report.nodes] == [None, 0, 0]
    assert [n.level for n in report.nodes] == ["0", "1/6", "1/6"]
    assert report.nodes[0].mass == "7/36"
    assert report.separation == "disjoint"


@pytest.mark.parametrize("relation", ["disjoint", "tau:1/10"])
def test_forest_report_restores_the_forest(relation):
    forest, report = twin_peaks_report(SeparationRelation.parse(relation))
    again = ForestReport.from_json(report.to_json())
    assert again == report
    assert again.to_forest() == forest


def test_json_is_deterministic():
    _, first = twin_peaks_report()
    _, second = twin_peaks_report()
    assert first.to_json() == second.to_json()
    assert dump_json({"b": 1, "a": [1]}) == '{\n  "a": [\n    1\n  ],\n  "b": 1\n}\n'


def test_dot_draws_child_to_parent_edges():
    _, report = twin_peaks_report()
    dot = report.to_dot()
    assert dot.startswith("digraph forest {")
    assert "rankdir=BT;" in dot
    assert "n1 -> n0;" in dot and "n2 -> n0;" in dot
    assert 'n0 [label="(0,1)\\nlevel 0", dim=1];' in dot


def test_graph_is_a_forest():
    _, report = twin_peaks_report()
    g = report.graph()
    assert sorted(g.edges) == [(1, 0), (2, 0)]
    assert all(g.out_degree(n) <= 1 for n in g.nodes)


# =============================================================================
# REGIONS
# =============================================================================

@pytest.mark.parametrize("region", [
    Interval1D(0, F(1, 3), True, False),
    Atom((F(1, 2), -1)),
    DyadicCellUnion.from_cells(Box((0, 0), (1, 1)), 2, [(0, 0), (3, 1)]),
    Polyline.through([(0, 0), (1, 1)]).with_span(Interval1D(F(1, 4), F(1, 2))),
])
def test_region_dicts(region):
    data = region_to_dict(region)
    assert json.loads(json.dumps(data)) == data
    assert region_from_dict(data) == region


def test_unknown_region_kind():
    with pytest.raises(ClusteringError) as e:
        region_from_dict({"kind": "sphere"})
    assert e.value.code == "parse-error"


def test_missing_region_field():
    with pytest.raises(ClusteringError) as e:
        region_from_dict({"kind": "interval", "lo": "0"})
    assert e.value.code == "parse-error"


# =============================================================================
# TABLES
# =============================================================================

def test_table_diff_names_mismatching_cells():
    golden = TableModel(name="t", rows=[
        TableRow(density="camel", relation="disjoint", count=3, nodes=["a", "b", "c"]),
        TableRow(density="m", relation="tau:2", count=1, nodes=["[0,1]"]),
    ])
    mine = TableModel(name="t", rows=[
        TableRow(density="camel", relation="disjoint", count=1, nodes=["a"]),
        TableRow(density="merlon", relation="tau:2", count=1, nodes=["[0,1]"]),
    ])
    problems = mine.diff(golden)
    assert problems == [
        "camel × disjoint: expected 3 ['a', 'b', 'c'], got 1 ['a']",
        "m × tau:2: missing row",
        "merlon × tau:2: unexpected row",
    ]
    assert golden.diff(golden) == []


@pytest.mark.parametrize("filename", sorted(examples.TABLES))
def test_tables_match_golden_files(filename):
    golden = TableModel.model_validate_json((GOLDEN_DIR / filename).read_text(encoding="utf-8"))
    assert examples.TABLES[filename]().diff(golden) == []


def test_empty_forest_report():
    report = ForestReport.from_forest(Forest.empty(DISJOINT), Provenance(spec_sha256="x", engine="simple"))
    assert report.nodes == []
    assert report.to_dot().count("->") == 0
