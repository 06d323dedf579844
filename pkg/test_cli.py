"""Command line: subcommands, report files and exit status."""

import json
from textwrap import dedent

import pytest

from unicluster.errors import ClusteringError
from unicluster.main import main
from unicluster.services.report import ForestReport
from unicluster.services.specfile import parse_spec

TWIN_PEAKS = """
    [ambient]
    lo = ["0"]
    hi = ["1"]

    [density1d]
    example = "twin-peaks"
"""

UNIFORM = """
    [ambient]
    lo = [0]
    hi = [1]

    [density1d]
    knots = [[0, 1], [1, 1]]
"""

TWO_ROOTS = """
    [ambient]
    lo = [0]
    hi = [1]

    [simple]
    terms = [
        {region = {kind = "interval", lo = "0", hi = "1/4", lo_closed = true, hi_closed = true}, weight = "1/4"},
        {region = {kind = "interval", lo = "1/2", hi = "1", lo_closed = true, hi_closed = true}, weight = "1/2"},
    ]
"""

INNER = """
    [ambient]
    lo = [0]
    hi = [1]

    [simple]
    terms = [{region = {kind = "interval", lo = "1/4", hi = "3/4", lo_closed = true, hi_closed = true}, weight = "1/2"}]
"""


def write_spec(directory, name, text):
    path = directory / f"{name}.toml"
    path.write_text(dedent(text), encoding="utf-8")
    return str(path)


@pytest.fixture
def specs(tmp_path):
    directory = tmp_path / "specs"
    directory.mkdir()
    return directory


def test_cluster_writes_json_and_dot(out_dir, specs, capsys):
    assert main(["cluster", write_spec(specs, "twin", TWIN_PEAKS)]) == 0
    report = ForestReport.from_json((out_dir / "twin.forest.json").read_text(encoding="utf-8"))
    assert [n.label for n in report.nodes] == ["(0,1)", "(1/6,1/2)", "(1/2,5/6)"]
    assert report.provenance.engine == "exact-1d"
    assert len(report.provenance.spec_sha256) == 64
    assert "rankdir=BT" in (out_dir / "twin.forest.dot").read_text(encoding="utf-8")
    assert "3 clusters" in capsys.readouterr().out


def test_separation_override(out_dir, specs):
    assert main(["cluster", "--separation", "tau:2", write_spec(specs, "twin", TWIN_PEAKS)]) == 0
    report = ForestReport.from_json((out_dir / "twin.forest.json").read_text(encoding="utf-8"))
    assert report.separation == "tau:2"
    assert len(report.nodes) == 1


def test_explicit_output_paths(out_dir, specs, tmp_path):
    target = tmp_path / "elsewhere" / "forest.json"
    assert main(["cluster", "--out-json", str(target), write_spec(specs, "twin", TWIN_PEAKS)]) == 0
    assert target.exists()
    assert not (out_dir / "twin.forest.json").exists()


def test_cluster_grid_and_mixture(out_dir, specs):
    grid = """
        [ambient]
        lo = [-1, -1]
        hi = [1, 1]

        [grid]
        example = "separated-squares"
    """
    mixture = """
        [ambient]
        lo = [0]
        hi = [2]

        [mixture]
        example = "atoms-and-line"
    """
    assert main(["cluster", write_spec(specs, "squares", grid)]) == 0
    assert main(["cluster", write_spec(specs, "atoms", mixture)]) == 0
    squares = json.loads((out_dir / "squares.forest.json").read_text(encoding="utf-8"))
    atoms = json.loads((out_dir / "atoms.forest.json").read_text(encoding="utf-8"))
    assert len(squares["nodes"]) == 2
    assert len(atoms["nodes"]) == 5
    assert atoms["provenance"]["engine"] == "mixture"


def test_bad_separation_exits_with_two(out_dir, specs, capsys):
    assert main(["cluster", "--separation", "tau:1/0", write_spec(specs, "twin", TWIN_PEAKS)]) == 2
    assert "error: parse-error" in capsys.readouterr().err


def test_missing_spec_file(out_dir, specs):
    assert main(["cluster", str(specs / "absent.toml")]) == 2


# =============================================================================
# CHECK-ADAPTED
# =============================================================================

def test_check_adapted_accepts(out_dir, specs):
    code = main(["check-adapted", write_spec(specs, "inner", INNER), write_spec(specs, "uniform", UNIFORM)])
    assert code == 0
    report = json.loads((out_dir / "inner.adapted.json").read_text(encoding="utf-8"))
    assert report["adapted"] is True


def test_check_adapted_rejects_kin_roots(out_dir, specs, capsys):
    code = main(["check-adapted", write_spec(specs, "roots", TWO_ROOTS), write_spec(specs, "uniform", UNIFORM)])
    assert code == 2
    report = json.loads((out_dir / "roots.adapted.json").read_text(encoding="utf-8"))
    assert report["reason"] == "not grounded"
    assert "not-adapted" in capsys.readouterr().err


# =============================================================================
# APPROX & TABLES
# =============================================================================

def test_approx_reports_every_depth(out_dir, specs):
    assert main(["approx", "--depths", "4,6", write_spec(specs, "twin", TWIN_PEAKS)]) == 0
    report = json.loads((out_dir / "twin.approx.json").read_text(encoding="utf-8"))
    assert [s["depth"] for s in report["steps"]] == [4, 6]
    assert all(s["adapted"] for s in report["steps"])
    assert len(report["limit"]["nodes"]) == 3
    assert report["finest_side"] == "1/64"


def test_approx_rejects_decreasing_depths(out_dir, specs):
    assert main(["approx", "--depths", "6,4", write_spec(specs, "twin", TWIN_PEAKS)]) == 2
    assert main(["approx", "--depths", "four", write_spec(specs, "twin", TWIN_PEAKS)]) == 2


def test_tables_match_golden(out_dir):
    assert main(["tables"]) == 0
    assert (out_dir / "table_dim_one.json").exists()
    assert (out_dir / "table_indicators.json").exists()


def test_tables_against_a_stale_golden_dir(out_dir, tmp_path):
    stale = tmp_path / "stale"
    stale.mkdir()
    (stale / "table_dim_one.json").write_text('{"name": "dim-one", "rows": []}', encoding="utf-8")
    assert main(["tables", "--golden-dir", str(stale)]) == 2


# =============================================================================
# SPEC FILES
# =============================================================================

@pytest.mark.parametrize("text, code", [
    ("[ambient\nlo = [0]\n", "parse-error"),
    ('[ambient]\nlo = [0]\nhi = [1]\ncolour = "red"\n[density1d]\nexample = "camel"\n', "parse-error"),
    ("[ambient]\nlo = [0]\nhi = [1]\n", "parse-error"),
    ('[ambient]\nlo = [0, 0]\nhi = [1, 1]\n[density1d]\nexample = "camel"\n', "dimension-mismatch"),
    ('[ambient]\nlo = [0]\nhi = [1]\nseparation = "tau:0"\n[density1d]\nexample = "camel"\n', "parse-error"),
])
def test_malformed_specs(text, code):
    with pytest.raises(ClusteringError) as e:
        parse_spec(text)
    assert e.value.code == code


def test_toml_errors_carry_their_position():
    with pytest.raises(ClusteringError) as e:
        parse_spec("[ambient]\nlo = [0\nhi = [1]\n")
    assert e.value.detail["line"] is not None


def test_unknown_field_is_named():
    with pytest.raises(ClusteringError) as e:
        parse_spec('[ambient]\nlo = [0]\nhi = [1]\ncolour = "red"\n[density1d]\nexample = "camel"\n')
    assert e.value.detail["field"] == "ambient.colour"


@pytest.mark.parametrize("stanza", [
    '[simple]\nterms = [{region = {kind = "interval", lo = "1/2", hi = "3/2", lo_closed = true, hi_closed = true}, weight = "1"}]\n',
    '[mixture]\ncomponents = [{dim = 0, atoms = [{point = ["2"], weight = "1"}]}]\n',
])
def test_regions_outside_the_box_are_rejected(out_dir, specs, capsys, stanza):
    path = write_spec(specs, "outside", "[ambient]\nlo = [0]\nhi = [1]\n\n" + stanza)
    assert main(["cluster", path]) == 2
    assert "error: invalid-region" in capsys.readouterr().err
