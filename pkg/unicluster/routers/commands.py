"""
Command Handlers - one per CLI subcommand

Each handler takes the parsed argparse namespace, runs the matching
engine and writes its report. Handlers raise ClusteringError for every
failure; main() turns that into exit status 2.

Subcommands:
- cluster SPEC:                 forest JSON + DOT
- check-adapted Q_SPEC P_SPEC:  adaptedness report
- approx SPEC --depths 4,6,8:   refinement sequence report
- tables:                       regenerate the example tables, diff against golden files
"""

import logging
from pathlib import Path
from typing import Callable, List, Optional, Tuple

from unicluster.config import get_settings
from unicluster.data import examples
from unicluster.errors import ClusteringError
from unicluster.services.adapted import is_adapted
from unicluster.services.clustering import canonical_simple_measure, cluster_density_1d, cluster_density_grid, \
    cluster_simple
from unicluster.services.forest import Forest
from unicluster.services.geometry import as_rational
from unicluster.services.measure import SimpleMeasure
from unicluster.services.mixture import cluster_mixture
from unicluster.services.refinement import refine_and_cluster
from unicluster.services.report import (
    AdaptednessModel,
    ForestReport,
    Provenance,
    SequenceModel,
    TableModel,
    spec_digest,
    write_text,
)
from unicluster.services.specfile import (
    RunSpec,
    build_density1d,
    build_grid,
    build_mixture,
    build_simple,
    load_spec,
)

settings = get_settings()
logger = logging.getLogger(__name__)

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "data" / "golden"


def _output_dir() -> Path:
    return Path(settings.output_dir)


def _golden_dir(override: Optional[str]) -> Path:
    if override:
        return Path(override)
    return Path(settings.golden_dir) if settings.golden_dir else GOLDEN_DIR


# =============================================================================
# CLUSTER
# =============================================================================

def cluster_spec(spec: RunSpec, separation: Optional[str] = None,
                 depth: Optional[int] = None) -> Tuple[Forest, str, Optional[int], Callable]:
    """(forest, engine name, grid depth, mass function) for the spec's measure stanza."""
    relation = spec.relation(separation)
    kind = spec.kind
    if kind == "simple":
        q = build_simple(spec, relation)
        return cluster_simple(q), "simple", None, q.mass
    if kind == "density1d":
        f = build_density1d(spec)
        return cluster_density_1d(f, relation), "exact-1d", None, f.mass
    if kind == "grid":
        grid = build_grid(spec, depth)
        return cluster_density_grid(grid, relation), "grid", grid.depth, grid.mass
    m = build_mixture(spec, depth)
    grids = [c.grid.depth for c in m.components if c.grid is not None]
    return cluster_mixture(m, relation), "mixture", (grids[0] if grids else None), m.mass


def run_cluster(args) -> int:
    spec, text = load_spec(args.spec)
    forest, engine, depth, mass_of = cluster_spec(spec, args.separation, args.depth)
    report = ForestReport.from_forest(forest, Provenance(spec_sha256=spec_digest(text), engine=engine, depth=depth),
                                      mass_of)
    stem = Path(args.spec).stem
    json_path = args.out_json or spec.output.json_path or _output_dir() / f"{stem}.forest.json"
    dot_path = args.out_dot or spec.output.dot_path or _output_dir() / f"{stem}.forest.dot"
    write_text(json_path, report.to_json())
    write_text(dot_path, report.to_dot())
    logger.info("[CLI] %s: %d clusters (%s)", stem, len(forest), engine)
    print(f"{len(forest)} clusters -> {json_path}")
    return 0


# =============================================================================
# CHECK-ADAPTED
# =============================================================================

def _as_simple(spec: RunSpec, separation: Optional[str], depth: Optional[int]) -> SimpleMeasure:
    relation = spec.relation(separation)
    if spec.kind == "simple":
        return build_simple(spec, relation)
    if spec.kind == "grid":
        return canonical_simple_measure(build_grid(spec, depth), relation)
    raise ClusteringError("parse-error", f"Q must be a [simple] or [grid] measure, not [{spec.kind}]")


def _as_reference(spec: RunSpec, separation: Optional[str], depth: Optional[int]):
    if spec.kind == "density1d":
        return build_density1d(spec)
    if spec.kind == "grid":
        return build_grid(spec, depth)
    if spec.kind == "simple":
        return build_simple(spec, spec.relation(separation))
    raise ClusteringError("unsupported-dimension", "adaptedness below a mixture is not available")


def run_check_adapted(args) -> int:
    q_spec, _ = load_spec(args.q_spec)
    p_spec, _ = load_spec(args.p_spec)
    q = _as_simple(q_spec, args.separation, args.depth)
    p = _as_reference(p_spec, args.separation, args.depth)
    report = is_adapted(q, p)
    out = args.out_json or _output_dir() / f"{Path(args.q_spec).stem}.adapted.json"
    write_text(out, AdaptednessModel.from_report(report).to_json())
    if not report.adapted:
        raise ClusteringError("not-adapted", report.reason)
    print(f"adapted ({len(report.siblings)} sibling pairs) -> {out}")
    return 0


# =============================================================================
# APPROX
# =============================================================================

def _parse_depths(text: Optional[str]) -> List[int]:
    if not text:
        return [settings.default_depth]
    try:
        return [int(d) for d in text.split(",") if d.strip()]
    except ValueError:
        raise ClusteringError("parse-error", f"depths must be comma-separated integers, got {text!r}")


def run_approx(args) -> int:
    spec, text = load_spec(args.spec)
    relation = spec.relation(args.separation)
    if spec.kind == "density1d":
        f = build_density1d(spec)
    elif spec.kind == "grid" and spec.grid.source(spec.box) is not None:
        f = spec.grid.source(spec.box)
    else:
        raise ClusteringError("parse-error", "approx needs a [density1d] stanza or a grid with a continuous source")
    margin = as_rational(args.offset) if args.offset else 0
    report = refine_and_cluster(f, spec.box, _parse_depths(args.depths), relation, margin=margin)
    out = args.out_json or _output_dir() / f"{Path(args.spec).stem}.approx.json"
    write_text(out, SequenceModel.from_report(report, spec_digest(text)).to_json())
    print(f"{len(report.steps)} depths, {len(report.limit)} stable clusters -> {out}")
    return 0


# =============================================================================
# TABLES
# =============================================================================

def run_tables(args) -> int:
    golden = _golden_dir(args.golden_dir)
    problems = []
    for filename, build in examples.TABLES.items():
        table = build()
        write_text(_output_dir() / filename, table.to_json())
        golden_path = golden / filename
        if not golden_path.exists():
            problems.append(f"{filename}: no golden file in {golden}")
            continue
        expected = TableModel.model_validate_json(golden_path.read_text(encoding="utf-8"))
        problems.extend(f"{filename}: {p}" for p in table.diff(expected))
    if problems:
        raise ClusteringError("golden-mismatch", "; ".join(problems), cells=problems)
    print(f"{len(examples.TABLES)} tables match {golden}")
    return 0


COMMANDS = {
    "cluster": run_cluster,
    "check-adapted": run_check_adapted,
    "approx": run_approx,
    "tables": run_tables,
}
