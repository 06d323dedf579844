"""
Catalog of worked example densities and the tables built from them.

Structure:
- DENSITIES_1D: piecewise-linear densities on [0,1] by name
- INDICATORS: two-part indicator configurations on [-1,1]^2
- Saddle, curve and mixture builders for the 2D examples
- build_dim_one_table / build_indicator_table regenerate the example tables
"""

from fractions import Fraction
from typing import Callable, Dict, List

from unicluster.errors import ClusteringError
from unicluster.services.clustering import cluster_density_1d, cluster_density_grid
from unicluster.services.density import BilinearDensity, DensityModel1D, GridDensity
from unicluster.services.geometry import Box, DyadicCellUnion, Polyline
from unicluster.services.mixture import DimComponent, MixtureMeasure
from unicluster.services.report import TableModel, TableRow
from unicluster.services.separation import SeparationRelation

F = Fraction


# =============================================================================
# ONE-DIMENSIONAL DENSITIES
# =============================================================================

# "knots": continuous through (x, value); "pieces": (value after x_k, value before x_k+1) with point values
DENSITIES_1D: Dict[str, dict] = {
    "twin-peaks": {
        "knots": [(0, 0), (F(1, 3), F(1, 3)), (F(1, 2), F(1, 6)), (F(2, 3), F(1, 3)), (1, 0)],
    },
    "merlon": {
        "breakpoints": [0, F(1, 3), F(2, 3), 1],
        "pieces": [(1, 1), (F(1, 2), F(1, 2)), (1, 1)],
        "points": [1, 1, 1, 1],
    },
    "camel": {
        "knots": [(0, 0), (F(1, 4), 1), (F(1, 2), F(1, 2)), (F(3, 4), 1), (1, 0)],
    },
    "m": {
        "breakpoints": [0, F(1, 2), 1],
        "pieces": [(1, F(1, 2)), (F(1, 2), 1)],
        "points": [1, F(1, 2), 1],
    },
    "factory": {
        "breakpoints": [0, F(1, 2), 1],
        "pieces": [(1, F(1, 2)), (1, 1)],
        "points": [1, 1, 1],
    },
    # zeros exactly at 0, 1/2 and 1
    "double-tent": {
        "knots": [(0, 0), (F(1, 4), 1), (F(1, 2), 0), (F(3, 4), 1), (1, 0)],
    },
}

TABLE_DENSITIES = ["camel", "factory", "m", "merlon", "twin-peaks"]
TABLE_RELATIONS = ["disjoint", "tau:1/10", "tau:2"]


def density_1d(name: str) -> DensityModel1D:
    """Build a catalog density by name."""
    entry = DENSITIES_1D.get(name)
    if entry is None:
        raise ClusteringError("parse-error", f"unknown example density {name!r}",
                              known=", ".join(sorted(DENSITIES_1D)))
    if "knots" in entry:
        return DensityModel1D.from_knots(entry["knots"])
    return DensityModel1D.from_pieces(entry["breakpoints"], entry["pieces"], entry["points"])


# =============================================================================
# TWO-DIMENSIONAL EXAMPLES
# =============================================================================

SQUARE = Box((-1, -1), (1, 1))


def saddle() -> BilinearDensity:
    """f(x, y) = xy + 1 on [-1,1]^2."""
    return BilinearDensity(SQUARE, a=1, e=1)


def _hyperbola(base: int, scale: Fraction, steps: int = 16) -> Polyline:
    """Polyline through (±r·scale, ∓1/r), r ≈ base^(2t), on the level curve xy = const."""
    vertices = []
    for k in range(steps + 1):
        r = Fraction(base ** (2 * k / steps)).limit_denominator(10 ** 6)
        vertices.append((scale * r, -1 / r) if scale > 0 else (scale * r, 1 / r))
    return Polyline.through(vertices)


CURVES: Dict[str, dict] = {
    "segment": {"carrier": lambda: Polyline.through([(0, 0), (1, 0)]), "density": "merlon"},
    "g1": {"carrier": lambda: _hyperbola(3, F(-1, 9)), "density": "camel"},
    "g2": {"carrier": lambda: _hyperbola(2, F(1, 4)), "density": "m"},
}


def curve(name: str) -> Polyline:
    if name not in CURVES:
        raise ClusteringError("parse-error", f"unknown example curve {name!r}")
    return CURVES[name]["carrier"]()


def curve_components() -> List[DimComponent]:
    return [DimComponent.on_curve(density_1d(c["density"]), c["carrier"]()) for c in CURVES.values()]


def atoms_and_line() -> MixtureMeasure:
    """δ0 + 2δ1 + δ2 plus a density vanishing at 0, 1/2 and 1."""
    atoms = DimComponent.of_atoms([((0,), 1), ((1,), 2), ((2,), 1)])
    return MixtureMeasure((atoms, DimComponent.on_line(density_1d("double-tent"))))


def curves_and_saddle(depth: int = 6) -> MixtureMeasure:
    """Merlon, Camel and M on curves plus the saddle sampled at cell centers."""
    source = saddle()
    grid = GridDensity.from_function(source, SQUARE, depth, "center")
    return MixtureMeasure(tuple(curve_components()) + (DimComponent.on_grid(grid, source),))


MIXTURES = {
    "atoms-and-line": atoms_and_line,
    "curves-and-saddle": curves_and_saddle,
}


def mixture(name: str) -> MixtureMeasure:
    if name not in MIXTURES:
        raise ClusteringError("parse-error", f"unknown example mixture {name!r}")
    return MIXTURES[name]()


# =============================================================================
# INDICATORS
# =============================================================================

INDICATOR_DEPTH = 3


def _square_cells(lo: int, hi: int) -> List[tuple]:
    return [(i, j) for i in range(lo, hi + 1) for j in range(lo, hi + 1)]


def _disc_cells(centers, radius: Fraction, depth: int) -> List[tuple]:
    side = SQUARE.side(depth)
    cells = []
    for i in range(2 ** depth):
        for j in range(2 ** depth):
            x = SQUARE.lo[0] + (i + F(1, 2)) * side[0]
            y = SQUARE.lo[1] + (j + F(1, 2)) * side[1]
            if any((x - cx) ** 2 + (y - cy) ** 2 <= radius ** 2 for cx, cy in centers):
                cells.append((i, j))
    return cells


INDICATORS: Dict[str, Callable[[], List[tuple]]] = {
    "corner-squares": lambda: _square_cells(0, 3) + _square_cells(4, 7),
    "separated-squares": lambda: _square_cells(0, 2) + _square_cells(5, 7),
    "overlapping-discs": lambda: _disc_cells([(F(-1, 4), 0), (F(1, 4), 0)], F(1, 2), INDICATOR_DEPTH),
}


def indicator(name: str) -> GridDensity:
    if name not in INDICATORS:
        raise ClusteringError("parse-error", f"unknown indicator configuration {name!r}")
    cells = DyadicCellUnion.from_cells(SQUARE, INDICATOR_DEPTH, INDICATORS[name]())
    return GridDensity.indicator(cells)


# =============================================================================
# TABLES
# =============================================================================

def build_dim_one_table() -> TableModel:
    rows = []
    for name in TABLE_DENSITIES:
        f = density_1d(name)
        for rel in TABLE_RELATIONS:
            forest = cluster_density_1d(f, SeparationRelation.parse(rel))
            rows.append(TableRow(density=name, relation=rel, count=len(forest),
                                 nodes=[str(r) for r in forest.nodes]))
    return TableModel(name="dim-one", rows=rows)


def build_indicator_table() -> TableModel:
    rows = []
    for name in sorted(INDICATORS):
        forest = cluster_density_grid(indicator(name), SeparationRelation.disjoint())
        rows.append(TableRow(density=name, relation="disjoint", count=len(forest),
                             nodes=[str(r) for r in forest.nodes]))
    return TableModel(name="indicators", rows=rows)


TABLES = {
    "table_dim_one.json": build_dim_one_table,
    "table_indicators.json": build_indicator_table,
}
