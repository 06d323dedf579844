"""
Spec File Service

Parses the TOML run specification and turns its single measure stanza
into engine inputs.

Layout:
    [ambient]     box corners and the separation relation
    [simple] | [density1d] | [grid] | [mixture]   exactly one
    [output]      optional json / dot paths

Rationals are written as "p/q" strings (integers may stay bare) so no
input ever passes through a float. Density stanzas may name a catalog
example instead of spelling out knots.
"""

import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, ValidationError, model_validator

from unicluster.config import get_settings
from unicluster.data import examples
from unicluster.errors import ClusteringError
from unicluster.services.density import BilinearDensity, DensityModel1D, GridDensity
from unicluster.services.geometry import Atom, Box, Interval1D, Polyline, as_point, as_rational, contains
from unicluster.services.measure import SimpleMeasure, validate_representation
from unicluster.services.mixture import DimComponent, MixtureMeasure
from unicluster.services.report import region_from_dict
from unicluster.services.separation import SeparationRelation

settings = get_settings()
logger = logging.getLogger(__name__)

Rat = Union[int, str]


# =============================================================================
# STANZAS (Pydantic)
# =============================================================================

class _Stanza(BaseModel):
    class Config:
        extra = "forbid"


class AmbientStanza(_Stanza):
    lo: List[Rat]
    hi: List[Rat]
    separation: Optional[str] = None


class TermSpec(_Stanza):
    region: dict
    weight: Rat


class SimpleStanza(_Stanza):
    terms: List[TermSpec]


class Density1DStanza(_Stanza):
    example: Optional[str] = None
    knots: Optional[List[Tuple[Rat, Rat]]] = None
    breakpoints: Optional[List[Rat]] = None
    pieces: Optional[List[Tuple[Rat, Rat]]] = None
    points: Optional[List[Rat]] = None

    @model_validator(mode="after")
    def one_form(self):
        forms = [self.example is not None, self.knots is not None, self.breakpoints is not None]
        if sum(forms) != 1:
            raise ValueError("give exactly one of example, knots or breakpoints/pieces/points")
        if self.breakpoints is not None and (self.pieces is None or self.points is None):
            raise ValueError("breakpoints need pieces and points")
        return self

    def build(self) -> DensityModel1D:
        if self.example is not None:
            return examples.density_1d(self.example)
        if self.knots is not None:
            return DensityModel1D.from_knots(self.knots)
        return DensityModel1D.from_pieces(self.breakpoints, self.pieces, self.points)


class BilinearSpec(_Stanza):
    a: Rat
    b: Rat = 0
    c: Rat = 0
    e: Rat = 0


class GridStanza(_Stanza):
    example: Optional[str] = None
    bilinear: Optional[BilinearSpec] = None
    depth: Optional[int] = None
    values: Optional[list] = None
    sampling: str = "center"
    offset: Optional[Rat] = None

    @model_validator(mode="after")
    def one_form(self):
        if sum(x is not None for x in (self.example, self.bilinear, self.values)) != 1:
            raise ValueError("give exactly one of example, bilinear or values")
        if self.values is not None and self.depth is None:
            raise ValueError("explicit values need their depth")
        return self

    def source(self, box: Box):
        """The continuous model behind the grid, if any."""
        if self.bilinear is not None:
            b = self.bilinear
            return BilinearDensity(box, b.a, b.b, b.c, b.e)
        if self.example == "saddle":
            return examples.saddle()
        return None

    def build(self, box: Box, depth: Optional[int] = None) -> GridDensity:
        depth = depth if depth is not None else (self.depth if self.depth is not None else settings.default_depth)
        if self.values is not None:
            return GridDensity.from_values(box, self.depth, self.values)
        source = self.source(box)
        if source is not None:
            return GridDensity.from_function(source, box, depth, self.sampling, self.offset)
        return examples.indicator(self.example)


class CarrierSpec(_Stanza):
    example: Optional[str] = None
    vertices: Optional[List[List[Rat]]] = None
    knots: Optional[List[Rat]] = None

    def build(self) -> Polyline:
        if self.example is not None:
            return examples.curve(self.example)
        if self.vertices is None:
            raise ClusteringError("parse-error", "a carrier needs an example or vertices")
        return Polyline.through(self.vertices, self.knots)


class AtomSpec(_Stanza):
    point: List[Rat]
    weight: Rat


class ComponentSpec(_Stanza):
    dim: int
    atoms: Optional[List[AtomSpec]] = None
    density1d: Optional[Density1DStanza] = None
    carrier: Optional[CarrierSpec] = None
    grid: Optional[GridStanza] = None

    def build(self, box: Box, depth: Optional[int]) -> DimComponent:
        if self.atoms is not None:
            return DimComponent(self.dim, atoms=tuple((a.point, a.weight) for a in self.atoms))
        if self.density1d is not None:
            carrier = self.carrier.build() if self.carrier is not None else None
            return DimComponent(self.dim, density1d=self.density1d.build(), carrier=carrier)
        if self.grid is not None:
            grid = self.grid.build(box, depth)
            return DimComponent(self.dim, grid=grid, source=self.grid.source(box))
        raise ClusteringError("parse-error", "a mixture component needs atoms, density1d or grid")


class MixtureStanza(_Stanza):
    example: Optional[str] = None
    components: Optional[List[ComponentSpec]] = None

    @model_validator(mode="after")
    def one_form(self):
        if (self.example is None) == (self.components is None):
            raise ValueError("give exactly one of example or components")
        return self


class OutputStanza(_Stanza):
    json_path: Optional[str] = None
    dot_path: Optional[str] = None


class RunSpec(_Stanza):
    ambient: AmbientStanza
    simple: Optional[SimpleStanza] = None
    density1d: Optional[Density1DStanza] = None
    grid: Optional[GridStanza] = None
    mixture: Optional[MixtureStanza] = None
    output: OutputStanza = OutputStanza()

    @model_validator(mode="after")
    def one_measure(self):
        given = [name for name in ("simple", "density1d", "grid", "mixture") if getattr(self, name) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one of [simple], [density1d], [grid], [mixture] is required, got {given}")
        return self

    @property
    def kind(self) -> str:
        return next(name for name in ("simple", "density1d", "grid", "mixture") if getattr(self, name) is not None)

    @property
    def box(self) -> Box:
        return Box(as_point(self.ambient.lo), as_point(self.ambient.hi))

    def relation(self, override: Optional[str] = None) -> SeparationRelation:
        return SeparationRelation.parse(override or self.ambient.separation or settings.default_separation)


# =============================================================================
# PARSING
# =============================================================================

_TOML_POSITION = re.compile(r"\(at line (\d+), column (\d+)\)")


def parse_spec(text: str) -> RunSpec:
    """Validate spec text; TOML and schema problems become parse-error."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _TOML_POSITION.search(str(e))
        line, col = (int(match.group(1)), int(match.group(2))) if match else (None, None)
        raise ClusteringError("parse-error", f"invalid TOML: {e}", line=line, column=col)
    try:
        spec = RunSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ClusteringError("parse-error", f"{where}: {first['msg']}", field=where)
    _check_consistency(spec)
    return spec


def _check_consistency(spec: RunSpec) -> None:
    if spec.density1d is not None and spec.box.dim != 1:
        raise ClusteringError("dimension-mismatch", "a [density1d] stanza needs a one-dimensional box")
    spec.relation()


def load_spec(path: Union[str, Path]) -> Tuple[RunSpec, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ClusteringError("parse-error", f"cannot read {path}: {e.strerror}")
    spec = parse_spec(text)
    logger.info("[Spec] %s: %s stanza", path.name, spec.kind)
    return spec, text


# =============================================================================
# BUILDERS
# =============================================================================

def _require_inside(box: Box, region) -> None:
    if not box.holds(region):
        raise ClusteringError("invalid-region", f"{region} leaves the ambient box")


def build_simple(spec: RunSpec, relation: SeparationRelation) -> SimpleMeasure:
    terms = [(region_from_dict(t.region), as_rational(t.weight)) for t in spec.simple.terms]
    for region, _ in terms:
        if region.ambient_dim != spec.box.dim:
            raise ClusteringError("dimension-mismatch", f"{region} does not live in the ambient box")
        _require_inside(spec.box, region)
    return validate_representation(terms, relation)


def build_density1d(spec: RunSpec) -> DensityModel1D:
    f = spec.density1d.build()
    box = spec.box
    if not contains(Interval1D(box.lo[0], box.hi[0]), f.domain):
        raise ClusteringError("invalid-region", f"density domain {f.domain} leaves the ambient box")
    return f


def build_grid(spec: RunSpec, depth: Optional[int] = None) -> GridDensity:
    grid = spec.grid.build(spec.box, depth)
    if grid.dim != spec.box.dim:
        raise ClusteringError("dimension-mismatch", f"{grid.dim}D grid in a {spec.box.dim}D box")
    return grid


def build_mixture(spec: RunSpec, depth: Optional[int] = None) -> MixtureMeasure:
    stanza = spec.mixture
    if stanza.example == "curves-and-saddle":
        m = examples.curves_and_saddle(depth if depth is not None else settings.default_depth)
    elif stanza.example is not None:
        m = examples.mixture(stanza.example)
    else:
        m = MixtureMeasure(tuple(c.build(spec.box, depth) for c in stanza.components))
    for c in m.components:
        if c.ambient_dim != spec.box.dim:
            raise ClusteringError("dimension-mismatch", f"a dimension-{c.dim} component lives outside the box")
        for point, _ in c.atoms:
            _require_inside(spec.box, Atom(point))
        if c.carrier is not None:
            _require_inside(spec.box, c.carrier)
        elif c.density1d is not None:
            _require_inside(spec.box, c.density1d.domain)
    return m
