"""
Shared test setup.

Hypothesis profiles:
    default   100 examples per property
    ci        1000 examples, no deadline

Select with UNICLUSTER_HYPOTHESIS_PROFILE=ci.
"""

from hypothesis import settings as hypothesis_settings
from pytest import fixture

from unicluster.config import get_settings
from unicluster.services.separation import SeparationRelation

collect_ignore = ["examples", "out"]

hypothesis_settings.register_profile("default", max_examples=100, deadline=None)
hypothesis_settings.register_profile("ci", max_examples=1000, deadline=None)
hypothesis_settings.load_profile(get_settings().hypothesis_profile)


@fixture
def disjoint():
    return SeparationRelation.disjoint()


@fixture(params=["disjoint", "tau:1/10", "tau:2"])
def relation(request):
    return SeparationRelation.parse(request.param)


@fixture
def out_dir(tmp_path, monkeypatch):
    """Point every default report path at a temporary directory."""
    settings = get_settings()
    monkeypatch.setattr(settings, "output_dir", str(tmp_path))
    return tmp_path
