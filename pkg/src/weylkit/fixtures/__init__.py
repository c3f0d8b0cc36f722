"""Shipped fixture files: potentials, boundary operators, synthetic models.

These back the selftest suite and serve as format examples for user files.
"""

from importlib import resources

from ..linalg import BoundaryOperator, load_boundary_operator
from ..potential import PotentialModel, load_potential

__all__ = ["fixture_path", "load_fixture_potential", "load_fixture_alpha",
           "SHIPPED_POTENTIALS"]

SHIPPED_POTENTIALS = (
    "potential_free_d1",
    "potential_const_diag_d2",
    "potential_random_d2",
    "potential_random_d3",
)


def fixture_path(name: str):
    """Filesystem path of a shipped fixture (add .json if missing)."""
    if not name.endswith(".json"):
        name = name + ".json"
    return resources.files(__package__) / name


def load_fixture_potential(name: str) -> PotentialModel:
    with resources.as_file(fixture_path(name)) as p:
        return load_potential(p)


def load_fixture_alpha(name: str) -> BoundaryOperator:
    with resources.as_file(fixture_path(name)) as p:
        return load_boundary_operator(p)
