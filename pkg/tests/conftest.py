"""
Pytest configuration: shared lattices, seeded generators and logger isolation.
"""

import logging

import numpy as np
import pytest

from dgff_lab.greens import green_exact
from dgff_lab.lattice import DomainSpec, build_lattice
from dgff_lab.rng import make_stream


@pytest.fixture(autouse=True)
def _restore_package_logger():
    """The CLI installs its own handler on the package logger; undo it after each test."""
    package_logger = logging.getLogger("dgff_lab")
    handlers = list(package_logger.handlers)
    level = package_logger.level
    propagate = package_logger.propagate
    yield
    package_logger.handlers[:] = handlers
    package_logger.setLevel(level)
    package_logger.propagate = propagate


@pytest.fixture
def two_site():
    """Disc of radius 2 around (0.5, 0) at N = 1: sites (0, 0) and (1, 0)."""
    return build_lattice(DomainSpec.disc((0.5, 0.0), 2.0), 1)


@pytest.fixture
def two_site_g():
    """Closed form of the two-site Green matrix."""
    return np.array([[16.0 / 15.0, 4.0 / 15.0], [4.0 / 15.0, 16.0 / 15.0]])


@pytest.fixture
def two_site_green(two_site):
    return green_exact(two_site)


@pytest.fixture
def single_site():
    """Disc of radius 2 around the origin at N = 1: the origin alone."""
    return build_lattice(DomainSpec.disc((0.0, 0.0), 2.0), 1)


@pytest.fixture
def square8():
    """Unit square at N = 8: the 5 x 5 block of sites 2..6."""
    return build_lattice(DomainSpec.unit_square(), 8)


@pytest.fixture
def rng():
    return make_stream(1, "test")


@pytest.fixture
def two_site_args(tmp_path):
    """Overrides describing the two-site lattice, writing into a temporary directory."""
    return [
        "domain=disc",
        "center=0.5,0",
        "radius=2",
        "N=1",
        f"out={tmp_path / 'out'}",
    ]
