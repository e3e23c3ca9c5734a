"""
DGFF Overlap Lab
"""

__version__ = "0.1.0"

# Import the main entry points to make them available at package level
from .errors import (
    ConfigError,
    DgffLabError,
    ResourceCapError,
    StatisticalGateError,
)
from .lattice import DomainSpec, Lattice, build_lattice
from .greens import GreenMatrix, green_exact, green_mc, potential_kernel
from .fields import FieldSample, free_energy, gibbs, sample_dgff, sample_rem
from .overlap import derivative_identity, overlap_distribution
from .decorations import create_decoration
from .limitproc import perturbed_inner_product, sample_Q, sample_Q_rem
from .runners import IRunner, PoolRunner, ProgressRunner, Runner, RunnerFactory
from .rng import StreamFactory, make_stream

__all__ = [
    'ConfigError',
    'DgffLabError',
    'ResourceCapError',
    'StatisticalGateError',
    'DomainSpec',
    'Lattice',
    'build_lattice',
    'GreenMatrix',
    'green_exact',
    'green_mc',
    'potential_kernel',
    'FieldSample',
    'free_energy',
    'gibbs',
    'sample_dgff',
    'sample_rem',
    'derivative_identity',
    'overlap_distribution',
    'create_decoration',
    'perturbed_inner_product',
    'sample_Q',
    'sample_Q_rem',
    'IRunner',
    'PoolRunner',
    'ProgressRunner',
    'Runner',
    'RunnerFactory',
    'StreamFactory',
    'make_stream',
]
