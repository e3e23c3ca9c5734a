"""
Runners Package

This package provides work runners that execute independent Monte Carlo work
items serially, on a thread pool, or behind a progress display.
"""

from dgff_lab.runners.irunner import IRunner
from dgff_lab.runners.runner import Runner
from dgff_lab.runners.pool_runner import PoolRunner
from dgff_lab.runners.progress_runner import ProgressRunner
from dgff_lab.runners.runner_factory import RunnerFactory

# Register default runners
RunnerFactory.register("serial", Runner)
RunnerFactory.register("pool", PoolRunner)
RunnerFactory.register("progress", ProgressRunner)

__all__ = [
    'IRunner',
    'Runner',
    'PoolRunner',
    'ProgressRunner',
    'RunnerFactory',
]
