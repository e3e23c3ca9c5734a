"""
Standard Runner Module

This module provides the serial runner. It is the bit-reproducible mode used
by ``--threads 1``.
"""

import logging
from typing import Callable, Iterable, List, Optional, TypeVar

from dgff_lab.errors import DgffLabError
from dgff_lab.runners.irunner import IRunner

T = TypeVar("T")
R = TypeVar("R")


class Runner(IRunner):
    """
    Serial runner executing work items one after the other in the caller's thread.
    """

    def __init__(self, logger: Optional[logging.Logger] = None) -> None:
        """Initialize a Runner instance."""
        self.logger = logger or logging.getLogger(__name__)

    @property
    def threads(self) -> int:
        return 1

    def with_logger(self, logger: logging.Logger) -> "Runner":
        """
        Configure the runner with a logger.

        Args:
            logger: Logger used for failure messages.

        Returns:
            Runner: The configured runner instance (self).
        """
        self.logger = logger
        return self

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        Apply ``fn`` to every item in order.

        Raises:
            RuntimeError: If a work item fails with a non-lab error.
        """
        results: List[R] = []
        for index, item in enumerate(items):
            try:
                results.append(fn(item))
            except DgffLabError:
                # lab errors carry exit codes; let them through untouched
                raise
            except Exception as e:
                self.logger.error(f"Work item {index} failed: {e}")
                raise RuntimeError(f"Work item {index} failed: {e}") from e
        return results
