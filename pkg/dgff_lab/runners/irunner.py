"""
IRunner Interface Module

This module defines the interface for work runners.
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class IRunner(ABC):
    """
    Interface for work runners.

    A runner applies a pure function to independent work items (replicates,
    walk chunks) and returns the results in item order, whatever order the
    items were executed in. Implementations differ in scheduling (serial,
    thread pool, with or without a progress display).
    """

    @abstractmethod
    def with_logger(self, logger: logging.Logger) -> "IRunner":
        """
        Configure the runner with a logger.

        Args:
            logger: Logger used for progress and failure messages.

        Returns:
            IRunner: The configured runner instance (self).
        """
        pass

    @abstractmethod
    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        Apply ``fn`` to every item.

        Args:
            fn: Pure function of one work item.
            items: Work items.

        Returns:
            List[R]: Results in item order.

        Raises:
            RuntimeError: If a work item fails.
        """
        pass
