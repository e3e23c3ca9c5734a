"""
Pool Runner Module

This module provides a runner that distributes work items over a thread pool.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from dgff_lab.errors import DgffLabError
from dgff_lab.runners.irunner import IRunner

T = TypeVar("T")
R = TypeVar("R")


class PoolRunner(IRunner):
    """
    Thread-pool runner.

    Results are collected in submission order, so the reduction a caller
    performs over them is independent of completion order. Work functions
    must draw only from the RNG stream carried by their item.
    """

    def __init__(self, threads: Optional[int] = None, logger: Optional[logging.Logger] = None) -> None:
        """
        Initialize a PoolRunner instance.

        Args:
            threads: Worker count; defaults to the CPU count.
            logger: Logger for failure messages.
        """
        self.threads = max(1, int(threads or os.cpu_count() or 1))
        self.logger = logger or logging.getLogger(__name__)

    def with_logger(self, logger: logging.Logger) -> "PoolRunner":
        """
        Configure the runner with a logger.

        Args:
            logger: Logger used for failure messages.

        Returns:
            PoolRunner: The configured runner instance (self).
        """
        self.logger = logger
        return self

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        Apply ``fn`` to every item on the pool.

        Raises:
            RuntimeError: If a work item fails with a non-lab error.
        """
        work = list(items)
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            futures = [executor.submit(fn, item) for item in work]
            results: List[R] = []
            for index, future in enumerate(futures):
                try:
                    results.append(future.result())
                except DgffLabError:
                    raise
                except Exception as e:
                    self.logger.error(f"Work item {index} failed: {e}")
                    raise RuntimeError(f"Work item {index} failed: {e}") from e
        self.logger.debug(f"Completed {len(work)} work items on {self.threads} threads")
        return results
