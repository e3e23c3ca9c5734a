"""
Progress Runner Module

This module provides a runner that displays a spinner and timer while work
items are executed by an inner runner.
"""

import threading
import time
from typing import Callable, Iterable, List, Optional, TypeVar

from rich.console import Console

from dgff_lab.runners.irunner import IRunner
from dgff_lab.runners.runner import Runner

T = TypeVar("T")
R = TypeVar("R")


class ProgressRunner(IRunner):
    """
    Runner that displays a spinner, a completed-items counter and the elapsed
    time while an inner runner does the work.
    """

    def __init__(self, inner: Optional[IRunner] = None, label: str = "Running", console: Optional[Console] = None):
        """
        Initialize a ProgressRunner instance with a Rich console.

        Args:
            inner: Runner doing the work (serial by default).
            label: Text shown next to the spinner.
            console: Console to draw on; defaults to stderr.
        """
        self.inner = inner or Runner()
        self.label = label
        self.console = console or Console(stderr=True)

    @property
    def threads(self) -> int:
        return int(getattr(self.inner, "threads", 1))

    def with_logger(self, logger) -> "ProgressRunner":
        """
        Configure the inner runner with a logger.

        Returns:
            ProgressRunner: The configured runner instance (self).
        """
        self.inner.with_logger(logger)
        return self

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        Run the items through the inner runner with a live status line.

        Raises:
            RuntimeError: If a work item fails (propagated from the inner runner).
        """
        work = list(items)
        total = len(work)
        done = [0]
        lock = threading.Lock()
        start_time = time.time()

        def update_status() -> str:
            elapsed = time.time() - start_time
            minutes, seconds = divmod(int(elapsed), 60)
            return (
                f"[blue]{self.label}:[/blue] {done[0]}/{total} "
                f"[[blue]{minutes:02d}:{seconds:02d}[/blue]]"
            )

        def tracked(item: T) -> R:
            result = fn(item)
            with lock:
                done[0] += 1
            return result

        with self.console.status(update_status(), spinner="dots", refresh_per_second=10) as status:
            stop_event = threading.Event()

            def update_timer() -> None:
                while not stop_event.is_set():
                    status.update(update_status())
                    time.sleep(0.1)

            timer_thread = threading.Thread(target=update_timer, daemon=True)
            timer_thread.start()
            try:
                results = self.inner.map(tracked, work)
            except Exception as e:
                status.update(f"Error: {e}")
                raise
            finally:
                stop_event.set()
                timer_thread.join(timeout=1.0)
            status.update(update_status())
        return results
