"""
Runner Factory Module

Registry of the Monte Carlo work runners and the choice between them for a
run: ``serial`` for one thread, ``pool`` otherwise, wrapped in ``progress``
when a terminal is attached.
"""

from typing import Any, Dict, List, Optional, Type

from rich.console import Console

from dgff_lab.runners.irunner import IRunner


class RunnerFactory:
    """
    Factory for work runners, keyed by name.

    Every runner returns results in item order, so the name only decides how
    the items are scheduled, never what they compute.
    """

    _runners: Dict[str, Type[IRunner]] = {}

    @classmethod
    def register(cls, name: str, runner_class: Type[IRunner]) -> None:
        """
        Register a runner class under a name.

        Raises:
            TypeError: If the class does not implement IRunner.
        """
        if not (isinstance(runner_class, type) and issubclass(runner_class, IRunner)):
            raise TypeError(f"Runner {name!r} must implement IRunner: {runner_class!r}")
        cls._runners[name] = runner_class

    @classmethod
    def create(cls, name: str, **kwargs: Any) -> IRunner:
        """
        Create a runner by name.

        Args:
            name: Registered name (``serial``, ``pool``, ``progress`` by default).
            **kwargs: Constructor arguments, e.g. ``threads`` or ``inner``.

        Raises:
            ValueError: If the name is not registered.
        """
        if name not in cls._runners:
            raise ValueError(f"Unknown runner type: {name}. Available types: {', '.join(cls._runners.keys())}")
        return cls._runners[name](**kwargs)

    @classmethod
    def for_threads(
        cls,
        threads: int,
        label: str = "Running",
        console: Optional[Console] = None,
        show_progress: bool = False,
    ) -> IRunner:
        """
        Runner for a thread count, optionally behind a progress spinner.

        Args:
            threads: Worker threads; 1 selects the serial runner.
            label: Spinner text.
            console: Console the spinner writes to.
            show_progress: Wrap the runner in ``progress``.

        Raises:
            ValueError: If threads < 1.
        """
        if threads < 1:
            raise ValueError(f"Thread count must be >= 1: {threads}")
        runner = cls.create("serial") if threads == 1 else cls.create("pool", threads=threads)
        if show_progress:
            runner = cls.create("progress", inner=runner, label=label, console=console)
        return runner

    @classmethod
    def available_runners(cls) -> List[str]:
        """Registered runner names, in registration order."""
        return list(cls._runners.keys())
