"""
Test module for PoolRunner class.
"""

import logging
import time
from unittest.mock import MagicMock

import numpy as np
import pytest

from dgff_lab.errors import TruncationError
from dgff_lab.rng import child_streams, make_stream
from dgff_lab.runners.pool_runner import PoolRunner
from dgff_lab.runners.runner import Runner


@pytest.fixture
def mock_logger():
    """Create a mock logger for testing."""
    return MagicMock(spec=logging.Logger)


class TestPoolRunner:
    """Test cases for the PoolRunner class."""

    def test_initialization(self):
        """Test default and explicit thread counts."""
        assert PoolRunner().threads >= 1
        assert PoolRunner(threads=3).threads == 3
        assert PoolRunner(threads=0).threads >= 1

    def test_with_logger(self, mock_logger):
        """Test that with_logger returns the runner itself."""
        runner = PoolRunner(threads=2)
        assert runner.with_logger(mock_logger) is runner
        assert runner.logger is mock_logger

    def test_results_in_submission_order(self):
        """Test that slow early items do not reorder results."""

        def work(x):
            time.sleep(0.01 * (5 - x))
            return x

        assert PoolRunner(threads=4).map(work, range(5)) == [0, 1, 2, 3, 4]

    def test_matches_serial_runner(self):
        """Test that per-item streams make pooled and serial results identical."""

        def work(stream):
            return stream.standard_normal(16).sum()

        streams_a = child_streams(make_stream(5, "pool"), 12)
        streams_b = child_streams(make_stream(5, "pool"), 12)
        pooled = PoolRunner(threads=4).map(work, streams_a)
        serial = Runner().map(work, streams_b)

        assert np.array_equal(pooled, serial)

    def test_general_exception(self, mock_logger):
        """Test that failures are wrapped with the item index."""

        def work(x):
            if x == 1:
                raise ZeroDivisionError("division by zero")
            return x

        runner = PoolRunner(threads=2, logger=mock_logger)
        with pytest.raises(RuntimeError, match="Work item 1 failed"):
            runner.map(work, [0, 1, 2])
        mock_logger.error.assert_called_once()

    def test_lab_error_propagates(self):
        """Test that lab errors are not wrapped."""

        def work(x):
            raise TruncationError("too shallow")

        with pytest.raises(TruncationError, match="too shallow"):
            PoolRunner(threads=2).map(work, [0])
