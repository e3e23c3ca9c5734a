"""
Test module for seeded random streams.
"""

import numpy as np
import pytest

from dgff_lab.rng import MAX_SEED, StreamFactory, child_streams, make_stream, stream_label


class TestMakeStream:
    """Stream derivation from (seed, tag, index)."""

    def test_reproducible(self):
        assert np.array_equal(make_stream(1, "fields", 3).random(5), make_stream(1, "fields", 3).random(5))

    def test_distinct_streams(self):
        base = make_stream(1, "fields", 0).random(5)
        assert not np.array_equal(base, make_stream(1, "fields", 1).random(5))
        assert not np.array_equal(base, make_stream(1, "walks", 0).random(5))
        assert not np.array_equal(base, make_stream(2, "fields", 0).random(5))

    def test_seed_range(self):
        make_stream(MAX_SEED, "edge")
        with pytest.raises(ValueError, match="Master seed"):
            make_stream(-1, "fields")
        with pytest.raises(ValueError, match="Master seed"):
            make_stream(2**64, "fields")

    def test_label(self):
        label = stream_label(1, "fields")
        assert len(label) == 32
        assert label == stream_label(1, "fields", 0)
        assert label != stream_label(1, "fields", 1)


class TestStreamFactory:
    """Per-run stream bookkeeping."""

    def test_ledger(self):
        factory = StreamFactory(7)
        factory.streams("q", 4)
        factory.stream("c_beta")
        ledger = factory.seed_ledger()
        assert list(ledger) == ["c_beta", "q"]
        assert ledger["q"]["indices"] == [0, 3]
        assert ledger["q"]["count"] == 4
        assert ledger["c_beta"]["indices"] == [0]
        assert ledger["q"]["first_key"] == stream_label(7, "q", 0)
        assert "Philox" in ledger["q"]["derivation"]

    def test_repeated_index_counted_once(self):
        factory = StreamFactory(7)
        factory.stream("q", 2)
        factory.stream("q", 2)
        assert factory.seed_ledger()["q"]["count"] == 1

    def test_matches_make_stream(self):
        assert np.array_equal(StreamFactory(7).stream("q", 1).random(3), make_stream(7, "q", 1).random(3))


class TestChildStreams:
    """Jumped generators for work items."""

    def test_independent_of_count(self):
        first = [s.random(3) for s in child_streams(make_stream(1, "parent"), 2)]
        second = [s.random(3) for s in child_streams(make_stream(1, "parent"), 5)]
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_children_differ(self):
        children = child_streams(make_stream(1, "parent"), 3)
        draws = [c.random(3) for c in children]
        assert not np.array_equal(draws[0], draws[1])
        assert not np.array_equal(draws[1], draws[2])
