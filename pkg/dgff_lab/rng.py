"""
Random Streams Module

Counter-based random streams with deterministic stream splitting.

A stream is identified by (master seed, tag, index). The triple is hashed
with BLAKE2b and the digest becomes the key of a numpy ``Philox`` bit
generator, so streams never share state and a replicate's draws do not
depend on which worker runs it.
"""

import hashlib
from typing import Dict, List

import numpy as np

MAX_SEED = 2**64 - 1


def _stream_key(master_seed: int, tag: str, index: int) -> np.ndarray:
    digest = hashlib.blake2b(
        f"{int(master_seed)}:{tag}:{int(index)}".encode(), digest_size=16
    ).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


def make_stream(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """
    Create the generator for one stream.

    Args:
        master_seed: Run-level seed (0 <= seed < 2**64).
        tag: Module or experiment tag, e.g. ``"fields"``.
        index: Replicate or chunk index within the tag.

    Returns:
        np.random.Generator: Generator backed by Philox with the derived key.

    Raises:
        ValueError: If the master seed is out of range.
    """
    if not 0 <= int(master_seed) <= MAX_SEED:
        raise ValueError(f"Master seed must be in [0, 2**64): {master_seed}")
    return np.random.Generator(np.random.Philox(key=_stream_key(master_seed, tag, index)))


def stream_label(master_seed: int, tag: str, index: int = 0) -> str:
    """Return the hex key of a stream, used as provenance in manifests."""
    return _stream_key(master_seed, tag, index).tobytes().hex()


class StreamFactory:
    """
    Hands out per-replicate streams for one run and remembers what it derived.

    Args:
        master_seed: Run-level seed.
    """

    def __init__(self, master_seed: int) -> None:
        self.master_seed = int(master_seed)
        self._derived: Dict[str, List[int]] = {}

    def stream(self, tag: str, index: int = 0) -> np.random.Generator:
        self._derived.setdefault(tag, [])
        if index not in self._derived[tag]:
            self._derived[tag].append(index)
        return make_stream(self.master_seed, tag, index)

    def streams(self, tag: str, count: int) -> List[np.random.Generator]:
        return [self.stream(tag, i) for i in range(count)]

    def seed_ledger(self) -> Dict[str, Dict[str, object]]:
        """
        Describe every derived stream for the run manifest.

        Returns:
            Dict[str, Dict[str, object]]: Per tag, the indices used and the key
            of the first stream.
        """
        ledger: Dict[str, Dict[str, object]] = {}
        for tag, indices in sorted(self._derived.items()):
            ordered = sorted(indices)
            ledger[tag] = {
                "indices": [ordered[0], ordered[-1]] if len(ordered) > 1 else ordered,
                "count": len(ordered),
                "first_key": stream_label(self.master_seed, tag, ordered[0]),
                "derivation": "blake2b(f'{seed}:{tag}:{index}') -> Philox key",
            }
        return ledger


def child_streams(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    """
    Independent generators for ``count`` work items.

    Item k uses the (k+1)-th jump of ``rng``'s bit generator, so results do not
    depend on which worker runs which item.
    """
    return [np.random.Generator(rng.bit_generator.jumped(k + 1)) for k in range(count)]
