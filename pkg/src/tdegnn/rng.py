"""Named random streams derived from a single root seed.

Each stochastic site (weight init of a given layer, dropout at a given
position, batch shuffling) asks for its own stream by name.  Streams are
Philox counter-based generators keyed by the root seed and a hash of the
name, so adding a new site never perturbs the draws of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> tuple[int, ...]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


class RngTree:
    """Factory of independent, reproducible generators keyed by name."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        """Return the generator for ``name``; repeated calls continue the same stream."""
        gen = self._streams.get(name)
        if gen is None:
            seq = np.random.SeedSequence(self.seed, spawn_key=_name_key(name))
            gen = np.random.Generator(np.random.Philox(seq))
            self._streams[name] = gen
        return gen

    def fresh(self, name: str) -> np.random.Generator:
        """A generator for ``name`` restarted from its first draw."""
        seq = np.random.SeedSequence(self.seed, spawn_key=_name_key(name))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, name: str) -> "RngTree":
        """A sub-tree whose streams are disjoint from this tree's."""
        key = int.from_bytes(hashlib.sha256(f"{self.seed}/{name}".encode()).digest()[:8], "little")
        return RngTree(key)
