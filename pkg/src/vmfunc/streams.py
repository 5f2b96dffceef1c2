"""Counter-based random substreams.

A stream id is a master seed plus a path of integer indices.  The path is fed
to a Philox generator as a spawn key, so distinct paths give statistically
independent streams and a given id always reproduces the same draws no matter
what any other stream consumed.  Replication loops key their substreams by
replication index, which makes parallel execution order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StreamId",
    "SPACE_REPLICATION",
    "SPACE_NORMALIZER",
    "SPACE_CENTERING",
    "SPACE_ORACLE",
]

# fixed path namespaces so different consumers of one master seed never collide
SPACE_REPLICATION = 0
SPACE_NORMALIZER = 1
SPACE_CENTERING = 2
SPACE_ORACLE = 3


@dataclass(frozen=True)
class StreamId:
    """Identifier (master_seed, path) of a reproducible random substream."""

    master_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))

    def child(self, *indices: int) -> "StreamId":
        """Substream at the given index path below this one."""
        return StreamId(self.master_seed, self.path + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))
