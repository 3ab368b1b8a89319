"""Counter-based random streams.

Every stream is a Philox generator keyed by a hash of ``(seed, name)``.
Replicate ``k`` of a named computation starts at counter ``k * 2**192``, so
replicate streams never overlap and do not depend on scheduling order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["StreamKey"]


@dataclass(frozen=True)
class StreamKey:
    seed: int
    name: str = ""

    def child(self, *parts) -> StreamKey:
        suffix = "/".join(str(p) for p in parts)
        return StreamKey(self.seed, f"{self.name}/{suffix}" if self.name else suffix)

    @property
    def key(self) -> int:
        digest = hashlib.blake2b(f"{self.seed & 0xFFFFFFFFFFFFFFFF}:{self.name}".encode(), digest_size=16).digest()
        return int.from_bytes(digest, "little")

    def generator(self, k: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key, counter=[0, 0, 0, k]))

    def normals(self, n_replicates: int, shape: tuple[int, ...]) -> np.ndarray:
        """Standard normals of ``shape`` per replicate, stacked along a new first axis."""
        key = self.key
        out = np.empty((n_replicates, *shape))
        for k in range(n_replicates):
            np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, k])).standard_normal(shape, out=out[k])
        return out
