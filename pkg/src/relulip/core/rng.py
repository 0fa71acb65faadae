"""Counter-based random streams.

Every stream is keyed by a hash of ``(master_seed, *path)`` and backed by a
Philox generator, so substreams can be created in any order (or in parallel
workers) and still reproduce the same draws.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def _derive_key(master_seed: int, path: tuple) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16, person=b"relulip-rng")
    h.update(struct.pack("<Q", master_seed & _MASK64))
    for label in path:
        if isinstance(label, (int, np.integer)):
            h.update(b"i" + struct.pack("<q", int(label)))
        else:
            raw = str(label).encode()
            h.update(b"s" + struct.pack("<I", len(raw)) + raw)
    return np.frombuffer(h.digest(), dtype=np.uint64).copy()


class RngStream:
    """A reproducible random stream identified by a master seed and a path.

    ``RngStream(s, 3)`` and ``RngStream(s).spawn(3)`` denote the same stream.
    A stream is meant to be consumed by a single owner; hand each worker its
    own substream via :meth:`spawn`.
    """

    def __init__(self, master_seed: int, *path):
        if not isinstance(master_seed, (int, np.integer)):
            raise TypeError("master_seed must be an integer")
        self.master_seed = int(master_seed)
        self.path = tuple(path)
        self._gen = np.random.Generator(
            np.random.Philox(key=_derive_key(self.master_seed, self.path))
        )

    def __repr__(self):
        return f"RngStream({self.master_seed}, path={self.path!r})"

    def spawn(self, *labels) -> "RngStream":
        """Return the child stream at ``path + labels`` (fresh state)."""
        return RngStream(self.master_seed, *self.path, *labels)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def record(self) -> dict:
        return {"master_seed": self.master_seed, "path": [str(p) if not isinstance(p, int) else p for p in self.path]}

    def normal(self, size=None, variance: float = 1.0):
        z = self._gen.standard_normal(size)
        if variance != 1.0:
            z *= np.sqrt(variance)
        return z

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def bits(self, size) -> np.ndarray:
        """I.i.d. Unif{0,1} bits as float64 zeros and ones."""
        return self._gen.integers(0, 2, size=size).astype(np.float64)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def unit_vectors(self, n: int, d: int) -> np.ndarray:
        """``n`` points drawn uniformly from the unit sphere in R^d (rows)."""
        g = self._gen.standard_normal((n, d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        # a zero row has probability zero; keep it finite anyway
        norms[norms == 0] = 1.0
        return g / norms


def as_stream(rng, default_seed: int = 0) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(default_seed)
    return RngStream(int(rng))
