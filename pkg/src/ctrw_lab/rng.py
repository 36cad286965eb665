"""Counter-based, splittable random streams built on numpy's Philox."""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    The Philox key is the pair ``(seed, stream_id)`` and ``counter`` is the
    block counter, so any stream position obtained from :meth:`checkpoint`
    can be replayed bit for bit with ``RngStream(seed, stream_id, counter)``.
    """

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        bitgen = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64),
                                  counter=np.array([int(counter) & _MASK64, 0, 0, 0], dtype=np.uint64))
        self.generator = np.random.Generator(bitgen)
        self._children = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    @property
    def counter(self) -> int:
        return int(self.generator.bit_generator.state["state"]["counter"][0])

    def checkpoint(self) -> "RngStream":
        """Drop buffered output and return a replayable copy at the current block."""
        bitgen = self.generator.bit_generator
        state = bitgen.state
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bitgen.state = state
        return RngStream(self.seed, self.stream_id, self.counter)

    def child_id(self, index: int) -> int:
        ss = np.random.SeedSequence(entropy=[self.seed, self.stream_id], spawn_key=(int(index),))
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def split(self, k: int = 1) -> list["RngStream"]:
        """Return ``k`` independent child streams with fresh, distinct ids."""
        out = []
        for _ in range(k):
            out.append(RngStream(self.seed, self.child_id(self._children)))
            self._children += 1
        return out

    def substream(self, index: int) -> "RngStream":
        """Child stream number ``index``; independent of any split() history."""
        return RngStream(self.seed, self.child_id(index))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a numpy Generator or an integer seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit random stream is required")
    return RngStream(int(rng)).generator
