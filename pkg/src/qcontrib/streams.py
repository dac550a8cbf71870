"""Counter-based random streams.

A stream is the pair (seed, stream_id); both are packed into the 128-bit key
of a Philox generator, so distinct pairs never share a sequence and a given
pair always reproduces the same draws. Large jobs split a stream into blocks
by setting a high word of the Philox counter, which keeps block ``b`` of a
stream identical no matter which worker produces it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) <= _U64):
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")
            object.__setattr__(self, name, int(v))

    def generator(self, block: int = 0) -> np.random.Generator:
        key = (self.stream_id << 64) | self.seed
        # counter word 2 selects the block: 2**128 draws of room per block
        bitgen = np.random.Philox(key=key, counter=[0, 0, int(block), 0])
        return np.random.Generator(bitgen)

    def child(self, stream_id: int) -> "RandomStream":
        return RandomStream(self.seed, stream_id)


def as_generator(stream) -> np.random.Generator:
    if isinstance(stream, RandomStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected RandomStream or numpy Generator, got {type(stream).__name__}")
