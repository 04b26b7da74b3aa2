"""Counter-based random streams.

Every random draw is addressed by (master seed, purpose tag, index): the value
at a given index does not depend on how many other draws were made, in what
order, or by which thread. This makes block-parallel simulation reproduce the
serial run bit for bit.

Draws come from numpy's Philox4x64 keyed by ``seed | tag << 64``; the stream
for a key is its raw 64-bit output sequence, of which a Philox counter step
yields four words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

PURPOSES = {
    "test": 1,
    "input": 2,
    "outcome": 3,
    "trial": 4,
}


@dataclass(frozen=True)
class CounterStream:
    seed: int
    purpose: str

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown purpose tag {self.purpose!r}")

    @property
    def key(self) -> int:
        return self.seed | (PURPOSES[self.purpose] << 64)

    def raw(self, start: int, count: int) -> np.ndarray:
        """Raw 64-bit words ``start, ..., start + count - 1`` of this stream."""
        if start < 0 or count < 0:
            raise ValueError("start and count must be non-negative")
        block, offset = divmod(start, 4)
        bitgen = np.random.Philox(key=self.key, counter=block)
        return bitgen.random_raw(count + offset)[offset:]

    def uniforms(self, start: int, count: int) -> np.ndarray:
        """Doubles in [0, 1) with 53 random bits, same mapping as numpy's ``random()``."""
        return (self.raw(start, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self, index: int) -> float:
        return float(self.uniforms(index, 1)[0])


def derive_seeds(seed: int, count: int, start: int = 0) -> list[int]:
    """Independent 64-bit seeds for repeated trials under one master seed."""
    return [int(v) for v in CounterStream(seed, "trial").raw(start, count)]
