"""Counter-based random substreams.

Every Gaussian block in the package comes from a Philox generator whose key
encodes (master seed, purpose, replicate) and whose 256-bit counter starts at
the step index, so replicates and steps can be generated in any order, in
parallel, with bit-identical results.  Within one step the counter has 2^192
draws of headroom before it could touch the step word.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

PURPOSE_NOISE = 1
PURPOSE_PARTICLES = 2
PURPOSE_INITIAL = 3
PURPOSE_GENERIC = 4


def philox_key(seed: int, purpose: int, replicate: int) -> np.ndarray:
    if not 0 <= replicate < (1 << 48):
        raise ValueError("replicate index must fit in 48 bits")
    return np.array([seed & _MASK64, ((purpose & 0xFFFF) << 48) | replicate],
                    dtype=np.uint64)


def substream(seed: int, purpose: int, replicate: int = 0, step: int = 0) -> np.random.Generator:
    """Fresh generator positioned at one (purpose, replicate, step) cell."""
    counter = np.array([0, 0, 0, step & _MASK64], dtype=np.uint64)
    return np.random.Generator(
        np.random.Philox(counter=counter, key=philox_key(seed, purpose, replicate)))


class CounterStream:
    """Reusable per-(purpose, replicate) stream with O(1) jumps between steps.

    ``normal(step, shape)`` is bit-identical to
    ``substream(seed, purpose, replicate, step).standard_normal(shape)``.
    """

    def __init__(self, seed: int, purpose: int, replicate: int = 0):
        self._bitgen = np.random.Philox(
            counter=np.zeros(4, dtype=np.uint64),
            key=philox_key(seed, purpose, replicate))
        self._gen = np.random.Generator(self._bitgen)

    def at_step(self, step: int) -> np.random.Generator:
        state = self._bitgen.state
        state["state"]["counter"][:] = (0, 0, 0, step & _MASK64)
        state["buffer_pos"] = 4  # discard buffered words from the old counter
        self._bitgen.state = state
        return self._gen

    def normal(self, step: int, shape) -> np.ndarray:
        return self.at_step(step).standard_normal(shape)


def normal_block(seed: int, purpose: int, replicate: int, step: int, shape) -> np.ndarray:
    """One-shot Gaussian block for a single cell."""
    return substream(seed, purpose, replicate, step).standard_normal(shape)
