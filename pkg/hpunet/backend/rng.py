"""Seeded pseudo-random state shared by every stochastic operation."""
from __future__ import annotations

import hashlib
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np

Key = Union[int, str]

_MASK64 = (1 << 64) - 1


def _key_to_int(key: Key) -> int:
    if isinstance(key, str):
        return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")
    return int(key) & _MASK64


class RngState:
    """PCG64 stream identified by a 64-bit seed.

    Identical seeds and identical call sequences give identical outputs.
    `derive` returns an independent child stream keyed by (seed, *keys), so
    per-sample or per-step randomness never depends on call order.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & _MASK64
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, *keys: Key) -> "RngState":
        entropy = [self.seed] + [_key_to_int(k) for k in keys]
        child = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
        return RngState(int(child))

    def normal(self, shape: Sequence[int], dtype: Any = np.float32) -> np.ndarray:
        # Drawn in float64 so float32 and float64 graphs see the same noise.
        return self._generator.standard_normal(tuple(shape)).astype(dtype)

    def uniform(self, shape: Union[Sequence[int], None] = None, low: float = 0.0,
                high: float = 1.0) -> Union[np.ndarray, float]:
        return self._generator.uniform(low, high, size=None if shape is None else tuple(shape))

    def gumbel(self, shape: Sequence[int]) -> np.ndarray:
        return self._generator.gumbel(size=tuple(shape))

    def integers(self, high: int, low: int = 0, size: Union[int, Tuple[int, ...], None] = None):
        """Uniform integers in [low, high)."""
        if size is None:
            return int(self._generator.integers(low, high))
        return self._generator.integers(low, high, size=size)

    def random(self) -> float:
        return float(self._generator.random())

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def get_state(self) -> Dict[str, Any]:
        return {"seed": self.seed, "bit_generator": self._generator.bit_generator.state}

    @classmethod
    def from_state(cls, state: Dict[str, Any]) -> "RngState":
        rng = cls(state["seed"])
        rng._generator.bit_generator.state = state["bit_generator"]
        return rng

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed})"
