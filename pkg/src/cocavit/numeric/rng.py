"""Seeded random source shared by initialisers and data generators."""
from __future__ import annotations

import numpy as np


class Rng:
    """PCG64-backed generator; a seed fixes the whole draw sequence on every platform."""

    def __init__(self, seed: int = 42):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape, std: float = 1.0, dtype=np.float64) -> np.ndarray:
        return (self._gen.standard_normal(shape) * std).astype(dtype)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0, dtype=np.float64) -> np.ndarray:
        return self._gen.uniform(low, high, shape).astype(dtype)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def trunc_normal(self, shape, std: float = 0.02, bound: float = 2.0, dtype=np.float64) -> np.ndarray:
        """Normal draws redrawn until they fall inside ``±bound·std``."""
        out = self._gen.standard_normal(shape)
        bad = np.abs(out) > bound
        while bad.any():
            out[bad] = self._gen.standard_normal(int(bad.sum()))
            bad = np.abs(out) > bound
        return (out * std).astype(dtype)

    def spawn(self, key: int) -> "Rng":
        """Independent child stream, e.g. one per dataset split."""
        return Rng(int(np.random.SeedSequence([self.seed, key]).generate_state(1)[0]))
