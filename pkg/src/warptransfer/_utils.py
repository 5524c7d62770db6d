"""Small shared helpers."""

from __future__ import annotations

import numpy as np


def as_generator(seed=None) -> np.random.Generator:
    """Normalize ``seed`` (None, int, SeedSequence or Generator) to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def readonly(arr: np.ndarray) -> np.ndarray:
    """Return a float64 copy of ``arr`` with the writeable flag cleared."""
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out
