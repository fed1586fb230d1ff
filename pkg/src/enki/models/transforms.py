"""Probit map between a bounded (0, upper) box and the real line.

Forward: z = ndtri(x / upper) componentwise, so a Uniform(0, upper) prior
becomes exactly standard normal in the working space. Inverse:
x = upper * ndtr(z).
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri


def transform_to_unconstrained(x: np.ndarray, upper: float = 10.0) -> np.ndarray:
    """Map a vector with components in (0, upper) to the real line."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or np.any(x >= upper):
        raise ValueError(f"components must lie strictly inside (0, {upper})")
    return ndtri(x / upper)


def inverse_transform(z: np.ndarray, upper: float = 10.0) -> np.ndarray:
    """Map real components back into (0, upper)."""
    return upper * ndtr(np.asarray(z, dtype=float))
