"""Convex combination of sample pairs and their labels.

A single coefficient is drawn per batch; pairs are formed by mixing a batch
with a random permutation of itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from dfa.errors import DimensionError, ParameterError


@dataclass(frozen=True)
class MixCoefficient:
    lambda_value: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.lambda_value <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lambda_value}")

    def __float__(self):
        return float(self.lambda_value)


@dataclass(frozen=True)
class MixedTriple:
    x_i: Any
    x_j: Any
    x_hat: Any
    lambda_value: float
    y_mixed: Any


def sample_lambda(alpha: float, rng: np.random.Generator) -> MixCoefficient:
    """Draw a mixing coefficient from the symmetric Beta(alpha, alpha)."""
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    return MixCoefficient(float(rng.beta(alpha, alpha)), float(alpha))


def convex(a, b, lam: float):
    """lam * a + (1 - lam) * b, for arrays or tensors of equal shape."""
    if tuple(a.shape) != tuple(b.shape):
        raise DimensionError(f"cannot mix shapes {tuple(a.shape)} and {tuple(b.shape)}")
    return lam * a + (1.0 - lam) * b


def mix(x_i, x_j, y_i, y_j, lam: MixCoefficient | float) -> MixedTriple:
    lam = float(lam)
    if tuple(y_i.shape) != tuple(y_j.shape):
        raise DimensionError(f"label shapes differ: {tuple(y_i.shape)} vs {tuple(y_j.shape)}")
    if len(x_i) != len(y_i):
        raise DimensionError(f"{len(x_i)} samples but {len(y_i)} labels")
    return MixedTriple(x_i, x_j, convex(x_i, x_j, lam), lam, convex(y_i, y_j, lam))


def pair_permutation(batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Partner index for every sample of a batch."""
    if batch_size < 2:
        raise ParameterError("pairing needs at least two samples")
    return rng.permutation(batch_size)
