"""The aggregation regularizer: pull lam*F(x_i) + (1-lam)*F(x_j) onto F(lam*x_i + (1-lam)*x_j)."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch

from dfa.errors import DimensionError, NumericError, ParameterError


class Reduction(str, Enum):
    MEAN_SQUARED = "mean-squared"
    ROOT_OF_NORM = "root-of-norm"


@dataclass(frozen=True)
class AggregationLossConfig:
    sigma: float = 0.05
    reduction: Reduction = Reduction.MEAN_SQUARED
    rng_seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ParameterError(f"sigma must be non-negative, got {self.sigma}")
        object.__setattr__(self, "reduction", Reduction(self.reduction))


@dataclass(frozen=True)
class LossReport:
    l_a: float
    l_c: float
    l_t: float

    @classmethod
    def from_parts(cls, l_a: float, l_c: float) -> "LossReport":
        return cls(float(l_a), float(l_c), float(l_a) + float(l_c))


def draw_noise(shape, sigma: float, rng: np.random.Generator, dtype=torch.float32) -> torch.Tensor:
    """Isotropic Gaussian noise; a constant with respect to autograd."""
    if sigma == 0:
        return torch.zeros(shape, dtype=dtype)
    return torch.from_numpy(rng.normal(0.0, sigma, size=tuple(shape))).to(dtype)


def aggregation_residual(v_i, v_j, v_hat, lam: float, noise=None):
    shapes = {tuple(v_i.shape), tuple(v_j.shape), tuple(v_hat.shape)}
    if len(shapes) != 1:
        raise DimensionError(f"embedding batches disagree in shape: {sorted(shapes)}")
    lam = float(lam)
    residual = lam * v_i + (1.0 - lam) * v_j - v_hat
    if noise is None:
        return residual
    if isinstance(noise, (int, float)):
        if noise != 0:
            raise DimensionError("scalar noise must be zero; pass an array for a Gaussian draw")
        return residual
    if tuple(noise.shape) != tuple(residual.shape):
        raise DimensionError(
            f"noise shape {tuple(noise.shape)} does not match residual {tuple(residual.shape)}"
        )
    return residual + noise


def aggregation_loss(residual, config: AggregationLossConfig = AggregationLossConfig()):
    """Reduce a residual batch to a scalar.

    mean-squared: mean of squared entries over batch and embedding dims.
    root-of-norm: batch mean of sqrt(||r||_2) per pair.
    """
    as_numpy = not isinstance(residual, torch.Tensor)
    r = torch.as_tensor(np.asarray(residual, dtype=np.float64)) if as_numpy else residual
    if r.ndim == 1:
        r = r.unsqueeze(0)
    if not bool(torch.isfinite(r).all()):
        raise NumericError("aggregation residual contains non-finite entries")
    if config.reduction is Reduction.MEAN_SQUARED:
        loss = (r * r).mean()
    else:
        # sqrt is not differentiable at 0; the tiny floor keeps the gradient finite
        sq = (r * r).flatten(1).sum(dim=1)
        floor = 1e-24 if r.requires_grad else 0.0
        loss = torch.sqrt(torch.sqrt(sq + floor)).mean()
    return float(loss) if as_numpy else loss
