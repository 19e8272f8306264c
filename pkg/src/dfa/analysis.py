"""Embedding-space diagnostics: cluster compactness and the mixing-commutation residual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from dfa.errors import DataError, DimensionError


@dataclass(frozen=True)
class CompactnessReport:
    per_class_std: np.ndarray
    total_std: float
    counts: np.ndarray

    @property
    def mean_class_std(self) -> float:
        return float(self.per_class_std.mean())

    def to_fields(self) -> dict:
        fields = {f"std_class_{k}": float(s) for k, s in enumerate(self.per_class_std)}
        return {**fields, "std_total": self.total_std, "std_class_mean": self.mean_class_std}


def _spread(v: np.ndarray) -> float:
    # population std per dimension, averaged over dimensions
    return float(v.std(axis=0).mean())


def compactness_from_embeddings(embeddings, labels, n_classes: int) -> CompactnessReport:
    v = np.asarray(embeddings.detach().cpu() if isinstance(embeddings, torch.Tensor)
                   else embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    per_class, counts = [], []
    for k in range(n_classes):
        rows = v[labels == k]
        if len(rows) == 0:
            raise DataError(f"class {k} has no samples")
        per_class.append(_spread(rows))
        counts.append(len(rows))
    return CompactnessReport(np.array(per_class), _spread(v), np.array(counts))


def compactness(model, x, y, n_classes: int | None = None) -> CompactnessReport:
    return compactness_from_embeddings(model.embeddings(x), np.asarray(y),
                                       n_classes or model.head.n_classes)


@dataclass(frozen=True)
class LipschitzProbe:
    residuals: np.ndarray
    lambdas: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.residuals.mean())

    @property
    def max(self) -> float:
        return float(self.residuals.max())

    def to_fields(self) -> dict:
        return {"residual_mean": self.mean, "residual_max": self.max,
                "residual_median": float(np.median(self.residuals)), "n_pairs": len(self.residuals)}


@torch.no_grad()
def lipschitz_residual(extractor, x_i, x_j, lambdas) -> LipschitzProbe:
    """||lam F(x_i) + (1 - lam) F(x_j) - F(lam x_i + (1 - lam) x_j)||_2 per pair."""
    if tuple(x_i.shape) != tuple(x_j.shape):
        raise DimensionError(f"pair batches differ: {tuple(x_i.shape)} vs {tuple(x_j.shape)}")
    extractor = getattr(extractor, "extractor", extractor)
    lam = torch.as_tensor(np.asarray(lambdas), dtype=x_i.dtype)
    if lam.shape != (len(x_i),):
        raise DimensionError(f"need one lambda per pair, got shape {tuple(lam.shape)}")
    lam_x = lam.reshape(-1, *([1] * (x_i.ndim - 1)))
    x_hat = lam_x * x_i + (1 - lam_x) * x_j
    lam_v = lam[:, None]
    r = lam_v * extractor(x_i) + (1 - lam_v) * extractor(x_j) - extractor(x_hat)
    return LipschitzProbe(r.norm(dim=1).double().numpy(), lam.double().numpy())


def sample_pairs(n_samples: int, n_pairs: int, alpha: float, rng: np.random.Generator):
    """Random index pairs (i != j) with Beta(alpha, alpha) coefficients."""
    i = rng.integers(0, n_samples, n_pairs)
    j = (i + rng.integers(1, n_samples, n_pairs)) % n_samples
    return i, j, rng.beta(alpha, alpha, n_pairs)


def probe_dataset(model, x, n_pairs: int = 1000, alpha: float = 1.0, seed: int = 0):
    i, j, lam = sample_pairs(len(x), n_pairs, alpha, np.random.default_rng(seed))
    return lipschitz_residual(model, x[i], x[j], lam)
