"""Frozen orthogonal classifier scoring embeddings by cosine similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from dfa.errors import CapacityError, DegenerateInputError, DimensionError

TRAIN_EPS = 1e-12


class OrthogonalHead(nn.Module):
    """Class vectors stored as a buffer, so no optimizer ever sees them.

    ``scale`` multiplies the cosine scores before the softmax. The default of 1
    feeds raw cosines to the softmax.
    """

    def __init__(self, weights, scale: float = 1.0):
        super().__init__()
        weights = torch.as_tensor(weights)
        if weights.ndim != 2:
            raise DimensionError(f"head weights must be 2-D, got shape {tuple(weights.shape)}")
        self.register_buffer("weight", weights.clone())
        self.scale = float(scale)

    @property
    def n_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def frozen(self) -> bool:
        return not self.weight.requires_grad

    def forward(self, v: torch.Tensor, eps: float = TRAIN_EPS) -> torch.Tensor:
        """Scaled cosine scores (the logits fed to softmax) for a batch of embeddings."""
        w = self.weight.to(v.dtype)
        w = w / w.norm(dim=1, keepdim=True)
        cos = (v @ w.T) / (v.norm(dim=1, keepdim=True) + eps)
        return self.scale * cos

    def max_offdiag_dot(self) -> float:
        w = self.weight.double()
        g = w @ w.T
        g.fill_diagonal_(0.0)
        return float(g.abs().max()) if self.n_classes > 1 else 0.0


def init_orthogonal(
    n_classes: int, embed_dim: int, rng: np.random.Generator, scale: float = 1.0
) -> OrthogonalHead:
    """Random mutually orthogonal unit rows via QR of a Gaussian matrix."""
    if embed_dim < n_classes:
        raise CapacityError(
            f"cannot fit {n_classes} orthogonal vectors in {embed_dim} dimensions"
        )
    a = rng.standard_normal((embed_dim, n_classes))
    q, r = np.linalg.qr(a)
    # sign fix makes the factorisation unique for a given draw
    q = q * np.sign(np.diag(r))
    return OrthogonalHead(torch.from_numpy(np.ascontiguousarray(q.T)), scale=scale)


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    probabilities: np.ndarray

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.scores))


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cosine_scores(head: OrthogonalHead, v) -> ScoreVector:
    """Evaluation-time scoring of one embedding (or a batch). Zero vectors are rejected."""
    v = np.asarray(v.detach().cpu() if isinstance(v, torch.Tensor) else v, dtype=np.float64)
    if v.shape[-1] != head.embed_dim:
        raise DimensionError(f"embedding has dim {v.shape[-1]}, head expects {head.embed_dim}")
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateInputError("cannot score a zero-norm embedding")
    w = head.weight.detach().cpu().double().numpy()
    w = w / np.linalg.norm(w, axis=1, keepdims=True)
    cos = np.clip((v @ w.T) / norms, -1.0, 1.0)
    return ScoreVector(cos, _softmax(head.scale * cos))
