"""In-memory labeled datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from dfa.errors import DataError, DimensionError


@dataclass
class LabeledDataset:
    """Samples scaled to [0, 1] with shape (N, C, H, W) and integer labels."""

    x: np.ndarray
    y: np.ndarray
    n_classes: int
    name: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.x) != len(self.y):
            raise DimensionError(f"{len(self.x)} samples but {len(self.y)} labels")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes}), got range "
                            f"[{self.y.min()}, {self.y.max()}]")

    def __len__(self):
        return len(self.y)

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.x.shape[1:])

    def tensors(self, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
        return torch.as_tensor(self.x, dtype=dtype), torch.as_tensor(self.y)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.x[idx], self.y[idx], self.n_classes, self.name)

    def split(self, fraction: float, seed: int = 0) -> tuple["LabeledDataset", "LabeledDataset"]:
        """Seeded stratified split into (first, second) with ``fraction`` in the first part."""
        rng = np.random.default_rng(seed)
        first = []
        for k in range(self.n_classes):
            idx = np.flatnonzero(self.y == k)
            rng.shuffle(idx)
            first.extend(idx[: int(round(fraction * len(idx)))])
        mask = np.zeros(len(self), dtype=bool)
        mask[first] = True
        return self.subset(np.flatnonzero(mask)), self.subset(np.flatnonzero(~mask))


def one_hot(y, n_classes: int, dtype=torch.float32) -> torch.Tensor:
    y = torch.as_tensor(y)
    return torch.nn.functional.one_hot(y, n_classes).to(dtype)
