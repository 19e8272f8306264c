"""Feature extractors, the classifier wrapper and training snapshots.

An extractor is an ``nn.Module`` whose computation is split into ``blocks``.
Block boundaries are the admissible mixing points for manifold mixing:
index 0 is the input, index ``len(blocks)`` is the final embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
from torch import nn

from dfa.errors import DimensionError, ParameterError
from dfa.mixing import convex
from dfa.ortho_head import OrthogonalHead, init_orthogonal

_ACTIVATIONS = {"relu": nn.ReLU, "tanh": nn.Tanh, "identity": nn.Identity}


def _activation(name: str) -> nn.Module:
    try:
        return _ACTIVATIONS[name]()
    except KeyError:
        raise ParameterError(f"unknown activation {name!r}; choose from {sorted(_ACTIVATIONS)}")


class FeatureExtractor(nn.Module):
    """Base class. Subclasses fill ``self.blocks`` and set ``input_shape``/``embed_dim``."""

    input_shape: tuple[int, ...]
    embed_dim: int
    blocks: nn.ModuleList

    def __init__(self, input_shape, embed_dim: int, **arch):
        super().__init__()
        self.input_shape = tuple(int(s) for s in input_shape)
        self.embed_dim = int(embed_dim)
        self.arch = {"name": self.arch_name, "input_shape": list(self.input_shape),
                     "embed_dim": self.embed_dim, **arch}

    arch_name = "base"

    @property
    def n_mix_points(self) -> int:
        return len(self.blocks) + 1

    def _check_input(self, x: torch.Tensor):
        if tuple(x.shape[1:]) != self.input_shape:
            raise DimensionError(
                f"expected samples of shape {self.input_shape}, got {tuple(x.shape[1:])}"
            )

    def forward_to(self, x: torch.Tensor, layer_index: int) -> torch.Tensor:
        self._check_input(x)
        self._check_layer(layer_index)
        for block in self.blocks[:layer_index]:
            x = block(x)
        return x

    def forward_from(self, h: torch.Tensor, layer_index: int) -> torch.Tensor:
        self._check_layer(layer_index)
        for block in self.blocks[layer_index:]:
            h = block(h)
        return h

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward_from(self.forward_to(x, 0), 0)

    def init_weights(self, scheme: str = "he"):
        """``he``: Kaiming-normal weights for ReLU and zero biases. ``torch``: keep module defaults."""
        if scheme == "torch":
            return self
        if scheme != "he":
            raise ParameterError(f"unknown init scheme {scheme!r}")
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)
        return self

    def _check_layer(self, layer_index: int):
        if not (isinstance(layer_index, int) and 0 <= layer_index <= len(self.blocks)):
            raise ParameterError(
                f"layer_index must be an int in [0, {len(self.blocks)}], got {layer_index!r}"
            )


class SmallCNN(FeatureExtractor):
    """Two conv+pool blocks followed by a dense projection to ``embed_dim``."""

    arch_name = "small_cnn"

    def __init__(self, input_shape=(1, 8, 8), embed_dim: int = 64, widths=(16, 32),
                 activation: str = "relu", init: str = "he"):
        super().__init__(input_shape, embed_dim, widths=list(widths), activation=activation,
                         init=init)
        c, h, w = self.input_shape
        blocks = []
        for width in widths:
            blocks.append(nn.Sequential(
                nn.Conv2d(c, width, kernel_size=3, padding=1),
                _activation(activation),
                nn.MaxPool2d(2) if min(h, w) >= 2 else nn.Identity(),
            ))
            if min(h, w) >= 2:
                h, w = h // 2, w // 2
            c = width
        blocks.append(nn.Sequential(nn.Flatten(), nn.Linear(c * h * w, embed_dim)))
        self.blocks = nn.ModuleList(blocks)
        self.init_weights(init)


class MLP(FeatureExtractor):
    """Fully connected extractor. With ``activation='identity'`` the map is affine."""

    arch_name = "mlp"

    def __init__(self, input_shape, embed_dim: int, hidden=(32,), activation: str = "relu",
                 init: str = "he"):
        super().__init__(input_shape, embed_dim, hidden=list(hidden), activation=activation,
                         init=init)
        d = math.prod(self.input_shape)
        blocks = []
        for i, width in enumerate(hidden):
            layers = [nn.Flatten()] if i == 0 else []
            blocks.append(nn.Sequential(*layers, nn.Linear(d, width), _activation(activation)))
            d = width
        head = [nn.Flatten()] if not hidden else []
        blocks.append(nn.Sequential(*head, nn.Linear(d, embed_dim)))
        self.blocks = nn.ModuleList(blocks)
        self.init_weights(init)


class LinearExtractor(MLP):
    arch_name = "linear"

    def __init__(self, input_shape, embed_dim: int, hidden=(32,), init: str = "he"):
        super().__init__(input_shape, embed_dim, hidden=hidden, activation="identity", init=init)
        self.arch.pop("activation")


class IdentityExtractor(FeatureExtractor):
    """Flattens the input; the embedding is the sample itself."""

    arch_name = "identity"

    def __init__(self, input_shape):
        super().__init__(input_shape, math.prod(input_shape))
        self.arch.pop("embed_dim")
        self.blocks = nn.ModuleList([nn.Flatten()])


_REGISTRY = {cls.arch_name: cls for cls in (SmallCNN, MLP, LinearExtractor, IdentityExtractor)}


def build_extractor(arch: dict) -> FeatureExtractor:
    arch = dict(arch)
    name = arch.pop("name")
    if name not in _REGISTRY:
        raise ParameterError(f"unknown architecture {name!r}")
    return _REGISTRY[name](**arch)


def forward(extractor: FeatureExtractor, x: torch.Tensor) -> torch.Tensor:
    return extractor(x)


def build_model(arch: dict, n_classes: int, seed: int = 0, dtype=torch.float32,
                softmax_scale: float = 1.0) -> Classifier:
    """Seeded construction of extractor + orthogonal head; leaves global RNG state alone."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        extractor = build_extractor(arch).to(dtype)
    head = init_orthogonal(n_classes, extractor.embed_dim, np.random.default_rng([seed, 1]),
                           scale=softmax_scale)
    return Classifier(extractor, head)


def manifold_mix_forward(extractor: FeatureExtractor, x_i, x_j, lam: float, layer_index: int):
    """Run both inputs to ``layer_index``, mix the activations, finish the pass."""
    h = convex(extractor.forward_to(x_i, layer_index), extractor.forward_to(x_j, layer_index),
               float(lam))
    return extractor.forward_from(h, layer_index)


class Classifier(nn.Module):
    """Extractor followed by the frozen orthogonal head; ``forward`` returns scaled cosines."""

    def __init__(self, extractor: FeatureExtractor, head: OrthogonalHead):
        super().__init__()
        if head.embed_dim != extractor.embed_dim:
            raise DimensionError(
                f"head expects dim {head.embed_dim}, extractor emits {extractor.embed_dim}"
            )
        self.extractor = extractor
        self.head = head

    def embed(self, x):
        return self.extractor(x)

    def forward(self, x):
        return self.head(self.extractor(x))

    @torch.no_grad()
    def predict(self, x, batch_size: int = 1024) -> torch.Tensor:
        return torch.cat([self(x[i:i + batch_size]).argmax(1) for i in range(0, len(x), batch_size)])

    @torch.no_grad()
    def embeddings(self, x, batch_size: int = 1024) -> torch.Tensor:
        return torch.cat([self.extractor(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])


@dataclass
class ModelSnapshot:
    model: Classifier
    config_hash: str = ""
    rng_state: dict[str, Any] = field(default_factory=dict)
    epoch: int = 0

    @property
    def n_classes(self) -> int:
        return self.model.head.n_classes

    @property
    def embed_dim(self) -> int:
        return self.model.head.embed_dim

    @property
    def dtype(self) -> torch.dtype:
        params = list(self.model.extractor.parameters())
        return params[0].dtype if params else self.model.head.weight.dtype
