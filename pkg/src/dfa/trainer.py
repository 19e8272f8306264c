"""Training objectives and loop: vanilla, mixup, manifold mixup and feature aggregation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import torch
import torch.nn.functional as F

from dfa.aggregation import (
    AggregationLossConfig,
    LossReport,
    Reduction,
    aggregation_loss,
    aggregation_residual,
    draw_noise,
)
from dfa.data import LabeledDataset, one_hot
from dfa.errors import ConfigError, DataError, NumericError
from dfa.mixing import convex, pair_permutation, sample_lambda
from dfa.models import Classifier, ModelSnapshot, build_model, manifold_mix_forward
from dfa.ortho_head import OrthogonalHead

log = logging.getLogger(__name__)


class Mode(str, Enum):
    VANILLA = "vanilla"
    MIXUP = "mixup"
    MANIFOLD_MIXUP = "manifold_mixup"
    DFA = "dfa"


# four rates, 60 epochs each
FULL_SCHEDULE = ((0.1, 60), (0.02, 60), (0.004, 60), (0.0008, 60))


@dataclass(frozen=True)
class TrainConfig:
    mode: Mode = Mode.DFA
    alpha: float = 1.0
    sigma: float = 0.05
    reduction: Reduction = Reduction.MEAN_SQUARED
    epochs: int = 10
    batch_size: int = 64
    # (rate, number of epochs); the last rate is held for any remaining epochs
    lr_schedule: tuple[tuple[float, int], ...] = ((0.05, 10),)
    momentum: float = 0.9
    weight_decay: float = 5e-4
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "reduction", Reduction(self.reduction))
        object.__setattr__(self, "lr_schedule",
                           tuple((float(r), int(n)) for r, n in self.lr_schedule))
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 for pairing, got {self.batch_size}")
        if self.mode is not Mode.VANILLA and not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        if not self.lr_schedule:
            raise ConfigError("lr_schedule must not be empty")

    def lr_at(self, epoch: int) -> float:
        start = 0
        for rate, span in self.lr_schedule:
            if epoch < start + span:
                return rate
            start += span
        return self.lr_schedule[-1][0]

    @property
    def aggregation(self) -> AggregationLossConfig:
        return AggregationLossConfig(self.sigma, self.reduction, self.rng_seed)


def soft_cross_entropy(target: torch.Tensor, logits: torch.Tensor) -> torch.Tensor:
    """Batch mean of -sum_k target_k log softmax(logits)_k."""
    return -(target * F.log_softmax(logits, dim=1)).sum(dim=1).mean()


def _check_distribution(y: torch.Tensor, name: str):
    if not torch.allclose(y.sum(dim=1), torch.ones((), dtype=y.dtype), atol=1e-6, rtol=0):
        raise DataError(f"{name} rows must sum to 1 within 1e-6")
    if bool((y < 0).any()):
        raise DataError(f"{name} has negative entries")


def classification_loss(head: OrthogonalHead, v_i, v_j, v_hat, y_i, y_j, lam: float):
    """CE of the mixed label against the head on F(mixed input) plus on the mixed embeddings."""
    _check_distribution(y_i, "y_i")
    _check_distribution(y_j, "y_j")
    y_mix = convex(y_i, y_j, float(lam))
    return (soft_cross_entropy(y_mix, head(v_hat))
            + soft_cross_entropy(y_mix, head(convex(v_i, v_j, float(lam)))))


@dataclass
class TrainState:
    """Mutable training controller state: model, optimizer, RNG and step counters."""

    model: Classifier
    config: TrainConfig
    rng: np.random.Generator
    optimizer: torch.optim.Optimizer
    step: int = 0
    epoch: int = 0
    config_hash: str = ""

    @classmethod
    def create(cls, model: Classifier, config: TrainConfig, config_hash: str = ""):
        opt = torch.optim.SGD(model.extractor.parameters(), lr=config.lr_at(0),
                              momentum=config.momentum, weight_decay=config.weight_decay)
        return cls(model, config, np.random.default_rng(config.rng_seed), opt,
                   config_hash=config_hash)

    def snapshot(self) -> ModelSnapshot:
        return ModelSnapshot(self.model, self.config_hash, self.rng.bit_generator.state, self.epoch)

    def set_lr(self, lr: float):
        for group in self.optimizer.param_groups:
            group["lr"] = lr


@dataclass(frozen=True)
class StepDraw:
    """The random quantities of one step, drawn before any computation."""

    lam: float = 1.0
    perm: torch.Tensor | None = None
    layer: int = 0
    noise: torch.Tensor | None = None


def draw_step(config: TrainConfig, rng: np.random.Generator, batch_size: int, n_blocks: int,
              embed_shape: tuple[int, int], dtype=torch.float32) -> StepDraw:
    """Draw order is fixed per mode: lambda, permutation, then layer or noise."""
    if config.mode is Mode.VANILLA:
        return StepDraw()
    lam = sample_lambda(config.alpha, rng).lambda_value
    perm = torch.from_numpy(pair_permutation(batch_size, rng))
    if config.mode is Mode.MANIFOLD_MIXUP:
        # input or any hidden boundary; the final embedding is excluded
        return StepDraw(lam, perm, layer=int(rng.integers(0, n_blocks)))
    if config.mode is Mode.DFA:
        return StepDraw(lam, perm, noise=draw_noise(embed_shape, config.sigma, rng, dtype))
    return StepDraw(lam, perm)


def objective(model: Classifier, x: torch.Tensor, y: torch.Tensor, config: TrainConfig,
              draw: StepDraw):
    """(l_a, l_c) for one batch given its random draws; differentiable in the extractor."""
    extractor, head = model.extractor, model.head
    zero = torch.zeros((), dtype=x.dtype)
    if config.mode is Mode.VANILLA:
        return zero, soft_cross_entropy(y, model(x))
    lam, perm = draw.lam, draw.perm
    x_j, y_j = x[perm], y[perm]
    if config.mode is Mode.MIXUP:
        return zero, soft_cross_entropy(convex(y, y_j, lam), model(convex(x, x_j, lam)))
    if config.mode is Mode.MANIFOLD_MIXUP:
        v = manifold_mix_forward(extractor, x, x_j, lam, draw.layer)
        return zero, soft_cross_entropy(convex(y, y_j, lam), head(v))
    v_i = extractor(x)
    v_j = v_i[perm]
    v_hat = extractor(convex(x, x_j, lam))
    l_c = classification_loss(head, v_i, v_j, v_hat, y, y_j, lam)
    l_a = aggregation_loss(aggregation_residual(v_i, v_j, v_hat, lam, draw.noise),
                           config.aggregation)
    return l_a, l_c


def train_step(state: TrainState, x: torch.Tensor, y: torch.Tensor):
    """One SGD update of the extractor on a batch with one-hot (or soft) labels ``y``.

    Returns ``(state, LossReport)``; the head is never touched.
    """
    if len(x) < 2:
        raise DataError("a training batch needs at least two samples")
    model = state.model
    model.train()
    draw = draw_step(state.config, state.rng, len(x), len(model.extractor.blocks),
                     (len(x), model.extractor.embed_dim), x.dtype)
    try:
        l_a, l_c = objective(model, x, y, state.config, draw)
    except NumericError as exc:
        raise NumericError(f"at step {state.step}: {exc}") from exc
    l_t = l_c + l_a
    if not bool(torch.isfinite(l_t)):
        raise NumericError(
            f"non-finite loss at step {state.step}: l_a={float(l_a)}, l_c={float(l_c)}"
        )
    state.optimizer.zero_grad(set_to_none=True)
    l_t.backward()
    state.optimizer.step()
    state.step += 1
    return state, LossReport.from_parts(float(l_a.detach()), float(l_c.detach()))


@torch.no_grad()
def accuracy(model: Classifier, x: torch.Tensor, y: torch.Tensor) -> float:
    return float((model.predict(x) == y).double().mean())


@dataclass
class TrainResult:
    snapshot: ModelSnapshot
    history: list[dict] = field(default_factory=list)


def train(dataset: LabeledDataset, config: TrainConfig, arch: dict | None = None,
          model: Classifier | None = None, dtype=torch.float32, config_hash: str = "",
          softmax_scale: float = 1.0) -> TrainResult:
    """Run ``config.epochs`` epochs over seeded shuffles of ``dataset``.

    Either pass a ready ``model`` or an ``arch`` description; the default
    architecture is the small CNN sized to the dataset.
    """
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    if model is None:
        arch = arch or {"name": "small_cnn", "input_shape": list(dataset.sample_shape)}
        model = build_model(arch, dataset.n_classes, seed=config.rng_seed, dtype=dtype,
                            softmax_scale=softmax_scale)
    if model.head.n_classes != dataset.n_classes:
        raise ConfigError(f"dataset has {dataset.n_classes} classes, head has "
                          f"{model.head.n_classes}")
    dtype = next(model.extractor.parameters()).dtype
    x_all, y_all = dataset.tensors(dtype)
    y_soft = one_hot(y_all, dataset.n_classes, dtype)
    state = TrainState.create(model, config, config_hash)
    history = []
    n = len(dataset)
    for epoch in range(config.epochs):
        state.epoch = epoch
        state.set_lr(config.lr_at(epoch))
        order = torch.from_numpy(state.rng.permutation(n))
        sums = np.zeros(3)
        steps = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            _, report = train_step(state, x_all[idx], y_soft[idx])
            sums += (report.l_a, report.l_c, report.l_t)
            steps += 1
        state.epoch = epoch + 1
        l_a, l_c, l_t = sums / max(steps, 1)
        record = {"epoch": epoch + 1, "l_a": l_a, "l_c": l_c, "l_t": l_t,
                  "accuracy": accuracy(model, x_all, y_all), "lr": config.lr_at(epoch)}
        log.info("epoch %d  l_a=%.5f  l_c=%.5f  acc=%.4f", epoch + 1, l_a, l_c,
                 record["accuracy"])
        history.append(record)
    model.eval()
    return TrainResult(state.snapshot(), history)
