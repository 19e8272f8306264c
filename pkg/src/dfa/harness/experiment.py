"""Desk-scale controlled comparison of training modes on one seed.

Protocol: ``digits`` with a seeded 75/25 stratified split, the small CNN with a
64-d embedding and frozen orthogonal head, 20 epochs of SGD (lr 0.05, momentum
0.9, weight decay 5e-4, batch 64), alpha 1 and sigma 0.05 with the
mean-squared aggregation loss. Every mode shares the initial weights of its
seed. Held-out diagnostics use the test split; ``photo-patches`` is the OOD set.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch

from dfa import analysis, attacks, ood
from dfa.harness.datasets import desk_dataset
from dfa.models import build_model
from dfa.trainer import TrainConfig, train


@dataclass(frozen=True)
class DeskProtocol:
    dataset: str = "digits"
    ood_dataset: str = "photo-patches"
    test_fraction: float = 0.25
    split_seed: int = 0
    embed_dim: int = 64
    epochs: int = 20
    lr: float = 0.05
    alpha: float = 1.0
    sigma: float = 0.05
    reduction: str = "mean-squared"
    pairs: int = 1000
    pgd_epsilon: float = 4 / 255
    pgd_step: float = 2 / 255
    pgd_steps: int = 8


@dataclass
class ModeResult:
    mode: str
    clean_accuracy: float
    pgd_accuracy: float
    residual: float
    compactness: analysis.CompactnessReport
    ood_f1: float
    history: list = field(default_factory=list)
    head_unchanged: bool = True


@dataclass
class SeedResult:
    seed: int
    init_residual: float
    modes: dict[str, ModeResult]


def run_seed(seed: int, modes=("vanilla", "mixup", "dfa"),
             protocol: DeskProtocol = DeskProtocol()) -> SeedResult:
    data = desk_dataset(protocol.dataset)
    train_ds, test_ds = data.split(1 - protocol.test_fraction, seed=protocol.split_seed)
    x_test, y_test = test_ds.tensors()
    x_train, y_train = train_ds.tensors()
    x_ood, _ = desk_dataset(protocol.ood_dataset).tensors()
    arch = {"name": "small_cnn", "input_shape": list(train_ds.sample_shape),
            "embed_dim": protocol.embed_dim}
    initial = build_model(arch, data.n_classes, seed=seed)
    init_residual = analysis.probe_dataset(initial, x_test, protocol.pairs, protocol.alpha,
                                           seed=1000 + seed).mean
    results = {}
    for mode in modes:
        model = copy.deepcopy(initial)
        head_before = model.head.weight.clone()
        cfg = TrainConfig(mode=mode, alpha=protocol.alpha, sigma=protocol.sigma,
                          reduction=protocol.reduction, epochs=protocol.epochs,
                          lr_schedule=((protocol.lr, protocol.epochs),), rng_seed=seed)
        res = train(train_ds, cfg, model=model)
        m = res.snapshot.model
        adv = attacks.pgd(m, x_test, y_test, protocol.pgd_epsilon, protocol.pgd_step,
                          protocol.pgd_steps, True, np.random.default_rng(seed))
        report = ood.evaluate_ood(m, x_train, y_train, x_test, x_ood)
        results[mode] = ModeResult(
            mode=mode,
            clean_accuracy=float((m.predict(x_test) == y_test).double().mean()),
            pgd_accuracy=float((m.predict(adv) == y_test).double().mean()),
            residual=analysis.probe_dataset(m, x_test, protocol.pairs, protocol.alpha,
                                            seed=1000 + seed).mean,
            compactness=analysis.compactness(m, x_test, y_test),
            ood_f1=report.best_f1,
            history=res.history,
            head_unchanged=torch.equal(head_before, m.head.weight),
        )
    return SeedResult(seed, init_residual, results)
