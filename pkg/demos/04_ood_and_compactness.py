#!/usr/bin/env python3
# Class-direction OOD scoring and embedding compactness, with plots in demos/out/.

from pathlib import Path

import numpy as np

from dfa.analysis import compactness
from dfa.harness.datasets import desk_dataset
from dfa.harness.report import plot_compactness, plot_score_histogram
from dfa.ood import compute_prototypes, evaluate_ood
from dfa.trainer import TrainConfig, train

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

train_set, test_set = desk_dataset("digits").split(0.75, seed=0)
x_tr, y_tr = train_set.tensors()
x_te, y_te = test_set.tensors()
x_ood, _ = desk_dataset("photo-patches").tensors()

rows = []
for mode in ("vanilla", "dfa"):
    model = train(train_set, TrainConfig(mode=mode, epochs=20)).snapshot.model
    protos = compute_prototypes(model, x_tr, y_tr)
    rep = evaluate_ood(model, None, None, x_te, x_ood, prototypes=protos)
    print(f"{mode}: best F1 {rep.best_f1:.4f} at angle {np.degrees(rep.best_threshold):.1f} deg")
    print(f"  mean angle ID {np.degrees(rep.scores[rep.labels].mean()):.1f} deg, "
          f"OOD {np.degrees(rep.scores[~rep.labels].mean()):.1f} deg")
    plot_score_histogram(rep.scores, rep.labels, rep.best_threshold, out / f"ood_{mode}.png")

    c = compactness(model, x_te, y_te)
    rows.append((mode, list(c.per_class_std), c.total_std, None))
    print(f"  class std {np.round(c.per_class_std, 3)}  total {c.total_std:.3f}")

plot_compactness(rows, out / "compactness.png")
print("plots in", out)
