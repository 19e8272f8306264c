#!/usr/bin/env python3
# Attack a quickly trained digits model with the full benchmark suite and
# watch a single PGD run step by step.

import numpy as np

from dfa.attacks import BENCHMARK, evaluate_robustness, pgd
from dfa.harness.datasets import desk_dataset
from dfa.trainer import TrainConfig, train

train_set, test_set = desk_dataset("digits").split(0.75, seed=0)
model = train(train_set, TrainConfig(mode="dfa", epochs=10)).snapshot.model
x, y = test_set.tensors()

table = evaluate_robustness(model, x, y, BENCHMARK)
print(f"clean {table['clean']:.2f}%")
for name, acc in table["attacks"].items():
    print(f"  {name:<18}{acc:6.2f}%")
print(f"mean {table['mean']:.2f} ± {table['std']:.2f}")

# the iterates never leave the 4/255 ball
eps = 4 / 255
trace = []
pgd(model, x[:200], y[:200], eps, 2 / 255, 16, rng=np.random.default_rng(0),
    callback=lambda k, xk: trace.append((k, float((xk - x[:200]).abs().max()),
                                         float((model.predict(xk) == y[:200]).double().mean()))))
for k, dist, acc in trace[::4]:
    print(f"step {k:>2}: max |delta| = {dist * 255:.2f}/255  accuracy {100 * acc:.1f}%")

# a bigger budget is where the models actually break
for e in (8 / 255, 16 / 255, 32 / 255):
    adv = pgd(model, x, y, e, e / 4, 20, rng=np.random.default_rng(0))
    print(f"PGD-20 at {round(e * 255)}/255: {100 * float((model.predict(adv) == y).double().mean()):.1f}%")
