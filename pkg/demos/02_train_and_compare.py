#!/usr/bin/env python3
# Train vanilla, mixup and aggregation models from the same initial weights and
# compare robustness, compactness and the mixing residual. About 10 s on one CPU.

import sys

from dfa.harness.experiment import DeskProtocol, run_seed

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
protocol = DeskProtocol()
res = run_seed(seed, modes=("vanilla", "mixup", "manifold_mixup", "dfa"), protocol=protocol)

print(f"digits, seed {seed}, {protocol.epochs} epochs")
print(f"mixing residual at init: {res.init_residual:.3f}")
print(f"{'mode':<16}{'clean':>8}{'PGD-8':>8}{'residual':>10}{'class std':>11}{'total std':>11}{'OOD F1':>8}")
for name, m in res.modes.items():
    c = m.compactness
    print(f"{name:<16}{100 * m.clean_accuracy:>7.1f}%{100 * m.pgd_accuracy:>7.1f}%"
          f"{m.residual:>10.3f}{c.mean_class_std:>11.3f}{c.total_std:>11.3f}{m.ood_f1:>8.4f}")

# the aggregation term in the loss over training
hist = res.modes["dfa"].history
print("\nepoch  l_a      l_c     acc")
for h in hist[::4] + hist[-1:]:
    print(f"{h['epoch']:>5}  {h['l_a']:.4f}  {h['l_c']:.4f}  {h['accuracy']:.3f}")
