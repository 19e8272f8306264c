#!/usr/bin/env python3
# A look at the two building blocks: the frozen orthogonal head and pair mixing.

import numpy as np
import torch

from dfa.mixing import mix, sample_lambda
from dfa.ortho_head import cosine_scores, init_orthogonal

rng = np.random.default_rng(0)

head = init_orthogonal(n_classes=10, embed_dim=64, rng=rng)
w = head.weight.double().numpy()
print("head weights", w.shape, "trainable params:", len(list(head.parameters())))
print("largest off-diagonal |w_k . w_l|:", head.max_offdiag_dot())

# scores are cosines, so only the direction of an embedding matters
v = 3.0 * w[4] + 0.5 * w[7]
for c in (1.0, 10.0, 1e-3):
    s = cosine_scores(head, c * v)
    print(f"scale {c:>6}: argmax {s.scores.argmax()}  score {s.scores.max():.4f}  "
          f"p {s.probabilities.max():.4f}")

# with unit scale the softmax stays soft: v = w_k scores 1 on k and 0 elsewhere
p = cosine_scores(head, w[4]).probabilities[4]
print(f"p for an embedding on a class axis: {p:.4f} (e / (e + 9) = {np.e / (np.e + 9):.4f})")

# one lambda per batch, pairs by permutation
lams = [sample_lambda(1.0, rng).lambda_value for _ in range(5)]
print("lambda draws:", np.round(lams, 3))

x = torch.rand(4, 1, 8, 8)
y = torch.eye(10)[[0, 3, 3, 9]]
perm = torch.from_numpy(rng.permutation(4))
out = mix(x, x[perm], y, y[perm], 0.3)
print("mixed labels:\n", out.y_mixed.numpy().round(2))
