"""Class-aware OOD detection with per-class singular directions.

Each class is summarised by the top right-singular vector of its training
embedding matrix. A test sample scores the smallest angle between its
embedding and any class direction; large angles indicate OOD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from dfa.errors import DataError, DegenerateInputError, DimensionError, MetricUndefinedError


@dataclass(frozen=True)
class ClassPrototypeSet:
    prototypes: np.ndarray  # (n_classes, embed_dim), unit rows
    counts: np.ndarray
    source_hash: str = ""

    @property
    def n_classes(self) -> int:
        return len(self.prototypes)


def _as_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        t = t.detach().cpu()
    return np.asarray(t, dtype=np.float64)


def top_singular_vector(matrix: np.ndarray) -> np.ndarray:
    """Unit top right-singular vector, sign fixed so the largest-magnitude entry is positive."""
    _, _, vt = np.linalg.svd(matrix, full_matrices=False)
    v = vt[0]
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def prototypes_from_embeddings(embeddings, labels, n_classes: int,
                               source_hash: str = "") -> ClassPrototypeSet:
    v = _as_numpy(embeddings)
    labels = np.asarray(labels)
    protos, counts = [], []
    for k in range(n_classes):
        rows = v[labels == k]
        if len(rows) == 0:
            raise DataError(f"class {k} has no training samples")
        protos.append(top_singular_vector(rows))
        counts.append(len(rows))
    return ClassPrototypeSet(np.stack(protos), np.array(counts), source_hash)


def compute_prototypes(model, x, y, n_classes: int | None = None,
                       source_hash: str = "") -> ClassPrototypeSet:
    """Class directions from the training embeddings of ``model``."""
    n_classes = n_classes or model.head.n_classes
    return prototypes_from_embeddings(model.embeddings(x), _as_numpy(y).astype(int), n_classes,
                                      source_hash)


def angle_scores(embeddings, prototypes: ClassPrototypeSet) -> np.ndarray:
    """min_k arccos(|v . p_k| / ||v||) for every row v."""
    v = _as_numpy(embeddings)
    if v.ndim == 1:
        v = v[None]
    if v.shape[1] != prototypes.prototypes.shape[1]:
        raise DimensionError(f"embedding dim {v.shape[1]} does not match prototypes "
                             f"({prototypes.prototypes.shape[1]})")
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0):
        raise DegenerateInputError("zero-norm embedding has no direction to score")
    cos = np.abs(v @ prototypes.prototypes.T) / norms[:, None]
    return np.arccos(np.clip(cos, 0.0, 1.0)).min(axis=1)


def ood_score(model, prototypes: ClassPrototypeSet, x) -> np.ndarray:
    return angle_scores(model.embeddings(x), prototypes)


@dataclass
class SweepResult:
    best_threshold: float
    best_f1: float
    thresholds: np.ndarray
    f1: np.ndarray


def f1_from_counts(tp, fp, fn):
    tp, fp, fn = (np.asarray(a, dtype=np.float64) for a in (tp, fp, fn))
    denom = 2 * tp + fp + fn
    return np.where(tp > 0, 2 * tp / np.where(denom > 0, denom, 1.0), 0.0)


def f1_sweep(scores, is_id) -> SweepResult:
    """Best F1 over thresholds, treating ID as positive and predicting ID when score <= t.

    Candidates are -inf, the midpoints of adjacent distinct scores and +inf,
    which together realise every distinct confusion matrix.
    """
    s = _as_numpy(scores).ravel()
    is_id = np.asarray(is_id, dtype=bool).ravel()
    if len(s) != len(is_id):
        raise DimensionError(f"{len(s)} scores but {len(is_id)} labels")
    n_pos = int(is_id.sum())
    if n_pos == 0 or n_pos == len(s):
        raise MetricUndefinedError("F1 sweep needs both ID and OOD samples")
    u = np.unique(s)
    id_sorted, ood_sorted = np.sort(s[is_id]), np.sort(s[~is_id])
    # counts below each distinct score, taken by index so midpoints never matter
    tp = np.concatenate([[0], np.searchsorted(id_sorted, u, side="right")])
    fp = np.concatenate([[0], np.searchsorted(ood_sorted, u, side="right")])
    thresholds = np.concatenate([[-np.inf], (u[:-1] + u[1:]) / 2, [np.inf]])
    f1 = f1_from_counts(tp, fp, n_pos - tp)
    best = int(np.argmax(f1))
    return SweepResult(float(thresholds[best]), float(f1[best]), thresholds, f1)


@dataclass
class OODReport:
    scores: np.ndarray
    labels: np.ndarray  # True for ID
    best_threshold: float
    best_f1: float
    extra: dict = field(default_factory=dict)

    def to_fields(self) -> dict:
        return {"best_f1": self.best_f1, "best_threshold": self.best_threshold,
                "n_id": int(self.labels.sum()), "n_ood": int((~self.labels).sum()),
                "mean_score_id": float(self.scores[self.labels].mean()),
                "mean_score_ood": float(self.scores[~self.labels].mean()), **self.extra}


def evaluate_ood(model, train_x, train_y, id_x, ood_x,
                 prototypes: ClassPrototypeSet | None = None) -> OODReport:
    """Score ID and OOD test sets against class directions from the training set."""
    if prototypes is None:
        prototypes = compute_prototypes(model, train_x, train_y)
    scores = np.concatenate([ood_score(model, prototypes, id_x),
                             ood_score(model, prototypes, ood_x)])
    labels = np.concatenate([np.ones(len(id_x), bool), np.zeros(len(ood_x), bool)])
    sweep = f1_sweep(scores, labels)
    return OODReport(scores, labels, sweep.best_threshold, sweep.best_f1)
