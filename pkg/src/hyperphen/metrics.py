"""Ranking metrics and explanation-quality metrics.

All tie-breaking is by ascending code index so that scores containing exact
ties (common with small vocabularies and softmax saturation) rank
deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores; ties broken by code index ascending."""
    scores = np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return order[:k]


def recall_at_k(scores: np.ndarray, positives: set[int], k: int) -> float:
    """|top-k ∩ positives| / |positives|."""
    if not positives:
        raise ValueError("positives must be non-empty; exclude the patient instead")
    top = set(int(i) for i in top_k_indices(scores, k))
    return len(top & positives) / len(positives)


def ndcg_at_k(scores: np.ndarray, positives: set[int], k: int) -> float:
    """Binary-relevance nDCG with gain 1 and the 1/log2(rank+1) discount."""
    if not positives:
        raise ValueError("positives must be non-empty; exclude the patient instead")
    top = top_k_indices(scores, k)
    dcg = sum(1.0 / math.log2(rank + 2) for rank, idx in enumerate(top) if int(idx) in positives)
    ideal = sum(1.0 / math.log2(rank + 2) for rank in range(min(k, len(positives))))
    return dcg / ideal


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Sample Pearson correlation; None when either side has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length sequences of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return None
    return float(dx @ dy) / denom


@dataclass(frozen=True)
class FaithfulnessResult:
    value: float | None
    n_used: int
    n_skipped: int


def faithfulness_from_pairs(
    weights_per_patient: Sequence[Sequence[float]],
    changes_per_patient: Sequence[Sequence[float]],
) -> FaithfulnessResult:
    """Mean per-patient correlation between phenotype weights and the effect of
    removing each phenotype; patients with undefined correlation are skipped
    and counted."""
    if len(weights_per_patient) != len(changes_per_patient):
        raise ValueError("weights and changes must pair up per patient")
    values = []
    skipped = 0
    for weights, changes in zip(weights_per_patient, changes_per_patient):
        corr = pearson(weights, changes)
        if corr is None:
            skipped += 1
        else:
            values.append(corr)
    mean = float(np.mean(values)) if values else None
    return FaithfulnessResult(value=mean, n_used=len(values), n_skipped=skipped)


def phenotype_complexity(mask_sets: Sequence[np.ndarray]) -> float:
    """Mean total explanation size: Σ_k nnz(mask_k), averaged over patients."""
    if not mask_sets:
        raise ValueError("no patients given")
    return float(np.mean([float(np.count_nonzero(masks)) for masks in mask_sets]))


@dataclass(frozen=True)
class DistinctnessResult:
    value: float | None
    n_used: int
    n_skipped: int


def phenotype_distinctness(mask_sets: Sequence[np.ndarray]) -> DistinctnessResult:
    """Overlap-free fraction of phenotype cells, averaged over patients.

    Per patient: count of nonzero cells of Σ_k mask_k divided by its entrywise
    sum — 1.0 when phenotypes are pairwise disjoint, 1/K when all K are
    identical.  Patients whose phenotypes are all empty are skipped and
    counted.
    """
    values = []
    skipped = 0
    for masks in mask_sets:
        stacked = np.asarray(masks, dtype=float).sum(axis=0)
        l1 = float(stacked.sum())
        if l1 == 0.0:
            skipped += 1
            continue
        values.append(float(np.count_nonzero(stacked)) / l1)
    mean = float(np.mean(values)) if values else None
    return DistinctnessResult(value=mean, n_used=len(values), n_skipped=skipped)


@dataclass(frozen=True)
class EvalReport:
    recall_at_10: float
    recall_at_20: float
    ndcg_at_10: float
    ndcg_at_20: float
    faithfulness: float | None
    complexity: float
    distinctness: float | None
    n_patients: int
    n_skipped_faithfulness: int = 0
    n_skipped_distinctness: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "recall@10": self.recall_at_10,
            "recall@20": self.recall_at_20,
            "ndcg@10": self.ndcg_at_10,
            "ndcg@20": self.ndcg_at_20,
            "faithfulness": self.faithfulness,
            "complexity": self.complexity,
            "distinctness": self.distinctness,
            "n_patients": self.n_patients,
            "n_skipped_faithfulness": self.n_skipped_faithfulness,
            "n_skipped_distinctness": self.n_skipped_distinctness,
            **self.extra,
        }
