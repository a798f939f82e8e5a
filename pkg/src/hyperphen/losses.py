"""Training objectives: prediction, reconstruction fidelity, and the two
interpretability regularizers (phenotype distinctness and attention-weight
shaping), combined with fixed non-negative weights."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import torch

CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    fidelity: float = 0.1
    distinct: float = 0.01
    alpha: float = 0.1

    def __post_init__(self) -> None:
        if min(self.fidelity, self.distinct, self.alpha) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossReport:
    pred: float
    fidelity: float
    distinct: float
    alpha: float
    total: float

    def to_dict(self) -> dict:
        return {
            "pred": self.pred,
            "fidelity": self.fidelity,
            "distinct": self.distinct,
            "alpha": self.alpha,
            "total": self.total,
        }


def _binary_cross_entropy(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    probs = probs.clamp(CLAMP, 1.0 - CLAMP)
    return -(targets * probs.log() + (1.0 - targets) * (1.0 - probs).log())


def loss_pred(y_hat: torch.Tensor, y_true: torch.Tensor) -> torch.Tensor:
    """Multi-label cross-entropy, summed over codes, averaged over the batch.

    ``y_hat`` is N x |C| in (0,1); ``y_true`` is the multi-hot next visit.
    """
    if y_hat.shape != y_true.shape:
        raise ValueError(f"shape mismatch: {tuple(y_hat.shape)} vs {tuple(y_true.shape)}")
    return _binary_cross_entropy(y_hat, y_true).sum(dim=-1).mean()


def loss_fidelity(p_hat_batch: Sequence[torch.Tensor], p_batch: Sequence[torch.Tensor]) -> torch.Tensor:
    """Reconstruction error against the *original* incidence matrix.

    Per patient: per-cell binary cross-entropy summed over all |C| x T cells,
    normalized by T * |C|; averaged over the batch.  The target is the
    pre-augmentation matrix — reconstruction should not reward invented cells.
    """
    if len(p_hat_batch) != len(p_batch):
        raise ValueError("batch size mismatch")
    per_patient = []
    for p_hat, p in zip(p_hat_batch, p_batch):
        if p_hat.shape != p.shape:
            raise ValueError(f"shape mismatch: {tuple(p_hat.shape)} vs {tuple(p.shape)}")
        per_patient.append(_binary_cross_entropy(p_hat, p).sum() / p.numel())
    return torch.stack(per_patient).mean()


def loss_distinct(masks_batch: Sequence[torch.Tensor]) -> torch.Tensor:
    """Push per-visit phenotype columns toward an orthonormal set.

    For each patient (masks K x |C| x T) and visit j, stack the K mask columns
    into B_j (|C| x K) and penalize the Frobenius norm of I_K − B_jᵀB_j;
    average over visits, then over the batch.  Zero iff every phenotype keeps
    exactly one code per visit with no overlap.
    """
    per_patient = []
    for masks in masks_batch:
        n_phen = masks.shape[0]
        identity = torch.eye(n_phen, dtype=masks.dtype)
        columns = masks.permute(2, 1, 0)  # T x |C| x K
        grams = columns.transpose(1, 2) @ columns  # T x K x K
        norms = torch.linalg.matrix_norm(identity - grams, ord="fro")
        per_patient.append(norms.mean())
    return torch.stack(per_patient).mean()


def loss_alpha(alpha_batch: torch.Tensor) -> torch.Tensor:
    """Keep attention weights away from both uniform and one-hot extremes.

    Per patient: ||α||₂ − std(α) with the population standard deviation;
    averaged over the batch.  Uniform weights maximize neither term's gap
    (std = 0, small norm); one-hot weights have maximal norm — the minimum sits
    strictly between.  For K = 1 the term is the constant 1 and cannot shape
    anything, hence the configuration warning.
    """
    if alpha_batch.dim() == 1:
        alpha_batch = alpha_batch.unsqueeze(0)
    n_phen = alpha_batch.shape[1]
    if n_phen == 1:
        warnings.warn(
            "attention-weight regularizer is vacuous with a single phenotype",
            UserWarning,
            stacklevel=2,
        )
    norms = alpha_batch.norm(dim=1)
    stds = alpha_batch.std(dim=1, unbiased=False) if n_phen > 1 else torch.zeros_like(norms)
    return (norms - stds).mean()


def total_loss(
    pred: torch.Tensor,
    fidelity: torch.Tensor,
    distinct: torch.Tensor,
    alpha: torch.Tensor,
    weights: LossWeights,
) -> tuple[torch.Tensor, LossReport]:
    total = (
        pred
        + weights.fidelity * fidelity
        + weights.distinct * distinct
        + weights.alpha * alpha
    )
    report = LossReport(
        pred=float(pred.detach()),
        fidelity=float(fidelity.detach()),
        distinct=float(distinct.detach()),
        alpha=float(alpha.detach()),
        total=float(total.detach()),
    )
    return total, report
