"""False-negative repair: add plausible missing code-visit pairs.

Absent cells of the incidence matrix are scored by a multi-head weighted
cosine similarity between the code's and the visit's embeddings; the
top-scoring cells (a fixed ratio of the number of recorded occurrences) are
added as supplementary hyperedge memberships.  Cells already present score
zero by construction, so the supplement never duplicates the record.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .common import DTYPE, round_half_up
from .hypergraph import PatientHypergraph


class SimilarityHeads(nn.Module):
    """A stack of learnable element-wise reweighting vectors for the cosine.

    Initialized to all-ones (plain cosine): the hard top-k selection downstream
    passes no gradient back to these weights, so the starting point is the
    behavior.
    """

    def __init__(self, n_heads: int, dim: int) -> None:
        super().__init__()
        if n_heads < 1:
            raise ValueError(f"need at least one similarity head, got {n_heads}")
        self.weights = nn.Parameter(torch.ones(n_heads, dim, dtype=DTYPE))

    @property
    def n_heads(self) -> int:
        return self.weights.shape[0]


def similarity_scores(
    heads: SimilarityHeads,
    code_table: torch.Tensor,
    visit_table: torch.Tensor,
    graph: PatientHypergraph,
) -> torch.Tensor:
    """``|C| x T`` mean-over-heads cosine scores, zeroed on the existing support.

    Zero-norm rows (codes absent everywhere, empty visits) score 0 rather than
    NaN.
    """
    scores = torch.zeros(graph.n_codes, graph.visit_count, dtype=code_table.dtype)
    for k in range(heads.n_heads):
        weighted_codes = heads.weights[k] * code_table
        weighted_visits = heads.weights[k] * visit_table
        code_norm = weighted_codes.norm(dim=1)
        visit_norm = weighted_visits.norm(dim=1)
        dots = weighted_codes @ weighted_visits.t()
        denom = code_norm.unsqueeze(1) * visit_norm.unsqueeze(0)
        scores = scores + torch.where(denom > 0, dots / denom.clamp(min=1e-300), torch.zeros_like(dots))
    scores = scores / heads.n_heads
    mask = graph.dense() > 0
    return scores.masked_fill(mask, 0.0)


@dataclass(frozen=True)
class AugmentedHypergraph:
    base: PatientHypergraph
    delta: torch.Tensor  # dense binary |C| x T, disjoint from base's support
    ratio: float

    @property
    def combined(self) -> torch.Tensor:
        """Dense binary supplemented incidence."""
        return self.base.dense() + self.delta

    def combined_graph(self) -> PatientHypergraph:
        sparse = self.combined.to_sparse_coo().coalesce()
        return PatientHypergraph(
            incidence=sparse, n_codes=self.base.n_codes, visit_count=self.base.visit_count
        )

    def added_cells(self) -> list[tuple[int, int]]:
        """(code, visit) pairs introduced by augmentation, sorted."""
        idx = self.delta.nonzero(as_tuple=False)
        return sorted((int(i), int(j)) for i, j in idx)


def supplement(scores: torch.Tensor, graph: PatientHypergraph, ratio: float) -> AugmentedHypergraph:
    """Add the top ``round(ratio * nnz)`` absent cells by score.

    Ties break by (score desc, code index asc, visit index asc); the budget is
    capped at the number of free cells.  Selection is a hard, non-differentiable
    choice: scores feed it but receive no gradient through it.
    """
    if ratio < 0:
        raise ValueError(f"augmentation ratio must be >= 0, got {ratio}")
    n_codes, n_visits = graph.n_codes, graph.visit_count
    present = graph.dense() > 0
    free = int(n_codes * n_visits - present.sum().item())
    budget = min(round_half_up(ratio * graph.nnz), free)
    delta = torch.zeros(n_codes, n_visits, dtype=DTYPE)
    if budget > 0:
        flat_scores = scores.detach().reshape(-1)
        flat_free = (~present).reshape(-1)
        # total order: score descending, then flat index (code-major) ascending
        order = torch.argsort(-flat_scores, stable=True)
        chosen = order[flat_free[order]][:budget]
        delta.view(-1)[chosen] = 1.0
    return AugmentedHypergraph(base=graph, delta=delta, ratio=ratio)
