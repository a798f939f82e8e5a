"""Per-patient hypergraphs and two-stage message passing.

A patient is a hypergraph whose nodes are diagnosis codes and whose hyperedges
are visits, stored as a sparse binary incidence matrix of shape ``|C| x T``.
Message passing alternates code-to-visit mean aggregation with a GIN-style
visit-to-code update, yielding a personalized embedding table per patient.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .common import DTYPE, make_generator
from .data import PatientRecord, Visit


@dataclass(frozen=True)
class PatientHypergraph:
    """Sparse incidence: entry (i, j) is 1 iff visit j contains code i."""

    incidence: torch.Tensor  # sparse COO, |C| x T
    n_codes: int
    visit_count: int

    @property
    def nnz(self) -> int:
        return self.incidence._nnz()

    def dense(self) -> torch.Tensor:
        return self.incidence.to_dense()

    def support(self) -> torch.Tensor:
        """2 x nnz index tensor of occupied (code, visit) cells."""
        return self.incidence.coalesce().indices()


def incidence_from_visits(visits: tuple[Visit, ...], n_codes: int) -> PatientHypergraph:
    rows, cols = [], []
    for j, visit in enumerate(visits):
        for i in sorted(visit.codes):
            if not 0 <= i < n_codes:
                raise IndexError(f"code index {i} out of range for vocabulary of {n_codes}")
            rows.append(i)
            cols.append(j)
    matrix = torch.sparse_coo_tensor(
        torch.tensor([rows, cols], dtype=torch.long).reshape(2, -1),
        torch.ones(len(rows), dtype=DTYPE),
        size=(n_codes, len(visits)),
    ).coalesce()
    return PatientHypergraph(incidence=matrix, n_codes=n_codes, visit_count=len(visits))


def build_incidence(
    record: PatientRecord, n_codes: int, use_all_visits: bool = False
) -> PatientHypergraph:
    """Incidence over the record's input visits (or every visit when serving).

    Empty (fully masked) visits stay as all-zero columns so the visit axis
    matches the record.
    """
    visits = record.visits if use_all_visits else record.input_visits
    if len(visits) < 1:
        raise ValueError(f"patient {record.patient_id} has no input visits")
    return incidence_from_visits(visits, n_codes)


def visit_aggregate(graph: PatientHypergraph, code_table: torch.Tensor) -> torch.Tensor:
    """Mean of member-code embeddings per visit; empty visits map to zero.

    Returns a ``T x d`` matrix.
    """
    if code_table.shape[0] != graph.n_codes:
        raise ValueError(
            f"embedding table has {code_table.shape[0]} rows, expected {graph.n_codes}"
        )
    sums = torch.sparse.mm(graph.incidence.t(), code_table)
    counts = torch.sparse.sum(graph.incidence, dim=0).to_dense()
    return sums / counts.clamp(min=1.0).unsqueeze(1)


class UniGINLayer(nn.Module):
    """GIN-style update: codes absorb the sum of their visits' embeddings.

    ``out_i = LeakyReLU(W((1 + eps) m_i + sum_{j : visit j contains i} v_j))``
    with a learnable scalar ``eps`` (initialized 0) and slope 0.01.
    """

    NEGATIVE_SLOPE = 0.01

    def __init__(self, in_dim: int, out_dim: int, seed: int) -> None:
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_dim, in_dim, dtype=DTYPE))
        bound = 1.0 / in_dim**0.5
        self.weight.data.uniform_(-bound, bound, generator=make_generator(seed, "unigin", in_dim, out_dim))
        self.eps = nn.Parameter(torch.zeros((), dtype=DTYPE))
        self.activation = nn.LeakyReLU(self.NEGATIVE_SLOPE)

    def forward(self, graph: PatientHypergraph, code_table: torch.Tensor) -> torch.Tensor:
        visit_emb = visit_aggregate(graph, code_table)
        gathered = torch.sparse.mm(graph.incidence, visit_emb)
        mixed = (1.0 + self.eps) * code_table + gathered
        return self.activation(mixed @ self.weight.t())


class UniGINStack(nn.Module):
    """Composition of message-passing layers; ``dims[0]`` must equal the input width."""

    def __init__(self, dims: tuple[int, ...], seed: int) -> None:
        super().__init__()
        if len(dims) < 2:
            raise ValueError("need at least one layer (two dims)")
        self.layers = nn.ModuleList(
            UniGINLayer(dims[z], dims[z + 1], seed=seed * 1000 + z) for z in range(len(dims) - 1)
        )

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def forward(self, graph: PatientHypergraph, code_table: torch.Tensor) -> torch.Tensor:
        out = code_table
        for layer in self.layers:
            out = layer(graph, out)
        return out
