"""Learned extraction of K temporal-phenotype sub-hypergraphs.

Each of K independent heads maps a (code, visit) cell of the supplemented
incidence matrix to a keep-probability, realized as a binary mask through a
Gumbel reparameterization with a straight-through gradient.  A phenotype is
the supplemented incidence restricted to its mask — a sub-hypergraph the
downstream predictor consumes exclusively.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import torch
from torch import nn

from .common import DTYPE, make_generator
from .hypergraph import PatientHypergraph

PROB_FLOOR = 1e-6
Mode = Literal["sample", "deterministic", "soft"]


class ExtractorHead(nn.Module):
    """MLP from concatenated [code emb, visit emb] to a keep-probability."""

    def __init__(self, dim: int, seed: int) -> None:
        super().__init__()
        gen = make_generator(seed, "extractor")
        self.hidden = nn.Linear(2 * dim, dim, dtype=DTYPE)
        self.out = nn.Linear(dim, 1, dtype=DTYPE)
        for layer in (self.hidden, self.out):
            bound = 1.0 / layer.in_features**0.5
            layer.weight.data.uniform_(-bound, bound, generator=gen)
            layer.bias.data.uniform_(-bound, bound, generator=gen)
        self.activation = nn.LeakyReLU(0.01)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        raw = torch.sigmoid(self.out(self.activation(self.hidden(features))))
        return raw.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).squeeze(-1)


def mask_probabilities(
    head: ExtractorHead,
    code_table: torch.Tensor,
    visit_table: torch.Tensor,
    support: torch.Tensor,
) -> torch.Tensor:
    """Keep-probabilities for the occupied cells listed in ``support`` (2 x nnz).

    Cells outside the support never enter a phenotype, so only support cells
    are scored — cost is O(nnz), not O(|C| * T).
    """
    rows, cols = support[0], support[1]
    features = torch.cat([code_table[rows], visit_table[cols]], dim=1)
    return head(features)


def gumbel_binary(
    probs: torch.Tensor,
    tau: float,
    mode: Mode,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Binary mask values with the keep-probabilities' gradient.

    ``sample``: draws two Gumbel noises, squashes ``(logit(p) + g0 - g1)/tau``
    through a sigmoid, hard-binarizes at 0.5 in the value, and routes the
    gradient through the soft sigmoid (straight-through).  The marginal
    P(mask=1) equals ``p`` exactly for any temperature.  ``deterministic``:
    noise-free threshold at 0.5, used at evaluation and serving.  ``soft``:
    the sampled sigmoid without binarization — exists solely so
    finite-difference gradient checks run on a smooth path.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if mode == "deterministic":
        return (probs > 0.5).to(probs.dtype)
    uniforms = torch.rand(2, *probs.shape, dtype=probs.dtype, generator=generator)
    uniforms = uniforms.clamp(1e-12, 1.0 - 1e-12)
    gumbels = -torch.log(-torch.log(uniforms))
    soft = torch.sigmoid((torch.logit(probs) + gumbels[0] - gumbels[1]) / tau)
    if mode == "soft":
        return soft
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")
    hard = (soft > 0.5).to(probs.dtype)
    # grouping keeps the forward value exactly binary: x - x is exactly zero,
    # while (hard + soft) - soft need not round back to hard
    return hard.detach() + (soft - soft.detach())


@dataclass(frozen=True)
class PhenotypeSet:
    """K masks over the supplemented incidence; the predictor's only input.

    ``masks[k]`` is a dense ``|C| x T`` matrix, binary in value under
    ``sample``/``deterministic`` modes (gradients ride the soft path), zero
    outside the supplemented support.
    """

    masks: torch.Tensor  # K x |C| x T
    tau: float
    mode: Mode

    @property
    def n_phenotypes(self) -> int:
        return int(self.masks.shape[0])

    def hard(self) -> torch.Tensor:
        """Detached binary masks for reporting and serialization."""
        return (self.masks.detach() > 0.5).to(self.masks.dtype)

    def cells(self, k: int) -> list[tuple[int, int]]:
        """Sorted (code, visit) members of phenotype k."""
        idx = (self.hard()[k] > 0).nonzero(as_tuple=False)
        return sorted((int(i), int(j)) for i, j in idx)


class PhenotypeExtractorBank(nn.Module):
    """K parameter-independent extractor heads applied to one patient."""

    def __init__(self, n_phenotypes: int, dim: int, seed: int) -> None:
        super().__init__()
        if n_phenotypes < 1:
            raise ValueError(f"need at least one phenotype, got {n_phenotypes}")
        self.heads = nn.ModuleList(
            ExtractorHead(dim, seed=seed * 1000 + k) for k in range(n_phenotypes)
        )

    @property
    def n_phenotypes(self) -> int:
        return len(self.heads)

    def extract(
        self,
        code_table: torch.Tensor,
        visit_table: torch.Tensor,
        graph: PatientHypergraph,
        tau: float,
        mode: Mode,
        seed: int,
        patient_id: str,
    ) -> PhenotypeSet:
        """Score the supplemented support per head and draw the K masks.

        Noise streams are derived from (seed, patient id, head index), so one
        patient's draw never perturbs another's.
        """
        support = graph.support()
        rows, cols = support[0], support[1]
        masks = []
        for k, head in enumerate(self.heads):
            probs = mask_probabilities(head, code_table, visit_table, support)
            gen = make_generator(seed, patient_id, k) if mode != "deterministic" else None
            values = gumbel_binary(probs, tau, mode, gen)
            dense = torch.zeros(graph.n_codes, graph.visit_count, dtype=code_table.dtype)
            dense = dense.index_put((rows, cols), values)
            masks.append(dense)
        return PhenotypeSet(masks=torch.stack(masks), tau=tau, mode=mode)
