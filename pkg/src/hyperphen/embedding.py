"""Hierarchical diagnosis-code embeddings.

Each ontology level owns a learnable table with one row per node at that
level.  A code's embedding is the concatenation of its ancestor rows from the
root level down to the leaf, so codes sharing ancestors share embedding
prefixes and gradients flow only into the rows on the code's root-to-leaf path.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .common import DTYPE, make_generator
from .ontology import OntologyTree


def init_level_tables(tree: OntologyTree, d_c: int, seed: int) -> list[torch.Tensor]:
    """One table per level, entries uniform in [-1/sqrt(d_c), 1/sqrt(d_c)]."""
    if d_c < 1:
        raise ValueError(f"embedding width must be >= 1, got {d_c}")
    gen = make_generator(seed, "level-tables")
    bound = 1.0 / math.sqrt(d_c)
    tables = []
    for level in range(tree.n_levels):
        table = torch.empty(tree.n_nodes(level + 1), d_c, dtype=DTYPE)
        table.uniform_(-bound, bound, generator=gen)
        tables.append(table)
    return tables


def ontology_embedding(
    tables: list[torch.Tensor], tree: OntologyTree, code_index: int
) -> torch.Tensor:
    """Concatenate the code's ancestor rows, root level first."""
    rows = tree.ancestor_rows[code_index]
    return torch.cat([tables[level][rows[level]] for level in range(tree.n_levels)])


class HierarchicalCodeEmbedding(nn.Module):
    """Learnable level tables plus the derived per-code concatenated table."""

    def __init__(self, tree: OntologyTree, d_c: int, seed: int) -> None:
        super().__init__()
        self.tree = tree
        self.d_c = d_c
        self.tables = nn.ParameterList(
            nn.Parameter(t) for t in init_level_tables(tree, d_c, seed)
        )
        # row index of each code's ancestor at every level, shape |C| x L
        paths = torch.tensor(tree.ancestor_rows, dtype=torch.long)
        self.register_buffer("ancestor_index", paths)

    @property
    def out_dim(self) -> int:
        return self.tree.n_levels * self.d_c

    def full_table(self) -> torch.Tensor:
        """|C| x (L*d_c) matrix; row i is code i's root-to-leaf concatenation."""
        parts = [
            self.tables[level][self.ancestor_index[:, level]]
            for level in range(self.tree.n_levels)
        ]
        return torch.cat(parts, dim=1)

    def forward(self) -> torch.Tensor:
        return self.full_table()
