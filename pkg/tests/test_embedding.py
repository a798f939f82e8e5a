import math

import numpy as np
import torch

from hyperphen.embedding import HierarchicalCodeEmbedding, init_level_tables, ontology_embedding
from hyperphen.ontology import build_ontology

CODES = ["250.00", "250.60", "401.9", "486", "518.81", "518.83", "V58.61"]


class TestInit:
    def test_shapes_match_tree(self):
        tree = build_ontology(CODES)
        tables = init_level_tables(tree, d_c=8, seed=0)
        assert len(tables) == 4
        for level, table in enumerate(tables, start=1):
            assert table.shape == (tree.n_nodes(level), 8)

    def test_same_seed_identical(self):
        tree = build_ontology(CODES)
        a = init_level_tables(tree, d_c=8, seed=3)
        b = init_level_tables(tree, d_c=8, seed=3)
        assert all(torch.equal(x, y) for x, y in zip(a, b))

    def test_initializer_mean_within_3_sigma(self):
        # uniform on [-1/sqrt(d), 1/sqrt(d)]: mean 0, var bound^2/3
        codes = [f"{100 + i // 8}.{i % 8}" for i in range(200)]
        tree = build_ontology(codes)
        d_c = 5
        tables = init_level_tables(tree, d_c=d_c, seed=1)
        values = torch.cat([t.reshape(-1) for t in tables])
        # tables are deduplicated per level: root + 25 categories + 200 leaves twice
        assert values.numel() == sum(tree.n_nodes(level) for level in range(1, tree.n_levels + 1)) * d_c
        assert values.numel() >= 2000  # enough draws for the 3-sigma bound to bite
        bound = 1.0 / math.sqrt(d_c)
        assert values.abs().max() <= bound
        sigma = bound / math.sqrt(3 * values.numel())
        assert abs(float(values.mean())) < 3 * sigma


class TestConcatenation:
    def test_single_level_equals_table_row(self):
        tree = build_ontology(CODES, n_levels=1)
        tables = init_level_tables(tree, d_c=6, seed=0)
        for i in range(len(CODES)):
            expected = tables[0][tree.ancestor_rows[i][0]]
            assert torch.equal(ontology_embedding(tables, tree, i), expected)

    def test_sibling_prefix_sharing(self):
        tree = build_ontology(CODES)
        tables = init_level_tables(tree, d_c=4, seed=2)
        i = CODES.index("518.81")
        j = CODES.index("518.83")
        a = ontology_embedding(tables, tree, i)
        b = ontology_embedding(tables, tree, j)
        assert torch.equal(a[: 3 * 4], b[: 3 * 4])  # shared ancestors to level 3
        assert not torch.equal(a[3 * 4 :], b[3 * 4 :])

    def test_hand_built_two_level_oracle(self):
        tree = build_ontology(["486", "487.0"], n_levels=2)
        tables = init_level_tables(tree, d_c=2, seed=0)
        tables[0] = torch.tensor([[1.0, 2.0]], dtype=torch.float64)  # one shared chapter
        tables[1] = torch.tensor([[3.0, 4.0], [5.0, 6.0]], dtype=torch.float64)
        emb = ontology_embedding(tables, tree, 0)
        row = tree.ancestor_rows[0][1]
        expected = [1.0, 2.0] + ([3.0, 4.0] if row == 0 else [5.0, 6.0])
        np.testing.assert_array_equal(emb.numpy(), expected)


class TestModule:
    def test_full_table_rows_match_per_code_concat(self):
        tree = build_ontology(CODES)
        module = HierarchicalCodeEmbedding(tree, d_c=4, seed=5)
        tables = [p.detach() for p in module.tables]
        full = module.full_table()
        assert full.shape == (len(CODES), 4 * 4)
        for i in range(len(CODES)):
            assert torch.equal(full[i], ontology_embedding(tables, tree, i))

    def test_gradients_confined_to_ancestor_rows(self):
        tree = build_ontology(CODES)
        module = HierarchicalCodeEmbedding(tree, d_c=3, seed=5)
        i = CODES.index("486")
        loss = module.full_table()[i].sum()
        loss.backward()
        for level in range(4):
            grad = module.tables[level].grad
            touched = {int(r) for r in grad.abs().sum(dim=1).nonzero().reshape(-1)}
            assert touched == {tree.ancestor_rows[i][level]}
