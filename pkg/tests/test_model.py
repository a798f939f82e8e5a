from datetime import datetime

import numpy as np
import pytest
import torch

from hyperphen.common import DTYPE
from hyperphen.data import PatientRecord, Visit
from hyperphen.model import (
    ForwardOutput,
    ModelConfig,
    PhenotypeAttention,
    PhenotypeEncoder,
    PhenotypeModel,
    PredictionHead,
    ReconstructionDecoder,
    attend_phenotypes,
    encode_phenotype,
    load_checkpoint,
    predict,
    reconstruct,
    save_checkpoint,
)
from hyperphen.ontology import build_ontology

VOCAB = ("250.00", "401.9", "428.0", "486", "518.81", "599.0")


def small_config(**overrides):
    base = dict(
        d_c=2,
        n_levels=4,
        unigin_dims=(8, 6),
        n_phenotypes=2,
        n_sim_heads=2,
        aug_ratio=0.2,
        d_hid=5,
        n_attn_heads=2,
        tau=1.0,
    )
    base.update(overrides)
    return ModelConfig(**base)


def make_record(visit_codes, patient_id="p0"):
    visits = tuple(
        Visit(codes=frozenset(codes), timestamp=datetime(2020, 1, 1 + t))
        for t, codes in enumerate(visit_codes)
    )
    return PatientRecord(patient_id=patient_id, visits=visits)


def build_model(seed=0, **overrides):
    tree = build_ontology(VOCAB, n_levels=4)
    return PhenotypeModel(small_config(**overrides), tree, seed=seed)


RECORD = make_record([{0, 3}, {1, 4}, {2, 4, 5}, {0, 2}])


class TestModelConfig:
    def test_round_trip(self):
        config = small_config(d_query=3)
        assert ModelConfig.from_dict(config.to_dict()) == config

    def test_query_value_defaults(self):
        config = small_config()  # d_hid=5, 2 heads
        assert config.query_dim == 2
        assert config.value_dim == 2
        assert small_config(d_query=7).query_dim == 7

    def test_validation(self):
        with pytest.raises(ValueError, match="positive"):
            small_config(tau=0.0)
        with pytest.raises(ValueError, match="dimensions"):
            small_config(d_hid=0)
        with pytest.raises(ValueError, match="layer"):
            small_config(unigin_dims=())


class TestPhenotypeEncoder:
    def test_single_visit_embedding_is_first_hidden_state(self):
        encoder = PhenotypeEncoder(in_dim=3, d_hid=4, seed=0)
        masks = torch.tensor([[[1.0], [0.0], [1.0]]], dtype=DTYPE)  # 1 x 3 codes x 1 visit
        table = torch.randn(3, 3, dtype=DTYPE, generator=torch.Generator().manual_seed(0))
        out = encoder(masks, table)
        hidden, _ = encoder.gru(masks.transpose(1, 2) @ table)
        # softmax over one step is 1, so the embedding is exactly h_1
        assert torch.equal(out, hidden[:, 0, :])

    def test_member_codes_are_summed_not_averaged(self):
        encoder = PhenotypeEncoder(in_dim=2, d_hid=3, seed=1)
        table = torch.tensor([[1.0, 2.0], [0.5, -1.0]], dtype=DTYPE)
        both = torch.tensor([[1.0], [1.0]], dtype=DTYPE)  # codes 0 and 1 in the visit
        merged_table = torch.tensor([[1.5, 1.0], [9.0, 9.0]], dtype=DTYPE)  # row0 = sum
        only_first = torch.tensor([[1.0], [0.0]], dtype=DTYPE)
        out_both = encode_phenotype(encoder, both, table)
        out_merged = encode_phenotype(encoder, only_first, merged_table)
        assert torch.allclose(out_both, out_merged)

    def test_hand_unrolled_gru_oracle(self):
        encoder = PhenotypeEncoder(in_dim=2, d_hid=3, seed=2)
        gru = encoder.gru
        seq = torch.randn(1, 4, 2, dtype=DTYPE, generator=torch.Generator().manual_seed(1))
        expected, _ = gru(seq)

        w_ih = gru.weight_ih_l0.detach()  # rows [reset; update; candidate]
        w_hh = gru.weight_hh_l0.detach()
        b_ih = gru.bias_ih_l0.detach()
        b_hh = gru.bias_hh_l0.detach()
        h = torch.zeros(3, dtype=DTYPE)
        for t in range(4):
            x = seq[0, t]
            gi = w_ih @ x + b_ih
            gh = w_hh @ h + b_hh
            i_r, i_z, i_n = gi.chunk(3)
            h_r, h_z, h_n = gh.chunk(3)
            r = torch.sigmoid(i_r + h_r)
            z = torch.sigmoid(i_z + h_z)
            n = torch.tanh(i_n + r * h_n)
            h = (1 - z) * n + z * h
            np.testing.assert_allclose(
                expected[0, t].detach().numpy(), h.numpy(), atol=1e-12
            )

    def test_zeroed_scorer_means_uniform_attention(self):
        encoder = PhenotypeEncoder(in_dim=2, d_hid=3, seed=3)
        with torch.no_grad():
            encoder.score_hidden.weight.zero_()
            encoder.score_hidden.bias.zero_()
            encoder.score_out.weight.zero_()
            encoder.score_out.bias.zero_()
        masks = torch.rand(2, 4, 5, dtype=DTYPE, generator=torch.Generator().manual_seed(2))
        table = torch.randn(4, 2, dtype=DTYPE, generator=torch.Generator().manual_seed(3))
        out = encoder(masks, table)
        hidden, _ = encoder.gru(masks.transpose(1, 2) @ table)
        assert torch.allclose(out, hidden.mean(dim=1))


class TestPhenotypeAttention:
    def test_single_phenotype_gets_weight_one(self):
        attention = PhenotypeAttention(d_hid=4, n_heads=2, d_query=2, d_value=2, seed=0)
        embs = torch.randn(1, 4, dtype=DTYPE, generator=torch.Generator().manual_seed(0))
        alpha = attend_phenotypes(attention, embs)
        np.testing.assert_array_equal(alpha.detach().numpy(), [1.0])

    def test_identical_rows_share_weight_uniformly(self):
        attention = PhenotypeAttention(d_hid=4, n_heads=2, d_query=2, d_value=2, seed=1)
        row = torch.randn(4, dtype=DTYPE, generator=torch.Generator().manual_seed(1))
        alpha = attend_phenotypes(attention, row.expand(5, 4))
        np.testing.assert_allclose(alpha.detach().numpy(), np.full(5, 0.2), atol=1e-12)

    def test_sums_to_one_and_positive(self):
        attention = PhenotypeAttention(d_hid=6, n_heads=3, d_query=2, d_value=2, seed=2)
        embs = torch.randn(4, 6, dtype=DTYPE, generator=torch.Generator().manual_seed(2))
        alpha = attend_phenotypes(attention, embs).detach()
        np.testing.assert_allclose(float(alpha.sum()), 1.0, atol=1e-12)
        assert torch.all(alpha > 0)

    def test_numpy_oracle(self):
        def softmax(x, axis):
            e = np.exp(x - x.max(axis=axis, keepdims=True))
            return e / e.sum(axis=axis, keepdims=True)

        rng = np.random.default_rng(0)
        n_heads, d_hid, d_q, d_v, k = 2, 3, 2, 2, 4
        wq = rng.normal(size=(n_heads, d_hid, d_q))
        wk = rng.normal(size=(n_heads, d_hid, d_q))
        wv = rng.normal(size=(n_heads, d_hid, d_v))
        w_out = rng.normal(size=n_heads * d_v)
        embs = rng.normal(size=(k, d_hid))

        per_head = []
        for h in range(n_heads):
            q, key, val = embs @ wq[h], embs @ wk[h], embs @ wv[h]
            attn = softmax(q @ key.T / np.sqrt(d_q), axis=-1)
            per_head.append(attn @ val)
        concat = np.concatenate(per_head, axis=1)
        expected = softmax(concat @ w_out, axis=0)

        attention = PhenotypeAttention(d_hid, n_heads, d_q, d_v, seed=0)
        with torch.no_grad():
            attention.proj_query.copy_(torch.tensor(wq))
            attention.proj_key.copy_(torch.tensor(wk))
            attention.proj_value.copy_(torch.tensor(wv))
            attention.out.copy_(torch.tensor(w_out))
        alpha = attention(torch.tensor(embs)).detach().numpy()
        np.testing.assert_allclose(alpha, expected, atol=1e-12)


class TestPredictionHead:
    def test_one_hot_weights_select_a_phenotype(self):
        head = PredictionHead(d_hid=3, n_codes=5, seed=0)
        embs = torch.randn(4, 3, dtype=DTYPE, generator=torch.Generator().manual_seed(0))
        alpha = torch.tensor([0.0, 0.0, 1.0, 0.0], dtype=DTYPE)
        out = predict(head, embs, alpha)
        expected = torch.softmax(head.linear(embs[2]), dim=0)
        assert torch.allclose(out, expected)

    def test_mixture_sums_to_one(self):
        head = PredictionHead(d_hid=3, n_codes=7, seed=1)
        embs = torch.randn(3, 3, dtype=DTYPE, generator=torch.Generator().manual_seed(1))
        alpha = torch.softmax(torch.randn(3, dtype=DTYPE, generator=torch.Generator().manual_seed(2)), dim=0)
        out = predict(head, embs, alpha).detach()
        np.testing.assert_allclose(float(out.sum()), 1.0, atol=1e-12)
        assert torch.all(out > 0)


class TestReconstructionDecoder:
    def test_shape_and_range(self):
        decoder = ReconstructionDecoder(in_dim=6, d_hid=4, n_codes=5, seed=0)
        summary = torch.randn(6, dtype=DTYPE, generator=torch.Generator().manual_seed(0))
        out = reconstruct(decoder, summary, n_visits=3).detach()
        assert out.shape == (5, 3)
        assert torch.all((out > 0) & (out < 1))

    def test_first_visit_column_independent_of_horizon(self):
        decoder = ReconstructionDecoder(in_dim=6, d_hid=4, n_codes=5, seed=1)
        summary = torch.randn(6, dtype=DTYPE, generator=torch.Generator().manual_seed(1))
        short = reconstruct(decoder, summary, n_visits=1).detach()
        long = reconstruct(decoder, summary, n_visits=4).detach()
        assert torch.allclose(short[:, 0], long[:, 0])


class TestPhenotypeModel:
    def test_forward_shapes(self):
        model = build_model()
        out = model(RECORD)
        assert isinstance(out, ForwardOutput)
        n_codes, t_in = len(VOCAB), len(RECORD.visits) - 1
        assert out.y_hat.shape == (n_codes,)
        assert out.alpha.shape == (2,)
        assert out.p_hat.shape == (n_codes, t_in)
        assert out.phenotypes.masks.shape == (2, n_codes, t_in)
        np.testing.assert_allclose(float(out.y_hat.detach().sum()), 1.0, atol=1e-12)
        np.testing.assert_allclose(float(out.alpha.detach().sum()), 1.0, atol=1e-12)

    def test_serving_uses_every_visit(self):
        model = build_model()
        out = model(RECORD, use_all_visits=True)
        assert out.p_hat.shape[1] == len(RECORD.visits)
        assert out.phenotypes.masks.shape[2] == len(RECORD.visits)

    def test_prediction_is_a_pure_function_of_the_masks(self):
        # the bottleneck: recomputing downstream from the extracted masks
        # reproduces the forward prediction bit for bit
        model = build_model()
        out = model(RECORD, mode="deterministic")
        y_hat, alpha, embs = model.predict_from_phenotypes(
            out.phenotypes.masks, out.code_table
        )
        assert torch.equal(y_hat, out.y_hat)
        assert torch.equal(alpha, out.alpha)
        assert torch.equal(embs, out.phenotype_embs)

    def test_editing_one_phenotype_leaves_others_untouched(self):
        model = build_model()
        out = model(RECORD, mode="deterministic")
        edited = out.phenotypes.masks.detach().clone()
        edited[1, 0, 0] = 1.0 - edited[1, 0, 0]
        _, _, embs = model.predict_from_phenotypes(edited, out.code_table)
        assert torch.equal(embs[0], out.phenotype_embs[0].detach())
        assert not torch.equal(embs[1], out.phenotype_embs[1].detach())

    def test_deterministic_mode_is_stable(self):
        model = build_model()
        a = model(RECORD, mode="deterministic")
        b = model(RECORD, mode="deterministic")
        assert torch.equal(a.y_hat, b.y_hat)
        assert torch.equal(a.phenotypes.masks, b.phenotypes.masks)

    def test_sample_mode_reproducible_per_seed(self):
        model = build_model()
        a = model(RECORD, mode="sample", seed=11)
        b = model(RECORD, mode="sample", seed=11)
        c = model(RECORD, mode="sample", seed=12)
        assert torch.equal(a.phenotypes.masks.detach(), b.phenotypes.masks.detach())
        assert not torch.equal(a.phenotypes.masks.detach(), c.phenotypes.masks.detach())

    def test_mask_shape_validation(self):
        model = build_model()
        out = model(RECORD)
        table = out.code_table
        with pytest.raises(ValueError, match="masks"):
            model.predict_from_phenotypes(torch.zeros(5, len(VOCAB), 3, dtype=DTYPE), table)
        with pytest.raises(ValueError, match="vocabulary"):
            model.predict_from_phenotypes(torch.zeros(2, 99, 3, dtype=DTYPE), table)

    def test_ontology_level_mismatch_rejected(self):
        tree = build_ontology(VOCAB, n_levels=3)
        with pytest.raises(ValueError, match="levels"):
            PhenotypeModel(small_config(), tree, seed=0)

    def test_checksum_tracks_parameters(self):
        model = build_model(seed=0)
        same = build_model(seed=0)
        other = build_model(seed=1)
        assert model.parameter_checksum() == same.parameter_checksum()
        assert model.parameter_checksum() != other.parameter_checksum()
        with torch.no_grad():
            model.head.linear.bias += 0.1
        assert model.parameter_checksum() != same.parameter_checksum()


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = build_model(seed=4)
        before = model(RECORD, mode="deterministic")
        save_checkpoint(model, tmp_path / "ckpt", seeds=(4,), vocabulary=VOCAB)
        restored, manifest = load_checkpoint(tmp_path / "ckpt")
        assert restored.parameter_checksum() == model.parameter_checksum()
        assert manifest["seeds"] == [4]
        assert manifest["K"] == 2
        assert manifest["Z"] == 2
        assert manifest["n_codes"] == len(VOCAB)
        after = restored(RECORD, mode="deterministic")
        assert torch.equal(after.y_hat, before.y_hat)
        assert torch.equal(after.phenotypes.masks, before.phenotypes.masks)

    def test_manifest_is_self_contained(self, tmp_path):
        # reload needs only the checkpoint directory, not the dataset
        model = build_model(seed=5)
        save_checkpoint(model, tmp_path / "ckpt", vocabulary=VOCAB)
        restored, manifest = load_checkpoint(tmp_path / "ckpt")
        assert tuple(manifest["vocabulary"]) == VOCAB
        assert restored.n_codes == len(VOCAB)

    def test_unknown_format_version_rejected(self, tmp_path):
        model = build_model()
        save_checkpoint(model, tmp_path / "ckpt", vocabulary=VOCAB)
        manifest_path = tmp_path / "ckpt" / "manifest.json"
        raw = manifest_path.read_text().replace('"format_version":1', '"format_version":9')
        manifest_path.write_text(raw)
        with pytest.raises(ValueError, match="format"):
            load_checkpoint(tmp_path / "ckpt")
