"""The self-explaining sequential diagnosis predictor.

Pipeline per patient: hierarchical code embeddings → per-patient message
passing → false-negative augmentation → extraction of K temporal phenotypes →
(bottleneck) → GRU + location attention per phenotype → self-attention over
phenotypes → weighted-sum next-visit prediction, plus a decoder that
reconstructs the original incidence matrix from the phenotype embeddings.

Everything after the bottleneck consumes only the phenotype masks, so edits to
the masks propagate to the prediction through exactly the code path used by
``forward`` — ``predict_from_phenotypes`` on the model's own extraction is
bitwise identical to the forward pass.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn

from .augmentation import AugmentedHypergraph, SimilarityHeads, similarity_scores, supplement
from .common import DTYPE, canonical_json, make_generator
from .data import PatientRecord
from .embedding import HierarchicalCodeEmbedding
from .extraction import Mode, PhenotypeExtractorBank, PhenotypeSet
from .hypergraph import PatientHypergraph, UniGINStack, build_incidence, visit_aggregate
from .ontology import OntologyTree, build_ontology

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    d_c: int = 8
    n_levels: int = 4
    unigin_dims: tuple[int, ...] = (32, 32)
    n_phenotypes: int = 5
    n_sim_heads: int = 4
    aug_ratio: float = 0.1
    d_hid: int = 32
    n_attn_heads: int = 4
    d_query: int | None = None
    d_value: int | None = None
    tau: float = 1.0

    def __post_init__(self) -> None:
        if min(self.d_c, self.n_levels, self.d_hid, self.n_attn_heads, self.n_phenotypes) < 1:
            raise ValueError("model dimensions must be positive")
        if len(self.unigin_dims) < 1:
            raise ValueError("need at least one message-passing layer")
        if self.tau <= 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")

    @property
    def query_dim(self) -> int:
        return self.d_query if self.d_query is not None else max(self.d_hid // self.n_attn_heads, 1)

    @property
    def value_dim(self) -> int:
        return self.d_value if self.d_value is not None else max(self.d_hid // self.n_attn_heads, 1)

    @property
    def n_message_layers(self) -> int:
        return len(self.unigin_dims)

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["unigin_dims"] = list(self.unigin_dims)
        return raw

    @staticmethod
    def from_dict(raw: dict) -> "ModelConfig":
        raw = dict(raw)
        if "unigin_dims" in raw:
            raw["unigin_dims"] = tuple(raw["unigin_dims"])
        return ModelConfig(**raw)


def _seeded_uniform_(module: nn.Module, seed: int, bound: float) -> None:
    gen = make_generator(seed, "init")
    for param in module.parameters():
        param.data.uniform_(-bound, bound, generator=gen)


class PhenotypeEncoder(nn.Module):
    """Shared GRU + location attention turning one phenotype into one vector.

    A phenotype's visit sequence is ``mask.T @ code_table`` (sum over member
    codes — deliberately not the mean used during message passing).  The GRU
    runs over the T steps; a per-step MLP scores each hidden state, and the
    softmax-weighted sum of hidden states is the phenotype embedding.
    """

    def __init__(self, in_dim: int, d_hid: int, seed: int) -> None:
        super().__init__()
        self.gru = nn.GRU(in_dim, d_hid, batch_first=True, dtype=DTYPE)
        self.score_hidden = nn.Linear(d_hid, d_hid, dtype=DTYPE)
        self.score_out = nn.Linear(d_hid, 1, dtype=DTYPE)
        _seeded_uniform_(self, seed, 1.0 / d_hid**0.5)

    def forward(self, masks: torch.Tensor, code_table: torch.Tensor) -> torch.Tensor:
        """masks: K x |C| x T; code_table: |C| x d.  Returns K x d_hid."""
        sequences = masks.transpose(1, 2) @ code_table  # K x T x d
        hidden, _ = self.gru(sequences)  # K x T x d_hid
        scores = self.score_out(torch.tanh(self.score_hidden(hidden)))  # K x T x 1
        weights = torch.softmax(scores, dim=1)
        return (weights * hidden).sum(dim=1)


def encode_phenotype(
    encoder: PhenotypeEncoder, mask: torch.Tensor, code_table: torch.Tensor
) -> torch.Tensor:
    """Single-phenotype convenience wrapper; mask is |C| x T."""
    return encoder(mask.unsqueeze(0), code_table).squeeze(0)


class PhenotypeAttention(nn.Module):
    """Multi-head self-attention over the K phenotype embeddings → weights α."""

    def __init__(self, d_hid: int, n_heads: int, d_query: int, d_value: int, seed: int) -> None:
        super().__init__()
        self.n_heads = n_heads
        self.d_query = d_query
        self.proj_query = nn.Parameter(torch.empty(n_heads, d_hid, d_query, dtype=DTYPE))
        self.proj_key = nn.Parameter(torch.empty(n_heads, d_hid, d_query, dtype=DTYPE))
        self.proj_value = nn.Parameter(torch.empty(n_heads, d_hid, d_value, dtype=DTYPE))
        self.out = nn.Parameter(torch.empty(n_heads * d_value, dtype=DTYPE))
        _seeded_uniform_(self, seed, 1.0 / d_hid**0.5)

    def forward(self, phenotype_embs: torch.Tensor) -> torch.Tensor:
        """phenotype_embs: K x d_hid.  Returns α of shape K summing to 1."""
        u = phenotype_embs.unsqueeze(0)  # 1 x K x d_hid
        queries = u @ self.proj_query  # n_h x K x d_q
        keys = u @ self.proj_key
        values = u @ self.proj_value  # n_h x K x d_v
        attn = torch.softmax(queries @ keys.transpose(1, 2) / self.d_query**0.5, dim=-1)
        heads = attn @ values  # n_h x K x d_v
        concat = heads.permute(1, 0, 2).reshape(phenotype_embs.shape[0], -1)
        return torch.softmax(concat @ self.out, dim=0)


def attend_phenotypes(attention: PhenotypeAttention, phenotype_embs: torch.Tensor) -> torch.Tensor:
    return attention(phenotype_embs)


class PredictionHead(nn.Module):
    """Per-phenotype softmax over the vocabulary, mixed by the weights α."""

    def __init__(self, d_hid: int, n_codes: int, seed: int) -> None:
        super().__init__()
        self.linear = nn.Linear(d_hid, n_codes, dtype=DTYPE)
        _seeded_uniform_(self, seed, 1.0 / d_hid**0.5)

    def forward(self, phenotype_embs: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
        per_phenotype = torch.softmax(self.linear(phenotype_embs), dim=1)  # K x |C|
        return alpha @ per_phenotype


def predict(head: PredictionHead, phenotype_embs: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    return head(phenotype_embs, alpha)


class ReconstructionDecoder(nn.Module):
    """GRU fed the concatenated phenotype embeddings at every one of T steps.

    Emits a probability per (code, visit) cell; trained to reproduce the
    patient's original (pre-augmentation) incidence matrix.
    """

    def __init__(self, in_dim: int, d_hid: int, n_codes: int, seed: int) -> None:
        super().__init__()
        self.gru = nn.GRU(in_dim, d_hid, batch_first=True, dtype=DTYPE)
        self.out = nn.Linear(d_hid, n_codes, dtype=DTYPE)
        _seeded_uniform_(self, seed, 1.0 / d_hid**0.5)

    def forward(self, summary: torch.Tensor, n_visits: int) -> torch.Tensor:
        """summary: flat K*d_hid vector.  Returns |C| x T of probabilities."""
        steps = summary.reshape(1, 1, -1).expand(1, n_visits, -1)
        hidden, _ = self.gru(steps)
        return torch.sigmoid(self.out(hidden)).squeeze(0).t()


def reconstruct(decoder: ReconstructionDecoder, summary: torch.Tensor, n_visits: int) -> torch.Tensor:
    return decoder(summary, n_visits)


@dataclass(frozen=True)
class ForwardOutput:
    y_hat: torch.Tensor  # |C| scores summing to 1
    phenotypes: PhenotypeSet
    alpha: torch.Tensor  # K weights summing to 1
    p_hat: torch.Tensor  # |C| x T reconstruction probabilities
    augmented: AugmentedHypergraph
    graph: PatientHypergraph = field(repr=False)
    code_table: torch.Tensor = field(repr=False)  # personalized |C| x d
    phenotype_embs: torch.Tensor = field(repr=False)  # K x d_hid


class PhenotypeModel(nn.Module):
    def __init__(self, config: ModelConfig, tree: OntologyTree, seed: int = 0) -> None:
        super().__init__()
        if tree.n_levels != config.n_levels:
            raise ValueError(
                f"ontology has {tree.n_levels} levels but the model expects {config.n_levels}"
            )
        self.config = config
        self.tree = tree
        self.n_codes = len(tree.ancestor_rows)
        self.embedding = HierarchicalCodeEmbedding(tree, config.d_c, seed=seed * 7 + 1)
        dims = (config.n_levels * config.d_c,) + config.unigin_dims
        self.message_passing = UniGINStack(dims, seed=seed * 7 + 2)
        d_msg = config.unigin_dims[-1]
        self.sim_heads = SimilarityHeads(config.n_sim_heads, d_msg)
        self.extractors = PhenotypeExtractorBank(config.n_phenotypes, d_msg, seed=seed * 7 + 3)
        self.encoder = PhenotypeEncoder(d_msg, config.d_hid, seed=seed * 7 + 4)
        self.attention = PhenotypeAttention(
            config.d_hid, config.n_attn_heads, config.query_dim, config.value_dim, seed=seed * 7 + 5
        )
        self.head = PredictionHead(config.d_hid, self.n_codes, seed=seed * 7 + 6)
        self.decoder = ReconstructionDecoder(
            config.n_phenotypes * config.d_hid, config.d_hid, self.n_codes, seed=seed * 7 + 7
        )

    def personalize(self, graph: PatientHypergraph) -> torch.Tensor:
        """Patient-specific code table after message passing over the record."""
        return self.message_passing(graph, self.embedding.full_table())

    def forward(
        self,
        record: PatientRecord,
        mode: Mode = "deterministic",
        seed: int = 0,
        use_all_visits: bool = False,
    ) -> ForwardOutput:
        graph = build_incidence(record, self.n_codes, use_all_visits=use_all_visits)
        code_table = self.personalize(graph)
        visit_table = visit_aggregate(graph, code_table)
        scores = similarity_scores(self.sim_heads, code_table, visit_table, graph)
        augmented = supplement(scores, graph, self.config.aug_ratio)
        combined = augmented.combined_graph()
        combined_visits = visit_aggregate(combined, code_table)
        phenotypes = self.extractors.extract(
            code_table,
            combined_visits,
            combined,
            self.config.tau,
            mode,
            seed,
            record.patient_id,
        )
        y_hat, alpha, phenotype_embs = self.predict_from_phenotypes(phenotypes.masks, code_table)
        p_hat = self.decoder(phenotype_embs.reshape(-1), graph.visit_count)
        return ForwardOutput(
            y_hat=y_hat,
            phenotypes=phenotypes,
            alpha=alpha,
            p_hat=p_hat,
            augmented=augmented,
            graph=graph,
            code_table=code_table,
            phenotype_embs=phenotype_embs,
        )

    def predict_from_phenotypes(
        self, masks: torch.Tensor, code_table: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Bottleneck-downstream half: masks (K x |C| x T) → (ŷ, α, U).

        The masks need not be subsets of the model's own extraction — edited
        sets, including cells the model never saw, are legal inputs.
        """
        if masks.dim() != 3 or masks.shape[0] != self.config.n_phenotypes:
            raise ValueError(
                f"expected {self.config.n_phenotypes} x |C| x T masks, got {tuple(masks.shape)}"
            )
        if masks.shape[1] != self.n_codes or code_table.shape[0] != self.n_codes:
            raise ValueError(
                f"vocabulary mismatch: masks {masks.shape[1]}, table {code_table.shape[0]}, "
                f"model {self.n_codes}"
            )
        phenotype_embs = self.encoder(masks, code_table)
        alpha = self.attention(phenotype_embs)
        y_hat = self.head(phenotype_embs, alpha)
        return y_hat, alpha, phenotype_embs

    def parameter_checksum(self) -> str:
        digest = hashlib.sha256()
        for name, param in sorted(self.named_parameters()):
            digest.update(name.encode())
            digest.update(param.detach().cpu().numpy().tobytes())
        return digest.hexdigest()


def save_checkpoint(
    model: PhenotypeModel,
    path: str | Path,
    seeds: tuple[int, ...] = (),
    vocabulary: tuple[str, ...] = (),
) -> None:
    """Named-tensor archive plus a JSON manifest describing how to rebuild."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), path / "weights.pt")
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "dims": model.config.to_dict(),
        "K": model.config.n_phenotypes,
        "Z": model.config.n_message_layers,
        "seeds": list(seeds),
        "n_codes": model.n_codes,
        "vocabulary": list(vocabulary),
    }
    (path / "manifest.json").write_text(canonical_json(manifest) + "\n")


def load_checkpoint(path: str | Path) -> tuple[PhenotypeModel, dict]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
    config = ModelConfig.from_dict(manifest["dims"])
    tree = build_ontology(manifest["vocabulary"], config.n_levels)
    model = PhenotypeModel(config, tree)
    state = torch.load(path / "weights.pt", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model, manifest
