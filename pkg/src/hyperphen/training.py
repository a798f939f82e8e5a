"""Training loop, evaluation harness, frequency baseline, and the
masking-robustness experiment."""

from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .common import DTYPE, canonical_json, derive_seed
from .data import Dataset, PatientRecord, mask_diagnoses
from .losses import LossWeights, loss_alpha, loss_distinct, loss_fidelity, loss_pred, total_loss
from .metrics import (
    EvalReport,
    FaithfulnessResult,
    faithfulness_from_pairs,
    ndcg_at_k,
    phenotype_complexity,
    phenotype_distinctness,
    recall_at_k,
)
from .model import ModelConfig, PhenotypeModel

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the path of the diagnostic dump."""

    def __init__(self, message: str, dump_path: Path | None = None) -> None:
        super().__init__(message)
        self.dump_path = dump_path


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 3e-3  # tuned on the synthetic validation split
    epochs: int = 30
    patience: int = 10
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self) -> None:
        if min(self.batch_size, self.epochs, self.patience) < 1 or self.learning_rate <= 0:
            raise ValueError("batch size, epochs, patience, and learning rate must be positive")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "patience": self.patience,
            "seeds": list(self.seeds),
            "weights": {
                "fidelity": self.weights.fidelity,
                "distinct": self.weights.distinct,
                "alpha": self.weights.alpha,
            },
            "model": self.model.to_dict(),
        }

    @staticmethod
    def from_dict(raw: dict) -> "TrainConfig":
        raw = dict(raw)
        if "seeds" in raw:
            raw["seeds"] = tuple(raw["seeds"])
        if "weights" in raw:
            raw["weights"] = LossWeights(**raw["weights"])
        if "model" in raw:
            raw["model"] = ModelConfig.from_dict(raw["model"])
        return TrainConfig(**raw)

    @staticmethod
    def load(path: str | Path) -> "TrainConfig":
        with Path(path).open() as handle:
            return TrainConfig.from_dict(json.load(handle))


def label_vector(record: PatientRecord, n_codes: int) -> torch.Tensor:
    """Multi-hot of the final (label) visit."""
    target = torch.zeros(n_codes, dtype=DTYPE)
    target[sorted(record.label_visit.codes)] = 1.0
    return target


def _dump_divergence(
    dump_dir: Path, epoch: int, batch_index: int, patient_ids: list[str], losses: dict
) -> Path:
    dump_dir.mkdir(parents=True, exist_ok=True)
    path = dump_dir / f"divergence_epoch{epoch}_batch{batch_index}.json"
    path.write_text(
        json.dumps(
            {
                "epoch": epoch,
                "batch": batch_index,
                "patient_ids": patient_ids,
                "losses": {k: (v if np.isfinite(v) else str(v)) for k, v in losses.items()},
            },
            indent=2,
            sort_keys=True,
        )
    )
    return path


def train_single(
    train_ds: Dataset,
    val_ds: Dataset,
    config: TrainConfig,
    seed: int,
    dump_dir: str | Path = "divergence",
) -> tuple[PhenotypeModel, list[dict]]:
    """Train one model; returns it restored to its best-validation state.

    Minimizes the weighted objective by mini-batch Adam, checkpointing on
    validation Recall@20 with early stopping.  A non-finite loss aborts with a
    JSON dump of the offending batch.  Deterministic for a fixed seed.
    """
    model = PhenotypeModel(config.model, train_ds.ontology, seed=seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    records = train_ds.records
    labels = [label_vector(r, train_ds.n_codes) for r in records]

    history: list[dict] = []
    best_state = copy.deepcopy(model.state_dict())
    best_recall = -1.0
    best_epoch = -1
    for epoch in range(config.epochs):
        model.train()
        order = np.random.default_rng(derive_seed(seed, "order", epoch)).permutation(len(records))
        epoch_seed = derive_seed(seed, "gumbel", epoch)
        for batch_index, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start : start + config.batch_size]
            outputs = [records[int(i)] for i in batch]
            forwards = [model(rec, mode="sample", seed=epoch_seed) for rec in outputs]
            y_hat = torch.stack([f.y_hat for f in forwards])
            y_true = torch.stack([labels[int(i)] for i in batch])
            pred = loss_pred(y_hat, y_true)
            fidelity = loss_fidelity(
                [f.p_hat for f in forwards], [f.graph.dense() for f in forwards]
            )
            distinct = loss_distinct([f.phenotypes.masks for f in forwards])
            alpha = loss_alpha(torch.stack([f.alpha for f in forwards]))
            total, report = total_loss(pred, fidelity, distinct, alpha, config.weights)
            if not torch.isfinite(total):
                path = _dump_divergence(
                    Path(dump_dir), epoch, batch_index,
                    [r.patient_id for r in outputs], report.to_dict(),
                )
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {batch_index}; dump at {path}",
                    dump_path=path,
                )
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            history.append({"epoch": epoch, "batch": batch_index, **report.to_dict()})

        val_recall = mean_recall(model, val_ds, k=20)
        history.append({"epoch": epoch, "val_recall@20": val_recall})
        if val_recall > best_recall:
            best_recall = val_recall
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        elif epoch - best_epoch >= config.patience:
            logger.info("early stop at epoch %d (best %.4f at epoch %d)", epoch, best_recall, best_epoch)
            break

    model.load_state_dict(best_state)
    model.eval()
    return model, history


def train(
    train_ds: Dataset,
    val_ds: Dataset,
    config: TrainConfig,
    out_dir: str | Path | None = None,
) -> list[tuple[int, PhenotypeModel, list[dict]]]:
    """Train one model per configured seed; optionally persist checkpoints."""
    from .model import save_checkpoint

    runs = []
    vocabulary = tuple(entry.code for entry in train_ds.vocabulary)
    for seed in config.seeds:
        model, history = train_single(train_ds, val_ds, config, seed)
        if out_dir is not None:
            seed_dir = Path(out_dir) / f"seed-{seed}"
            save_checkpoint(model, seed_dir, seeds=(seed,), vocabulary=vocabulary)
            with (seed_dir / "training_log.jsonl").open("w") as handle:
                for entry in history:
                    handle.write(canonical_json(entry) + "\n")
        runs.append((seed, model, history))
    return runs


def patient_scores(model: PhenotypeModel, record: PatientRecord) -> np.ndarray:
    with torch.no_grad():
        out = model(record, mode="deterministic")
    return out.y_hat.numpy()


def mean_recall(model: PhenotypeModel, ds: Dataset, k: int = 20) -> float:
    values = []
    for record in ds.records:
        positives = set(record.label_visit.codes)
        if not positives:
            continue
        values.append(recall_at_k(patient_scores(model, record), positives, k))
    return float(np.mean(values)) if values else 0.0


def faithfulness(model: PhenotypeModel, ds: Dataset) -> FaithfulnessResult:
    """Correlation between phenotype weights and the prediction's sensitivity
    to removing each phenotype (L1 distance between before/after scores)."""
    weights_all, changes_all = [], []
    with torch.no_grad():
        for record in ds.records:
            out = model(record, mode="deterministic")
            masks = out.phenotypes.hard()
            changes = []
            for k in range(masks.shape[0]):
                ablated = masks.clone()
                ablated[k] = 0.0
                y_without, _, _ = model.predict_from_phenotypes(ablated, out.code_table)
                changes.append(float((out.y_hat - y_without).abs().sum()))
            weights_all.append([float(a) for a in out.alpha])
            changes_all.append(changes)
    return faithfulness_from_pairs(weights_all, changes_all)


def evaluate(model: PhenotypeModel, ds: Dataset, ks: tuple[int, int] = (10, 20)) -> EvalReport:
    recalls: dict[int, list[float]] = {k: [] for k in ks}
    ndcgs: dict[int, list[float]] = {k: [] for k in ks}
    mask_sets = []
    n_no_label = 0
    with torch.no_grad():
        for record in ds.records:
            out = model(record, mode="deterministic")
            mask_sets.append(out.phenotypes.hard().numpy())
            positives = set(record.label_visit.codes)
            if not positives:
                n_no_label += 1
                continue
            scores = out.y_hat.numpy()
            for k in ks:
                recalls[k].append(recall_at_k(scores, positives, k))
                ndcgs[k].append(ndcg_at_k(scores, positives, k))
    faith = faithfulness(model, ds)
    distinct = phenotype_distinctness(mask_sets)
    return EvalReport(
        recall_at_10=float(np.mean(recalls[ks[0]])),
        recall_at_20=float(np.mean(recalls[ks[1]])),
        ndcg_at_10=float(np.mean(ndcgs[ks[0]])),
        ndcg_at_20=float(np.mean(ndcgs[ks[1]])),
        faithfulness=faith.value,
        complexity=phenotype_complexity(mask_sets),
        distinctness=distinct.value,
        n_patients=len(ds.records),
        n_skipped_faithfulness=faith.n_skipped,
        n_skipped_distinctness=distinct.n_skipped,
        extra={"n_patients_without_label": n_no_label},
    )


def aggregate_reports(reports: Sequence[EvalReport]) -> dict:
    """Per-seed values plus their arithmetic mean, as a JSON-ready dict."""
    per_seed = [r.to_dict() for r in reports]
    keys = ["recall@10", "recall@20", "ndcg@10", "ndcg@20", "faithfulness", "complexity", "distinctness"]
    means = {}
    for key in keys:
        values = [r[key] for r in per_seed if r[key] is not None]
        means[key] = float(np.mean(values)) if values else None
    return {"per_seed": per_seed, "mean": means}


def frequency_baseline_scores(train_ds: Dataset) -> np.ndarray:
    """Rank codes by how often they occur anywhere in the training records."""
    counts = np.zeros(train_ds.n_codes, dtype=float)
    for record in train_ds.records:
        for visit in record.visits:
            for code in visit.codes:
                counts[code] += 1.0
    return counts


def baseline_recall(train_ds: Dataset, test_ds: Dataset, k: int = 10) -> float:
    scores = frequency_baseline_scores(train_ds)
    values = [
        recall_at_k(scores, set(r.label_visit.codes), k)
        for r in test_ds.records
        if r.label_visit.codes
    ]
    return float(np.mean(values)) if values else 0.0


def _recovered_rate(model: PhenotypeModel, masked_ds: Dataset, ledger_entries) -> float:
    """Fraction of removed occurrences that reappear in an extracted phenotype."""
    if not ledger_entries:
        return 0.0
    by_patient: dict[str, list] = {}
    for entry in ledger_entries:
        by_patient.setdefault(entry.patient_id, []).append(entry)
    recovered = 0
    with torch.no_grad():
        for record in masked_ds.records:
            entries = by_patient.get(record.patient_id)
            if not entries:
                continue
            out = model(record, mode="deterministic")
            union = (out.phenotypes.hard().sum(dim=0) > 0).numpy()
            for entry in entries:
                code_idx = masked_ds.code_index[entry.code]
                if union[code_idx, entry.visit_index]:
                    recovered += 1
    return recovered / len(ledger_entries)


def robustness_experiment(
    model: PhenotypeModel,
    test_ds: Dataset,
    fractions: tuple[float, ...] = (0.25, 0.75),
    seed: int = 0,
) -> list[dict]:
    """Mask input diagnoses at each fraction and measure the damage.

    Rows carry Recall@20 / nDCG@20, the relative drop against the unmasked
    run, and the recovered-diagnosis rate: the share of removed occurrences
    that the model's extracted phenotypes re-assert for the same patient
    (possible only through augmentation, since phenotypes are otherwise
    subsets of the surviving record).
    """
    def _ranking(ds: Dataset) -> tuple[float, float]:
        rs, ns = [], []
        for record in ds.records:
            positives = set(record.label_visit.codes)
            if not positives:
                continue
            scores = patient_scores(model, record)
            rs.append(recall_at_k(scores, positives, 20))
            ns.append(ndcg_at_k(scores, positives, 20))
        return (float(np.mean(rs)) if rs else 0.0, float(np.mean(ns)) if ns else 0.0)

    base_recall_20, base_ndcg_20 = _ranking(test_ds)
    rows = [
        {
            "fraction": 0.0,
            "recall@20": base_recall_20,
            "ndcg@20": base_ndcg_20,
            "recall_drop_pct": 0.0,
            "ndcg_drop_pct": 0.0,
            "recovered_rate": 0.0,
            "n_masked": 0,
        }
    ]
    for fraction in fractions:
        masked_ds, ledger = mask_diagnoses(test_ds, fraction, derive_seed(seed, "mask", fraction))
        recall_20, ndcg_20 = _ranking(masked_ds)
        rows.append(
            {
                "fraction": fraction,
                "recall@20": recall_20,
                "ndcg@20": ndcg_20,
                "recall_drop_pct": (
                    100.0 * (base_recall_20 - recall_20) / base_recall_20 if base_recall_20 else 0.0
                ),
                "ndcg_drop_pct": (
                    100.0 * (base_ndcg_20 - ndcg_20) / base_ndcg_20 if base_ndcg_20 else 0.0
                ),
                "recovered_rate": _recovered_rate(model, masked_ds, ledger.entries),
                "n_masked": len(ledger.entries),
            }
        )
    return rows


def write_robustness_csv(rows: list[dict], path: str | Path) -> None:
    columns = ["fraction", "recall@20", "ndcg@20", "recall_drop_pct", "ndcg_drop_pct", "recovered_rate", "n_masked"]
    with Path(path).open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
