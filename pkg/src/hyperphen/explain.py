"""Explanation payloads, clinician edits, and prediction diffs.

An explanation is the model's K temporal phenotypes (with per-cell provenance:
recorded in the chart vs. added by augmentation), their importance weights,
and the top-ranked predicted codes.  Edits toggle (phenotype, code, visit)
cells and are validated as a whole before any is applied, so a bad edit list
changes nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import torch

from .data import Dataset, PatientRecord
from .metrics import top_k_indices
from .model import ForwardOutput, PhenotypeModel

_DESCRIPTIONS: dict[str, str] | None = None


def code_descriptions() -> dict[str, str]:
    """Bundled human-readable names for common ICD-9 codes."""
    global _DESCRIPTIONS
    if _DESCRIPTIONS is None:
        text = resources.files("hyperphen.resources").joinpath("icd9_descriptions.json").read_text()
        _DESCRIPTIONS = json.loads(text)
    return _DESCRIPTIONS


def describe_code(code: str) -> str | None:
    return code_descriptions().get(code)


class EditError(ValueError):
    """An edit references a phenotype, code, or visit that does not exist."""


@dataclass(frozen=True)
class Edit:
    phenotype: int
    code: str
    visit_index: int
    action: str  # "add" | "remove"
    author: str = ""

    def to_dict(self) -> dict:
        return {
            "phenotype": self.phenotype,
            "code": self.code,
            "visit_index": self.visit_index,
            "action": self.action,
            "author": self.author,
        }

    @staticmethod
    def from_dict(raw: dict) -> "Edit":
        try:
            return Edit(
                phenotype=int(raw["phenotype"]),
                code=str(raw["code"]),
                visit_index=int(raw["visit_index"]),
                action=str(raw["action"]),
                author=str(raw.get("author", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EditError(f"malformed edit {raw!r}") from exc


def apply_edits(masks: torch.Tensor, edits: Sequence[Edit], ds: Dataset) -> torch.Tensor:
    """Return a copy of the masks with all edits applied, or raise unchanged.

    Validation covers every edit before the first is applied: unknown codes,
    out-of-range phenotype or visit indices, and unknown actions are rejected
    atomically.  Adding a cell the patient's record never contained is legal —
    clinicians may assert diagnoses the chart missed.
    """
    n_phen, n_codes, n_visits = masks.shape
    if n_codes != ds.n_codes:
        raise ValueError(f"masks cover {n_codes} codes but the dataset has {ds.n_codes}")
    resolved = []
    for edit in edits:
        if edit.action not in ("add", "remove"):
            raise EditError(f"unknown action {edit.action!r}")
        if not 0 <= edit.phenotype < n_phen:
            raise EditError(f"phenotype {edit.phenotype} out of range [0, {n_phen})")
        if not 0 <= edit.visit_index < n_visits:
            raise EditError(f"visit {edit.visit_index} out of range [0, {n_visits})")
        if edit.code not in ds.code_index:
            raise EditError(f"unknown diagnosis code {edit.code!r}")
        resolved.append((edit.phenotype, ds.code_index[edit.code], edit.visit_index, edit.action))
    edited = masks.detach().clone()
    for k, code_idx, visit_idx, action in resolved:
        edited[k, code_idx, visit_idx] = 1.0 if action == "add" else 0.0
    return edited


def top_k_payload(y_hat: torch.Tensor, ds: Dataset, k: int) -> list[dict]:
    scores = y_hat.detach().numpy()
    return [
        {
            "rank": rank + 1,
            "code": ds.vocabulary[int(idx)].code,
            "score": float(scores[int(idx)]),
            "description": describe_code(ds.vocabulary[int(idx)].code),
        }
        for rank, idx in enumerate(top_k_indices(scores, k))
    ]


def phenotype_payload(out: ForwardOutput, ds: Dataset) -> list[dict]:
    masks = out.phenotypes.hard()
    added = set(out.augmented.added_cells())
    phenotypes = []
    for k in range(masks.shape[0]):
        cells = [
            {
                "code": ds.vocabulary[i].code,
                "visit_index": j,
                "from_augmentation": (i, j) in added,
            }
            for i, j in out.phenotypes.cells(k)
        ]
        phenotypes.append({"k": k, "weight": float(out.alpha[k]), "cells": cells})
    return phenotypes


def record_payload(record: PatientRecord, ds: Dataset) -> dict:
    return {
        "patient_id": record.patient_id,
        "n_visits": len(record.visits),
        "visits": [
            {
                "visit_index": j,
                "timestamp": visit.timestamp.isoformat(),
                "codes": [
                    {"code": ds.vocabulary[i].code, "description": describe_code(ds.vocabulary[i].code)}
                    for i in sorted(visit.codes)
                ],
            }
            for j, visit in enumerate(record.visits)
        ],
    }


def build_explanation(
    model: PhenotypeModel,
    ds: Dataset,
    patient_id: str,
    top_k: int = 10,
    use_all_visits: bool = True,
) -> tuple[dict, ForwardOutput]:
    """Deterministic-mode forward plus its JSON rendering.

    Serving treats the whole record as history (there is no hidden "next
    visit" at the bedside); training-time evaluation instead reserves the last
    visit as the label.
    """
    record = ds.record(patient_id)
    with torch.no_grad():
        out = model(record, mode="deterministic", use_all_visits=use_all_visits)
    payload = {
        "patient_id": patient_id,
        "alpha": [float(a) for a in out.alpha],
        "phenotypes": phenotype_payload(out, ds),
        "predictions": top_k_payload(out.y_hat, ds, top_k),
        "record": record_payload(record, ds),
        "n_visits_used": out.graph.visit_count,
    }
    return payload, out


def diff_topk(before: list[dict], after: list[dict]) -> dict:
    """Codes entering/leaving the top-k plus score deltas over the union."""
    before_by_code = {item["code"]: item for item in before}
    after_by_code = {item["code"]: item for item in after}
    entering = sorted(set(after_by_code) - set(before_by_code))
    leaving = sorted(set(before_by_code) - set(after_by_code))
    deltas = []
    for code in sorted(set(before_by_code) | set(after_by_code)):
        old = before_by_code.get(code)
        new = after_by_code.get(code)
        deltas.append(
            {
                "code": code,
                "score_before": old["score"] if old else None,
                "score_after": new["score"] if new else None,
                "delta": (new["score"] - old["score"]) if old and new else None,
            }
        )
    return {"entering": entering, "leaving": leaving, "deltas": deltas}
