"""Clinician intervention HTTP service.

Read endpoints expose patient records and model explanations; the intervene
endpoint applies phenotype edits and re-predicts through the same bottleneck
code path the model itself uses.  The model is never mutated; sessions are
persisted append-only so any revision can be replayed.  All responses are
canonical JSON (sorted keys, minimal separators) so that equal payloads are
equal bytes.
"""

from __future__ import annotations

from typing import Optional

import torch
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from .common import canonical_json
from .data import Dataset
from .explain import (
    Edit,
    EditError,
    apply_edits,
    build_explanation,
    describe_code,
    diff_topk,
    record_payload,
    top_k_payload,
)
from .hypergraph import build_incidence
from .model import PhenotypeModel
from .ontology import is_valid_icd9
from .sessions import SessionError, SessionStore


class EditBody(BaseModel):
    phenotype: int
    code: str
    visit_index: int
    action: str
    author: str = ""

    def to_edit(self) -> Edit:
        return Edit(
            phenotype=self.phenotype,
            code=self.code,
            visit_index=self.visit_index,
            action=self.action,
            author=self.author,
        )


class InterveneBody(BaseModel):
    edits: list[EditBody] = Field(default_factory=list)
    session_id: Optional[str] = None
    top_k: int = 10


def _json(payload: dict, status_code: int = 200) -> Response:
    return Response(
        content=canonical_json(payload) + "\n",
        status_code=status_code,
        media_type="application/json",
    )


def create_app(
    model: PhenotypeModel | None,
    dataset: Dataset | None,
    store: SessionStore,
    top_k: int = 10,
) -> FastAPI:
    app = FastAPI(title="hyperphen intervention service")
    app.state.model = model
    app.state.dataset = dataset
    app.state.store = store
    app.state.top_k = top_k

    def _require_loaded() -> tuple[PhenotypeModel, Dataset]:
        if app.state.model is None or app.state.dataset is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return app.state.model, app.state.dataset

    def _require_patient(ds: Dataset, patient_id: str):
        try:
            return ds.record(patient_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown patient {patient_id!r}")

    @app.get("/patients/{patient_id}/record")
    def get_record(patient_id: str) -> Response:
        _, ds = _require_loaded()
        record = _require_patient(ds, patient_id)
        return _json(record_payload(record, ds))

    @app.get("/patients/{patient_id}/explanation")
    def get_explanation(patient_id: str, top_k: int | None = None) -> Response:
        model, ds = _require_loaded()
        _require_patient(ds, patient_id)
        payload, _ = build_explanation(model, ds, patient_id, top_k=top_k or app.state.top_k)
        return _json(payload)

    @app.post("/patients/{patient_id}/intervene")
    def intervene(patient_id: str, body: InterveneBody) -> Response:
        model, ds = _require_loaded()
        record = _require_patient(ds, patient_id)
        store: SessionStore = app.state.store
        k = body.top_k or app.state.top_k

        if body.session_id is None:
            _, out = build_explanation(model, ds, patient_id, top_k=k)
            base_cells = [
                (phen, ds.vocabulary[i].code, j)
                for phen in range(out.phenotypes.n_phenotypes)
                for i, j in out.phenotypes.cells(phen)
            ]
            session = store.create(
                patient_id,
                base_cells,
                n_phenotypes=out.phenotypes.n_phenotypes,
                n_visits=out.graph.visit_count,
            )
        else:
            try:
                session = store.load(body.session_id)
            except SessionError:
                raise HTTPException(status_code=404, detail=f"unknown session {body.session_id!r}")
            if session.patient_id != patient_id:
                raise HTTPException(
                    status_code=400,
                    detail=f"session {session.session_id} belongs to patient {session.patient_id!r}",
                )

        current = session.replay(ds)
        try:
            edited = apply_edits(current, [e.to_edit() for e in body.edits], ds)
        except EditError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        graph = build_incidence(record, ds.n_codes, use_all_visits=True)
        with torch.no_grad():
            code_table = model.personalize(graph)
            y_before, _, _ = model.predict_from_phenotypes(current, code_table)
            y_after, alpha_after, _ = model.predict_from_phenotypes(edited, code_table)
        before_top = top_k_payload(y_before, ds, k)
        after_top = top_k_payload(y_after, ds, k)
        prediction = {
            "alpha": [float(a) for a in alpha_after],
            "top_k": after_top,
        }
        revision = store.append_revision(session.session_id, [e.to_edit() for e in body.edits], prediction)
        return _json(
            {
                "session_id": session.session_id,
                "patient_id": patient_id,
                "revision": revision.revision,
                "prediction": prediction,
                "diff": diff_topk(before_top, after_top),
            }
        )

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> Response:
        store: SessionStore = app.state.store
        try:
            session = store.load(session_id)
        except SessionError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return _json(
            {
                "session_id": session.session_id,
                "patient_id": session.patient_id,
                "base_cells": [list(cell) for cell in session.base_cells],
                "n_phenotypes": session.n_phenotypes,
                "n_visits": session.n_visits,
                "revisions": [
                    {
                        "revision": r.revision,
                        "edits": [e.to_dict() for e in r.edits],
                        "prediction": r.prediction,
                        "timestamp": r.timestamp,
                    }
                    for r in session.revisions
                ],
            }
        )

    @app.get("/codes/{icd9}")
    def get_code(icd9: str) -> Response:
        if not is_valid_icd9(icd9):
            raise HTTPException(status_code=404, detail=f"not an ICD-9 code: {icd9!r}")
        return _json({"code": icd9, "description": describe_code(icd9)})

    return app
