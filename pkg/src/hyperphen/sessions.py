"""Append-only intervention sessions with replay.

Each session is one JSON-lines file: a creation event holding the patient id
and the base phenotype cells, followed by one immutable revision event per
intervention.  Loading a session replays the edits over the base set, so the
reconstructed phenotypes always match what the service computed in memory.
Writers take a per-session lock; different sessions never contend.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import torch

from .common import DTYPE, canonical_json
from .data import Dataset
from .explain import Edit, apply_edits


class SessionError(ValueError):
    """Unknown session, or a corrupt line in a session log."""


@dataclass(frozen=True)
class Revision:
    revision: int
    edits: tuple[Edit, ...]
    prediction: dict
    timestamp: str


@dataclass(frozen=True)
class InterventionSession:
    session_id: str
    patient_id: str
    base_cells: tuple[tuple[int, str, int], ...]  # (phenotype, code, visit)
    n_phenotypes: int
    n_visits: int
    revisions: tuple[Revision, ...] = ()

    def base_masks(self, ds: Dataset) -> torch.Tensor:
        masks = torch.zeros(self.n_phenotypes, ds.n_codes, self.n_visits, dtype=DTYPE)
        for k, code, visit in self.base_cells:
            masks[k, ds.code_index[code], visit] = 1.0
        return masks

    def replay(self, ds: Dataset) -> torch.Tensor:
        """Base masks with every revision's edits applied in order."""
        masks = self.base_masks(ds)
        for revision in self.revisions:
            masks = apply_edits(masks, revision.edits, ds)
        return masks


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class SessionStore:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def create(
        self,
        patient_id: str,
        base_cells: list[tuple[int, str, int]],
        n_phenotypes: int,
        n_visits: int,
    ) -> InterventionSession:
        session_id = uuid.uuid4().hex
        event = {
            "type": "created",
            "session_id": session_id,
            "patient_id": patient_id,
            "n_phenotypes": n_phenotypes,
            "n_visits": n_visits,
            "base_cells": [list(cell) for cell in sorted(base_cells)],
            "timestamp": _now(),
        }
        with self._lock(session_id):
            with self._path(session_id).open("x") as handle:
                handle.write(canonical_json(event) + "\n")
        return InterventionSession(
            session_id=session_id,
            patient_id=patient_id,
            base_cells=tuple(tuple(cell) for cell in sorted(base_cells)),
            n_phenotypes=n_phenotypes,
            n_visits=n_visits,
        )

    def append_revision(
        self, session_id: str, edits: list[Edit], prediction: dict
    ) -> Revision:
        """Persist one immutable revision; returns it with its number."""
        with self._lock(session_id):
            session = self._load_unlocked(session_id)
            revision = Revision(
                revision=len(session.revisions) + 1,
                edits=tuple(edits),
                prediction=prediction,
                timestamp=_now(),
            )
            event = {
                "type": "revision",
                "revision": revision.revision,
                "edits": [e.to_dict() for e in edits],
                "prediction": prediction,
                "timestamp": revision.timestamp,
            }
            with self._path(session_id).open("a") as handle:
                handle.write(canonical_json(event) + "\n")
        return revision

    def load(self, session_id: str) -> InterventionSession:
        with self._lock(session_id):
            return self._load_unlocked(session_id)

    def _load_unlocked(self, session_id: str) -> InterventionSession:
        path = self._path(session_id)
        if not path.exists():
            raise SessionError(f"unknown session {session_id!r}")
        header = None
        revisions = []
        with path.open() as handle:
            for number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    event = json.loads(line)
                    kind = event["type"]
                    if kind == "created":
                        header = event
                    elif kind == "revision":
                        revisions.append(
                            Revision(
                                revision=int(event["revision"]),
                                edits=tuple(Edit.from_dict(e) for e in event["edits"]),
                                prediction=event["prediction"],
                                timestamp=event["timestamp"],
                            )
                        )
                    else:
                        raise KeyError(kind)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise SessionError(f"{path}: line {number}: corrupt session event") from exc
        if header is None:
            raise SessionError(f"{path}: missing creation event")
        return InterventionSession(
            session_id=header["session_id"],
            patient_id=header["patient_id"],
            base_cells=tuple(tuple(cell) for cell in header["base_cells"]),
            n_phenotypes=int(header["n_phenotypes"]),
            n_visits=int(header["n_visits"]),
            revisions=tuple(revisions),
        )

    def exists(self, session_id: str) -> bool:
        return self._path(session_id).exists()
