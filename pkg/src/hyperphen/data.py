"""EHR data model, CSV ingestion, patient-level splits, and diagnosis masking.

The on-disk interchange format is a flat CSV with one row per recorded
diagnosis: ``patient_id, visit_id, visit_timestamp (ISO-8601), icd9_code``.
Rows are grouped into visits by ``(patient_id, visit_id)`` and visits are
ordered by timestamp (ties keep file order).  Patients need at least two
visits; the final visit of each record is the prediction label.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Mapping

import numpy as np

from .common import round_half_up
from .ontology import OntologyTree, build_ontology

logger = logging.getLogger(__name__)


class DataFormatError(ValueError):
    """Raised for unreadable rows, bad timestamps, or malformed ledgers."""


@dataclass(frozen=True)
class DiagnosisCode:
    code: str
    index: int


@dataclass(frozen=True)
class Visit:
    """One hospital visit: an unordered set of diagnosis-code indices.

    Visits are non-empty at ingestion; ``masked_empty`` marks visits whose
    diagnoses were all removed by :func:`mask_diagnoses` (kept so the visit
    count of the record is unchanged).
    """

    codes: frozenset[int]
    timestamp: datetime
    masked_empty: bool = False

    def multi_hot(self, n_codes: int) -> np.ndarray:
        vec = np.zeros(n_codes, dtype=np.int8)
        vec[sorted(self.codes)] = 1
        return vec

    @staticmethod
    def decode_multi_hot(vec: np.ndarray) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(vec))


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    visits: tuple[Visit, ...]

    @property
    def input_visits(self) -> tuple[Visit, ...]:
        """All visits but the last; the last visit is the prediction label."""
        return self.visits[:-1]

    @property
    def label_visit(self) -> Visit:
        return self.visits[-1]


@dataclass(frozen=True)
class Dataset:
    records: tuple[PatientRecord, ...]
    vocabulary: tuple[DiagnosisCode, ...]
    ontology: OntologyTree
    code_index: Mapping[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "code_index", {entry.code: entry.index for entry in self.vocabulary}
        )

    @property
    def n_codes(self) -> int:
        return len(self.vocabulary)

    def record(self, patient_id: str) -> PatientRecord:
        for rec in self.records:
            if rec.patient_id == patient_id:
                return rec
        raise KeyError(patient_id)

    def occurrence_count(self, input_only: bool = False) -> int:
        total = 0
        for rec in self.records:
            visits = rec.input_visits if input_only else rec.visits
            total += sum(len(v.codes) for v in visits)
        return total


@dataclass(frozen=True)
class IngestionSchema:
    """Column names and options for :func:`load_dataset`."""

    patient_column: str = "patient_id"
    visit_column: str = "visit_id"
    timestamp_column: str = "visit_timestamp"
    code_column: str = "icd9_code"
    delimiter: str = ","
    ontology_levels: int = 4


def load_dataset(path: str | Path, schema: IngestionSchema = IngestionSchema()) -> Dataset:
    """Load a diagnosis CSV into an immutable :class:`Dataset`.

    Hard errors (with the offending physical line number): missing or empty
    fields, unparseable timestamps.  Duplicate ``(patient, visit, code)`` rows
    are dropped with a logged count.  Patients with fewer than two visits are
    dropped with a logged count, since the label requires a successor visit.
    A visit's timestamp is taken from its first row.
    """
    path = Path(path)
    columns = (
        schema.patient_column,
        schema.visit_column,
        schema.timestamp_column,
        schema.code_column,
    )
    # patient -> visit id -> (timestamp, first-appearance order, codes)
    patients: dict[str, dict[str, tuple[datetime, int, list[str]]]] = {}
    seen: set[tuple[str, str, str]] = set()
    duplicates = 0

    with path.open(newline="") as handle:
        reader = csv.DictReader(handle, delimiter=schema.delimiter)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in columns):
            missing = [c for c in columns if not reader.fieldnames or c not in reader.fieldnames]
            raise DataFormatError(f"{path}: header missing columns {missing}")
        for row in reader:
            line = reader.line_num
            values = []
            for col in columns:
                value = row.get(col)
                if value is None or value.strip() == "":
                    raise DataFormatError(f"{path}: line {line}: missing value for {col!r}")
                values.append(value.strip())
            patient_id, visit_id, stamp_text, code = values
            try:
                stamp = datetime.fromisoformat(stamp_text)
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}: line {line}: unparseable timestamp {stamp_text!r}"
                ) from exc
            key = (patient_id, visit_id, code)
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            visits = patients.setdefault(patient_id, {})
            if visit_id not in visits:
                visits[visit_id] = (stamp, len(visits), [])
            visits[visit_id][2].append(code)

    if duplicates:
        logger.warning("%s: dropped %d duplicate (patient, visit, code) rows", path, duplicates)

    vocabulary_codes = sorted({c for visits in patients.values() for _, _, cs in visits.values() for c in cs})
    code_to_index = {c: i for i, c in enumerate(vocabulary_codes)}

    records = []
    dropped = 0
    for patient_id in sorted(patients):
        visits = sorted(patients[patient_id].values(), key=lambda item: (item[0], item[1]))
        if len(visits) < 2:
            dropped += 1
            continue
        records.append(
            PatientRecord(
                patient_id=patient_id,
                visits=tuple(
                    Visit(codes=frozenset(code_to_index[c] for c in codes), timestamp=stamp)
                    for stamp, _, codes in visits
                ),
            )
        )
    if dropped:
        logger.warning("%s: dropped %d patients with fewer than 2 visits", path, dropped)

    ontology = build_ontology(vocabulary_codes, schema.ontology_levels)
    vocabulary = tuple(DiagnosisCode(code=c, index=i) for i, c in enumerate(vocabulary_codes))
    return Dataset(records=tuple(records), vocabulary=vocabulary, ontology=ontology)


def write_dataset_csv(ds: Dataset, path: str | Path) -> None:
    """Write a dataset back to the ingestion CSV format (codes sorted per visit)."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["patient_id", "visit_id", "visit_timestamp", "icd9_code"])
        for rec in ds.records:
            for j, visit in enumerate(rec.visits):
                for idx in sorted(visit.codes):
                    writer.writerow(
                        [
                            rec.patient_id,
                            f"{rec.patient_id}-v{j}",
                            visit.timestamp.isoformat(),
                            ds.vocabulary[idx].code,
                        ]
                    )


def dataset_manifest(ds: Dataset) -> dict:
    visit_counts = [len(r.visits) for r in ds.records]
    code_counts = [len(v.codes) for r in ds.records for v in r.visits]
    return {
        "format_version": 1,
        "n_patients": len(ds.records),
        "n_codes": ds.n_codes,
        "n_visits": int(sum(visit_counts)),
        "max_visits_per_patient": int(max(visit_counts, default=0)),
        "avg_codes_per_visit": (float(np.mean(code_counts)) if code_counts else 0.0),
        "ontology_levels": ds.ontology.n_levels,
    }


def split_dataset(
    ds: Dataset, ratios: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Partition patients into train/validation/test.

    Sizes are ``floor(ratio * N)`` for train and validation; the remainder goes
    to test.  No patient appears in two splits; the shuffle is deterministic
    for a fixed seed.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    n = len(ds.records)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    groups = (order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :])

    def subset(indices: np.ndarray) -> Dataset:
        records = tuple(sorted((ds.records[i] for i in indices), key=lambda r: r.patient_id))
        return Dataset(records=records, vocabulary=ds.vocabulary, ontology=ds.ontology)

    return subset(groups[0]), subset(groups[1]), subset(groups[2])


@dataclass(frozen=True)
class MaskEntry:
    patient_id: str
    visit_index: int
    code: str


@dataclass(frozen=True)
class MaskLedger:
    """Every diagnosis occurrence removed by :func:`mask_diagnoses`."""

    entries: tuple[MaskEntry, ...]
    pool_size: int
    fraction: float
    seed: int
    emptied_visits: tuple[tuple[str, int], ...] = ()

    def save(self, path: str | Path) -> None:
        with Path(path).open("w") as handle:
            for entry in self.entries:
                handle.write(
                    json.dumps(
                        {
                            "patient_id": entry.patient_id,
                            "visit_index": entry.visit_index,
                            "code": entry.code,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )

    @staticmethod
    def load_entries(path: str | Path) -> tuple[MaskEntry, ...]:
        entries = []
        with Path(path).open() as handle:
            for number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    entries.append(
                        MaskEntry(
                            patient_id=raw["patient_id"],
                            visit_index=int(raw["visit_index"]),
                            code=raw["code"],
                        )
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise DataFormatError(f"{path}: line {number}: corrupt ledger entry") from exc
        return tuple(entries)


def mask_diagnoses(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, MaskLedger]:
    """Remove a uniform random fraction of input diagnosis occurrences.

    The pool is every (patient, input visit, code) occurrence; label visits are
    never touched.  Exactly ``round(fraction * pool)`` occurrences are removed
    (half-up).  Visits emptied entirely are retained as empty hyperedges and
    flagged, so visit counts are stable.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"mask fraction must be in [0, 1], got {fraction}")
    pool: list[tuple[int, int, int]] = []
    for p_idx, rec in enumerate(ds.records):
        for v_idx in range(len(rec.visits) - 1):
            for code in sorted(rec.visits[v_idx].codes):
                pool.append((p_idx, v_idx, code))

    n_remove = round_half_up(fraction * len(pool))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(pool), size=n_remove, replace=False) if n_remove else np.array([], dtype=int)
    removed: dict[tuple[int, int], set[int]] = {}
    for flat in chosen:
        p_idx, v_idx, code = pool[int(flat)]
        removed.setdefault((p_idx, v_idx), set()).add(code)

    records = []
    emptied: list[tuple[str, int]] = []
    for p_idx, rec in enumerate(ds.records):
        visits = list(rec.visits)
        for v_idx in range(len(visits) - 1):
            gone = removed.get((p_idx, v_idx))
            if not gone:
                continue
            kept = visits[v_idx].codes - frozenset(gone)
            became_empty = len(kept) == 0
            visits[v_idx] = replace(visits[v_idx], codes=kept, masked_empty=became_empty)
            if became_empty:
                emptied.append((rec.patient_id, v_idx))
        records.append(replace(rec, visits=tuple(visits)))

    entries = sorted(
        (
            MaskEntry(
                patient_id=ds.records[p].patient_id,
                visit_index=v,
                code=ds.vocabulary[c].code,
            )
            for p, v, c in (pool[int(i)] for i in chosen)
        ),
        key=lambda e: (e.patient_id, e.visit_index, e.code),
    )
    masked = Dataset(records=tuple(records), vocabulary=ds.vocabulary, ontology=ds.ontology)
    ledger = MaskLedger(
        entries=tuple(entries),
        pool_size=len(pool),
        fraction=fraction,
        seed=seed,
        emptied_visits=tuple(sorted(emptied)),
    )
    return masked, ledger
