"""Synthetic EHR corpus with planted comorbidity clusters.

The generator partitions a toy ICD-9-shaped vocabulary into disjoint comorbidity
clusters, one successor code per cluster, and background codes.  Each patient
carries one home cluster that recurs across their visits; whenever a visit
contains the full cluster, the next visit contains the cluster's successor
code with a configured probability.  The cluster is always planted in the
penultimate visit, so the final (label) visit is predictable from the input
history.  Cluster and successor codes never appear as background fill, which
keeps the rule-firing rate measurable from the corpus alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .data import Dataset, DiagnosisCode, PatientRecord, Visit
from .ontology import build_ontology


class ConfigError(ValueError):
    """Raised when a generator configuration is infeasible or out of range."""


@dataclass(frozen=True)
class SyntheticConfig:
    n_patients: int = 500
    n_codes: int = 50
    visits_per_patient: tuple[int, int] = (3, 8)
    codes_per_visit: tuple[int, int] = (2, 5)
    n_clusters: int = 5
    cluster_size: int = 3
    rule_probability: float = 0.8
    cluster_rate: float = 0.6

    def __post_init__(self) -> None:
        if self.n_patients < 1:
            raise ConfigError(f"n_patients must be >= 1, got {self.n_patients}")
        if self.codes_per_visit[1] > self.n_codes:
            raise ConfigError(
                f"codes per visit ({self.codes_per_visit[1]}) exceeds vocabulary size ({self.n_codes})"
            )
        for name, (lo, hi) in (
            ("visits_per_patient", self.visits_per_patient),
            ("codes_per_visit", self.codes_per_visit),
        ):
            if lo < 1 or lo > hi:
                raise ConfigError(f"{name} range ({lo}, {hi}) is not a valid range")
        if self.visits_per_patient[0] < 2:
            raise ConfigError("patients need at least 2 visits (last visit is the label)")
        if self.n_clusters < 0 or (self.n_clusters > 0 and self.cluster_size < 1):
            raise ConfigError("clusters must be non-negative and non-empty")
        reserved = self.n_clusters * (self.cluster_size + 1)
        if self.n_codes - reserved < self.codes_per_visit[1]:
            raise ConfigError(
                f"vocabulary too small: {self.n_codes} codes leave fewer than "
                f"{self.codes_per_visit[1]} background codes after {reserved} reserved for clusters"
            )
        for name, value in (
            ("rule_probability", self.rule_probability),
            ("cluster_rate", self.cluster_rate),
        ):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["visits_per_patient"] = list(self.visits_per_patient)
        raw["codes_per_visit"] = list(self.codes_per_visit)
        return raw

    @staticmethod
    def from_dict(raw: dict) -> "SyntheticConfig":
        raw = dict(raw)
        for key in ("visits_per_patient", "codes_per_visit"):
            if key in raw:
                raw[key] = tuple(raw[key])
        try:
            return SyntheticConfig(**raw)
        except TypeError as exc:
            raise ConfigError(f"bad config fields: {exc}") from exc

    @staticmethod
    def load(path: str | Path) -> "SyntheticConfig":
        with Path(path).open() as handle:
            return SyntheticConfig.from_dict(json.load(handle))

    def save(self, path: str | Path) -> None:
        with Path(path).open("w") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _code_string(i: int) -> str:
    """Toy vocabulary on an ICD-9-shaped grid: 8 subcodes per 3-digit category."""
    return f"{100 + i // 8}.{i % 8}"


@dataclass(frozen=True)
class ClusterRule:
    """Codes that co-occur in one visit and predict a successor code in the next."""

    cluster_codes: tuple[str, ...]
    successor_code: str
    probability: float


def planted_clusters(config: SyntheticConfig) -> tuple[ClusterRule, ...]:
    rules = []
    for c in range(config.n_clusters):
        start = c * config.cluster_size
        codes = tuple(_code_string(start + j) for j in range(config.cluster_size))
        successor = _code_string(config.n_clusters * config.cluster_size + c)
        rules.append(ClusterRule(cluster_codes=codes, successor_code=successor, probability=config.rule_probability))
    return tuple(rules)


def generate_synthetic(config: SyntheticConfig, seed: int) -> Dataset:
    """Generate a deterministic corpus realizing every planted successor rule."""
    rng = np.random.default_rng(seed)
    rules = planted_clusters(config)
    n_reserved = config.n_clusters * (config.cluster_size + 1)
    background = np.arange(n_reserved, config.n_codes)
    all_codes = sorted(_code_string(i) for i in range(config.n_codes))
    code_to_index = {c: i for i, c in enumerate(all_codes)}

    base = datetime(2020, 1, 1)
    records = []
    for p in range(config.n_patients):
        n_visits = int(rng.integers(config.visits_per_patient[0], config.visits_per_patient[1] + 1))
        home = rules[p % config.n_clusters] if rules else None
        visits = []
        successor_pending = False
        for t in range(n_visits):
            target = int(rng.integers(config.codes_per_visit[0], config.codes_per_visit[1] + 1))
            mandatory: set[str] = set()
            if successor_pending and home is not None:
                mandatory.add(home.successor_code)
            successor_pending = False
            if home is not None:
                # the penultimate visit always carries the cluster so the label
                # visit stays predictable from the input history
                cluster_here = t == n_visits - 2 or rng.random() < config.cluster_rate
                if cluster_here:
                    mandatory.update(home.cluster_codes)
                    if rng.random() < home.probability:
                        successor_pending = True
            codes = set(mandatory)
            n_fill = max(target - len(codes), 0)
            if n_fill:
                picks = rng.choice(background, size=min(n_fill, len(background)), replace=False)
                codes.update(_code_string(int(i)) for i in picks)
            visits.append(
                Visit(
                    codes=frozenset(code_to_index[c] for c in codes),
                    timestamp=base + timedelta(days=p % 997) + timedelta(days=30 * t),
                )
            )
        records.append(PatientRecord(patient_id=f"P{p:05d}", visits=tuple(visits)))

    vocabulary = tuple(DiagnosisCode(code=c, index=i) for i, c in enumerate(all_codes))
    ontology = build_ontology(all_codes)
    return Dataset(records=tuple(records), vocabulary=vocabulary, ontology=ontology)


def successor_rule_rate(ds: Dataset, rules: tuple[ClusterRule, ...]) -> dict[str, float]:
    """Empirical firing frequency of each planted rule over consecutive visits.

    For every visit containing a rule's full cluster (with a following visit),
    counts whether the successor code appears in the next visit.  Returns
    ``{successor_code: rate}`` plus an ``"overall"`` pooled rate; rules whose
    cluster never appears are omitted.
    """
    fired: dict[str, int] = {r.successor_code: 0 for r in rules}
    eligible: dict[str, int] = {r.successor_code: 0 for r in rules}
    indexed_rules = [
        (frozenset(ds.code_index[c] for c in r.cluster_codes), ds.code_index[r.successor_code], r.successor_code)
        for r in rules
        if all(c in ds.code_index for c in r.cluster_codes) and r.successor_code in ds.code_index
    ]
    for rec in ds.records:
        for t in range(len(rec.visits) - 1):
            for cluster, successor, name in indexed_rules:
                if cluster <= rec.visits[t].codes:
                    eligible[name] += 1
                    if successor in rec.visits[t + 1].codes:
                        fired[name] += 1
    rates = {name: fired[name] / n for name, n in eligible.items() if n > 0}
    total_eligible = sum(eligible.values())
    if total_eligible:
        rates["overall"] = sum(fired.values()) / total_eligible
    return rates
