"""Shared numeric, RNG, and serialization helpers."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

import torch

# All model math runs in 64-bit: the package targets desk-scale corpora where
# exact reproducibility and tight gradient checks matter more than speed.
DTYPE = torch.float64

# Per-patient incidence matrices are tiny; paying for validation beats the
# silent-corruption failure mode sparse tensors warn about.
torch.sparse.check_sparse_tensor_invariants.enable()


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero toward +inf."""
    return int(math.floor(x + 0.5))


def derive_seed(*parts: Any) -> int:
    """Fold arbitrary labels into a stable 63-bit seed.

    Used to give every (run seed, patient, phenotype, ...) combination its own
    reproducible RNG stream.
    """
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def make_generator(*parts: Any) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derive_seed(*parts))
    return gen


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace, for byte-stable payloads."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
