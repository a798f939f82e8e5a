"""ICD-9 diagnosis-code grammar and the leveled ontology tree.

The hierarchy has up to four levels, root first:

  1. chapter range (e.g. ``460-519``, or the V/E supplementary blocks),
  2. three-character category (``518``, ``V30``, ``E950``),
  3. four-character subcategory (``518.8``),
  4. the full code (``518.81``).

Codes that stop short of a level are padded downward with virtual nodes, so
every vocabulary code resolves to exactly one node at the deepest level.  Node
ids are level-tagged truncations of the code string (``"3:518.8"``), which
keeps the child-to-parent map a pure prefix function.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

ICD9_PATTERN = re.compile(r"^(\d{3}|V\d{2}|E\d{3})(?:\.(\d{1,2}))?$")

# Top-level ICD-9 disease chapters by 3-digit category range, plus the two
# supplementary classifications (V and E codes).
_NUMERIC_CHAPTERS = (
    (1, 139),
    (140, 239),
    (240, 279),
    (280, 289),
    (290, 319),
    (320, 389),
    (390, 459),
    (460, 519),
    (520, 579),
    (580, 629),
    (630, 679),
    (680, 709),
    (710, 739),
    (740, 759),
    (760, 779),
    (780, 799),
    (800, 999),
)
V_CHAPTER = "V01-V91"
E_CHAPTER = "E000-E999"

MAX_LEVELS = 4


class OntologyError(ValueError):
    """Raised for codes that fail the ICD-9 grammar or an invalid tree request."""


def is_valid_icd9(code: str) -> bool:
    return bool(ICD9_PATTERN.match(code))


def _split(code: str) -> tuple[str, str]:
    match = ICD9_PATTERN.match(code)
    if match is None:
        raise OntologyError(f"invalid ICD-9 code: {code!r}")
    return match.group(1), match.group(2) or ""


def chapter_of(code: str) -> str:
    """Chapter-range label for a code's 3-character category."""
    category, _ = _split(code)
    if category.startswith("V"):
        return V_CHAPTER
    if category.startswith("E"):
        return E_CHAPTER
    value = int(category)
    for lo, hi in _NUMERIC_CHAPTERS:
        if lo <= value <= hi:
            return f"{lo:03d}-{hi:03d}"
    raise OntologyError(f"ICD-9 category out of range: {code!r}")


def level_key(code: str, level: int) -> str:
    """Untagged hierarchy key of ``code`` at ``level`` (1-based, root first).

    Codes lacking digits at a level keep their shorter string, which is what
    realizes virtual-child padding: the padded node reuses the code's own
    prefix at every deeper level.
    """
    category, suffix = _split(code)
    if level == 1:
        return chapter_of(code)
    if level == 2:
        return category
    if level == 3:
        return f"{category}.{suffix[0]}" if suffix else category
    if level == 4:
        return code
    raise OntologyError(f"unsupported ontology level: {level}")


def node_id(code: str, level: int) -> str:
    return f"{level}:{level_key(code, level)}"


@dataclass(frozen=True)
class OntologyTree:
    """Leveled single-parent hierarchy over a fixed code vocabulary.

    ``levels[l]`` lists the node ids realized at level ``l+1`` (sorted),
    ``parent`` maps every non-root node to its parent id, ``leaf_of[i]`` is the
    deepest-level node of vocabulary code ``i``, and ``ancestor_rows[i]`` gives
    the per-level row index of that code's ancestor path (root first), which is
    what the embedding tables consume.
    """

    n_levels: int
    levels: tuple[tuple[str, ...], ...]
    parent: Mapping[str, str]
    leaf_of: tuple[str, ...]
    ancestor_rows: tuple[tuple[int, ...], ...]

    def n_nodes(self, level: int) -> int:
        return len(self.levels[level - 1])

    def path(self, code_index: int) -> tuple[str, ...]:
        """Node ids from root to leaf for one vocabulary code."""
        node = self.leaf_of[code_index]
        chain = [node]
        while node in self.parent:
            node = self.parent[node]
            chain.append(node)
        return tuple(reversed(chain))


def is_virtual(identifier: str) -> bool:
    """True when a node exists only as downward padding of a shorter code."""
    level_str, key = identifier.split(":", 1)
    level = int(level_str)
    if level <= 2:
        return False
    if level == 3:
        return "." not in key
    return len(_split(key)[1]) < 2


def build_ontology(codes: Sequence[str], n_levels: int = MAX_LEVELS) -> OntologyTree:
    """Construct the leveled tree for a code vocabulary.

    Raises :class:`OntologyError` listing every code that fails the ICD-9
    grammar.  ``n_levels`` may be reduced below 4, in which case leaves are the
    truncated keys at that depth.
    """
    if not 1 <= n_levels <= MAX_LEVELS:
        raise OntologyError(f"n_levels must be in [1, {MAX_LEVELS}], got {n_levels}")
    offenders = [c for c in codes if not is_valid_icd9(c)]
    if offenders:
        raise OntologyError(f"codes failing ICD-9 grammar: {sorted(set(offenders))}")

    paths = [[node_id(code, lvl) for lvl in range(1, n_levels + 1)] for code in codes]

    level_sets: list[set[str]] = [set() for _ in range(n_levels)]
    parent: dict[str, str] = {}
    for path in paths:
        for depth, node in enumerate(path):
            level_sets[depth].add(node)
            if depth > 0:
                parent[node] = path[depth - 1]

    levels = tuple(tuple(sorted(s)) for s in level_sets)
    row_of = [{node: row for row, node in enumerate(level)} for level in levels]
    ancestor_rows = tuple(
        tuple(row_of[depth][node] for depth, node in enumerate(path)) for path in paths
    )
    leaf_of = tuple(path[-1] for path in paths)
    return OntologyTree(
        n_levels=n_levels,
        levels=levels,
        parent=parent,
        leaf_of=leaf_of,
        ancestor_rows=ancestor_rows,
    )
