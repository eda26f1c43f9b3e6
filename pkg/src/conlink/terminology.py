"""Concept vocabulary: CUI -> synonym names plus parent/child relations.

File format (UTF-8, tab-separated, `#` lines are comments):

    CUI<TAB>name
    CUI<TAB>name<TAB>parent1|parent2|...

Names are normalized on load (lowercased, punctuation stripped); duplicate
(cui, surface) rows collapse to the first occurrence. The parent relation must
be acyclic and may only reference CUIs that carry at least one name.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import normalize
from .errors import NotFoundError, ParseError, ValidationError
from .util import derive_seed

# A concept identifier is a plain non-empty string, compared byte-for-byte
# after whitespace trimming.
ConceptId = str


@dataclass(frozen=True)
class ConceptName:
    """One synonym surface attached to a CUI."""

    surface: str
    cui: ConceptId


class Terminology:
    """Immutable after construction; safe for unlimited concurrent readers."""

    def __init__(self, names: list[ConceptName], parents: dict[ConceptId, frozenset[ConceptId]]):
        self.names: tuple[ConceptName, ...] = tuple(names)
        self.parents: dict[ConceptId, frozenset[ConceptId]] = dict(parents)

        self._names_by_cui: dict[ConceptId, list[ConceptName]] = {}
        for name in self.names:
            self._names_by_cui.setdefault(name.cui, []).append(name)

        self._children: dict[ConceptId, list[ConceptId]] = {}
        for child, parent_set in self.parents.items():
            for parent in parent_set:
                self._children.setdefault(parent, []).append(child)
        for kids in self._children.values():
            kids.sort()

        self._validate()

    # -- construction ------------------------------------------------------

    def _validate(self) -> None:
        if not self.names:
            raise ValidationError("terminology has no concept names")
        known = set(self._names_by_cui)
        for child, parent_set in self.parents.items():
            if child not in known:
                raise ValidationError(f"parent entry for unknown CUI {child!r}")
            for parent in parent_set:
                if parent not in known:
                    raise ValidationError(
                        f"CUI {child!r} references unknown parent {parent!r}"
                    )
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        WHITE, GRAY, BLACK = 0, 1, 2
        color: dict[str, int] = {}
        for start in self.parents:
            if color.get(start, WHITE) != WHITE:
                continue
            stack: list[tuple[str, int]] = [(start, 0)]
            color[start] = GRAY
            while stack:
                node, i = stack[-1]
                succ = sorted(self.parents.get(node, ()))
                if i < len(succ):
                    stack[-1] = (node, i + 1)
                    nxt = succ[i]
                    state = color.get(nxt, WHITE)
                    if state == GRAY:
                        raise ValidationError(f"cycle in parent relation at CUI {nxt!r}")
                    if state == WHITE:
                        color[nxt] = GRAY
                        stack.append((nxt, 0))
                else:
                    color[node] = BLACK
                    stack.pop()

    # -- basic queries -----------------------------------------------------

    @property
    def cuis(self) -> set[ConceptId]:
        return set(self._names_by_cui)

    @property
    def name_count(self) -> int:
        return len(self.names)

    @property
    def cui_count(self) -> int:
        return len(self._names_by_cui)

    def has(self, cui: ConceptId) -> bool:
        return cui in self._names_by_cui

    def names_of(self, cui: ConceptId) -> list[ConceptName]:
        if cui not in self._names_by_cui:
            raise NotFoundError(f"unknown CUI {cui!r}")
        return list(self._names_by_cui[cui])

    def parent_cuis(self, cui: ConceptId) -> list[ConceptId]:
        if cui not in self._names_by_cui:
            raise NotFoundError(f"unknown CUI {cui!r}")
        return sorted(self.parents.get(cui, ()))

    def sibling_cuis(self, cui: ConceptId) -> list[ConceptId]:
        """CUIs sharing at least one direct parent with `cui`, excluding it."""
        sibs: set[str] = set()
        for parent in self.parent_cuis(cui):
            sibs.update(self._children.get(parent, ()))
        sibs.discard(cui)
        return sorted(sibs)

    # -- sampling-facing queries --------------------------------------------

    def parents_of(self, cui: ConceptId, k: int, seed: int = 0) -> list[ConceptName]:
        """Up to k names drawn from the union of the direct parents' names."""
        pool = [n for parent in self.parent_cuis(cui) for n in self._names_by_cui[parent]]
        return _take(pool, k, derive_seed("parents", seed, cui))

    def siblings_of(self, cui: ConceptId, k: int, seed: int = 0) -> list[ConceptName]:
        """Up to k names drawn from the sibling concepts' names."""
        pool = [n for sib in self.sibling_cuis(cui) for n in self._names_by_cui[sib]]
        return _take(pool, k, derive_seed("siblings", seed, cui))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Terminology):
            return NotImplemented
        return self.names == other.names and self.parents == other.parents


def _take(pool: list[ConceptName], k: int, seed: int) -> list[ConceptName]:
    if k < 0:
        raise ValueError("k must be non-negative")
    if len(pool) <= k:
        return list(pool)
    return random.Random(seed).sample(pool, k)


def load_terminology(path: str, fmt: str = "tsv") -> Terminology:
    if fmt != "tsv":
        raise ValueError(f"unsupported terminology format {fmt!r}")
    names: list[ConceptName] = []
    seen: set[tuple[str, str]] = set()
    parents: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise ParseError(path, line_no, f"expected 2 or 3 columns, got {len(cols)}")
            cui = cols[0].strip()
            if not cui:
                raise ParseError(path, line_no, "empty CUI column")
            surface = normalize(cols[1])
            if not surface:
                raise ParseError(path, line_no, "name is empty after normalization")
            if (cui, surface) not in seen:
                seen.add((cui, surface))
                names.append(ConceptName(surface=surface, cui=cui))
            if len(cols) == 3 and cols[2].strip():
                refs = {p.strip() for p in cols[2].split("|") if p.strip()}
                parents.setdefault(cui, set()).update(refs)
    if not names:
        raise ValidationError(f"{path}: no concept rows")
    frozen = {cui: frozenset(ps) for cui, ps in parents.items()}
    return Terminology(names, frozen)


def save_terminology(t: Terminology, path: str) -> None:
    """Write a TSV that round-trips through load_terminology."""
    emitted_parents: set[str] = set()
    with open(path, "w", encoding="utf-8") as f:
        for name in t.names:
            parent_col = ""
            if name.cui in t.parents and name.cui not in emitted_parents:
                parent_col = "|".join(sorted(t.parents[name.cui]))
                emitted_parents.add(name.cui)
            if parent_col:
                f.write(f"{name.cui}\t{name.surface}\t{parent_col}\n")
            else:
                f.write(f"{name.cui}\t{name.surface}\n")
