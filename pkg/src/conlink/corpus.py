"""Mention datasets: loading, text normalization, composite splitting, refinement.

File format (UTF-8, tab-separated, `#` lines are comments):

    source_id<TAB>raw_text<TAB>CUI1|CUI2|...
    source_id<TAB>raw_text<TAB>nil
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .errors import ParseError
from .util import derive_seed

SPLITS = ("train", "dev", "test")

# Tokens that mark a mention as composite. "+" is padded into its own token
# by normalize() so token-level matching catches "a+b" as well as "a + b".
_TRIGGERS = frozenset({"combination", "combine", "combined", "plus", "vs", "+"})
_CONNECTIVES = frozenset({"of", "and", "with"})

NIL_LITERAL = "nil"


def normalize(text: str) -> str:
    """Lowercase, replace punctuation with spaces, collapse whitespace.

    "+" survives as a standalone token because it is a composite trigger;
    every other non-alphanumeric character becomes a space.
    """
    out = []
    for ch in text.lower():
        if ch.isalnum():
            out.append(ch)
        elif ch == "+":
            out.append(" + ")
        else:
            out.append(" ")
    return " ".join("".join(out).split())


def split_composite(text: str) -> list[str]:
    """Split a normalized mention into its component mentions.

    A mention is composite when any trigger token is present; the text is then
    split at trigger tokens, connective words adjacent to a trigger are
    stripped, and non-empty parts are returned. Non-composite text comes back
    as a single-element list, untouched.
    """
    tokens = text.split()
    if not any(tok in _TRIGGERS for tok in tokens):
        return [text]

    groups: list[list[str]] = [[]]
    followed_by_trigger: list[bool] = []
    for tok in tokens:
        if tok in _TRIGGERS:
            followed_by_trigger.append(True)
            groups.append([])
        else:
            groups[-1].append(tok)
    followed_by_trigger.append(False)

    parts = []
    for i, group in enumerate(groups):
        preceded = i > 0
        if preceded:
            while group and group[0] in _CONNECTIVES:
                group = group[1:]
        if followed_by_trigger[i]:
            while group and group[-1] in _CONNECTIVES:
                group = group[:-1]
        if group:
            parts.append(" ".join(group))
    return parts or [text]


@dataclass(frozen=True)
class MentionRecord:
    """One annotated text span. An empty gold_cuis set encodes *nil*."""

    source_id: str
    raw_text: str
    normalized_text: str
    gold_cuis: frozenset[str]
    components: tuple[str, ...]

    @property
    def is_nil(self) -> bool:
        return not self.gold_cuis

    @property
    def is_composite(self) -> bool:
        return len(self.components) > 1


def make_record(source_id: str, raw_text: str, gold_cuis) -> MentionRecord:
    """Build a record with normalization and composite splitting applied."""
    normalized = normalize(raw_text)
    if not normalized:
        raise ValueError(f"mention {source_id!r} is empty after normalization")
    return MentionRecord(
        source_id=source_id,
        raw_text=raw_text,
        normalized_text=normalized,
        gold_cuis=frozenset(gold_cuis),
        components=tuple(split_composite(normalized)),
    )


@dataclass(frozen=True)
class Corpus:
    split: str
    records: tuple[MentionRecord, ...]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}, expected one of {SPLITS}")

    def __len__(self) -> int:
        return len(self.records)


def load_corpus(path: str, split: str) -> Corpus:
    records = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(path, line_no, f"expected 3 columns, got {len(cols)}")
            source_id, raw_text, cui_field = (c.strip() for c in cols)
            if cui_field == NIL_LITERAL:
                gold = frozenset()
            else:
                gold = frozenset(c.strip() for c in cui_field.split("|") if c.strip())
                if not gold:
                    raise ParseError(path, line_no, "empty CUI column (use the literal 'nil')")
            try:
                records.append(make_record(source_id, raw_text, gold))
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from exc
    return Corpus(split=split, records=tuple(records))


def save_corpus(corpus: Corpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in corpus.records:
            cuis = "|".join(sorted(rec.gold_cuis)) if rec.gold_cuis else NIL_LITERAL
            f.write(f"{rec.source_id}\t{rec.raw_text}\t{cuis}\n")


def refine(test: Corpus, train: Corpus | None = None) -> Corpus:
    """Drop duplicate mentions and, when `train` is given, train/test overlaps.

    Duplicates are judged on normalized text; the first occurrence survives
    and record order is preserved.
    """
    train_texts = {r.normalized_text for r in train.records} if train else set()
    seen: set[str] = set()
    kept = []
    for rec in test.records:
        if rec.normalized_text in train_texts or rec.normalized_text in seen:
            continue
        seen.add(rec.normalized_text)
        kept.append(rec)
    return replace(test, records=tuple(kept))


def resample_dev_test(pool: Corpus, n_dev: int, seed: int) -> tuple[Corpus, Corpus]:
    """Seeded draw of an n_dev-record dev split; the rest becomes the test split.

    Mirrors the tuning protocol of drawing a fixed-size dev sample from an
    annotated pool, repeated across seeds.
    """
    if n_dev >= len(pool.records):
        raise ValueError(f"n_dev={n_dev} must be smaller than the pool ({len(pool.records)})")
    rng = random.Random(derive_seed("dev-resample", seed))
    indices = list(range(len(pool.records)))
    rng.shuffle(indices)
    dev_idx = sorted(indices[:n_dev])
    test_idx = sorted(indices[n_dev:])
    dev = Corpus(split="dev", records=tuple(pool.records[i] for i in dev_idx))
    test = Corpus(split="test", records=tuple(pool.records[i] for i in test_idx))
    return dev, test
