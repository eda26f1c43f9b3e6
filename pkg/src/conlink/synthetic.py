"""Seeded synthetic benchmarks: a learnable taxonomy and an out-of-KB pool.

The taxonomy is built to be confusable for an untrained trigram model but
separable by a trained one: concepts come in families that share a base stem
and differ only in a short distinctive tail, synonyms decorate the stem with
words drawn from a shared pool, and mentions are synonyms with one or two
random character edits.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Corpus, make_record
from .terminology import ConceptName, Terminology
from .util import derive_seed

_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
_VOWELS = "aeiou"
_CONSONANTS = "bcdfghklmnprstvz"


def _word(rng: random.Random, length: int) -> str:
    """Pronounceable-ish lowercase word: alternating consonant/vowel runs."""
    out = []
    use_vowel = rng.random() < 0.3
    while len(out) < length:
        out.append(rng.choice(_VOWELS if use_vowel else _CONSONANTS))
        use_vowel = not use_vowel
    return "".join(out)


def _edit(rng: random.Random, text: str, n_edits: int) -> str:
    """Apply n random character edits (substitute/delete/insert), keeping the
    result non-empty and free of leading/trailing/double spaces."""
    chars = list(text)
    for _ in range(n_edits):
        positions = [i for i, c in enumerate(chars) if c != " "]
        if not positions:
            break
        i = rng.choice(positions)
        op = rng.random()
        if op < 0.6:
            chars[i] = rng.choice(_ALPHABET.replace(chars[i], ""))
        elif op < 0.8 and len(positions) > 3:
            del chars[i]
        else:
            chars.insert(i, rng.choice(_ALPHABET))
    result = " ".join("".join(chars).split())
    return result if result else text


@dataclass(frozen=True)
class TaxonomyShape:
    n_roots: int = 10
    n_mids: int = 40
    n_leaves: int = 150
    synonyms_per_concept: int = 5
    base_len: int = 6
    tail_len: int = 2
    n_suffixes: int = 8
    suffix_len: int = 3
    two_edit_prob: float = 0.55
    family_stems: bool = True

    @property
    def n_concepts(self) -> int:
        return self.n_roots + self.n_mids + self.n_leaves


def synthetic_taxonomy(seed: int, shape: TaxonomyShape = TaxonomyShape()) -> Terminology:
    """Three-level concept hierarchy with family-confusable synonyms.

    Concepts under the same mid-level node share a base stem and differ only
    in a short tail, so sibling names sit one or two characters apart; each
    concept's synonyms append salt-form-style suffixes from a shared pool.
    The result is hard for raw trigram overlap but separable by a model that
    learns to weight the tail trigrams.
    """
    rng = random.Random(derive_seed("taxonomy", seed))
    roots = [f"C{i:03d}" for i in range(shape.n_roots)]
    mids = [f"C{i:03d}" for i in range(shape.n_roots, shape.n_roots + shape.n_mids)]
    leaves = [
        f"C{i:03d}"
        for i in range(shape.n_roots + shape.n_mids, shape.n_concepts)
    ]

    parents: dict[str, frozenset[str]] = {}
    for mid in mids:
        parents[mid] = frozenset({rng.choice(roots)})
    leaf_primary_mid: dict[str, str] = {}
    for leaf in leaves:
        primary = rng.choice(mids)
        leaf_primary_mid[leaf] = primary
        extra = {rng.choice(mids)} if rng.random() < 0.3 else set()
        parents[leaf] = frozenset({primary} | extra)

    # one base stem per mid-rooted family; roots get standalone stems
    base_of_mid = {mid: _word(rng, shape.base_len) for mid in mids}
    stems: dict[str, str] = {}
    used_stems: set[str] = set()
    for cui in roots + mids + leaves:
        while True:
            if shape.family_stems and cui in mids:
                stem = base_of_mid[cui] + _word(rng, shape.tail_len)
            elif shape.family_stems and cui in leaf_primary_mid:
                stem = base_of_mid[leaf_primary_mid[cui]] + _word(rng, shape.tail_len)
            else:
                stem = _word(rng, shape.base_len + shape.tail_len)
            if stem not in used_stems:
                used_stems.add(stem)
                stems[cui] = stem
                break

    suffixes = [_word(rng, shape.suffix_len) for _ in range(shape.n_suffixes)]

    names: list[ConceptName] = []
    used_surfaces: set[str] = set()
    for cui in roots + mids + leaves:
        made = 0
        while made < shape.synonyms_per_concept:
            surface = stems[cui]
            if made > 0:
                surface += rng.choice(suffixes)
            if surface in used_surfaces:
                surface = f"{surface}{rng.choice(_ALPHABET)}"
                if surface in used_surfaces:
                    continue
            used_surfaces.add(surface)
            names.append(ConceptName(surface=surface, cui=cui))
            made += 1
    return Terminology(names, parents)


@dataclass
class SyntheticBenchmark:
    terminology: Terminology
    train: Corpus
    dev: Corpus
    test: Corpus


def synthetic_benchmark(
    seed: int,
    shape: TaxonomyShape = TaxonomyShape(),
    split_fractions: tuple[float, float] = (0.7, 0.1),
    mentions_per_synonym: int = 3,
) -> SyntheticBenchmark:
    """Mentions are synonyms with 1-2 random character edits, split 70/10/20.

    Several independent edit draws per synonym keep the edit noise record-
    private while the concept signal repeats. The split is stratified: most of
    each concept's mentions land in train so no concept is entirely unseen,
    and the remainder is drawn globally to hit the exact split sizes.
    """
    t = synthetic_taxonomy(seed, shape)
    rng = random.Random(derive_seed("mentions", seed))
    per_concept: dict[str, list] = {}
    i = 0
    for name in t.names:
        for _ in range(mentions_per_synonym):
            n_edits = 2 if rng.random() < shape.two_edit_prob else 1
            mention = _edit(rng, name.surface, n_edits)
            rec = make_record(f"M{i:05d}", mention, {name.cui})
            per_concept.setdefault(name.cui, []).append(rec)
            i += 1

    n = len(t.names) * mentions_per_synonym
    n_train = int(n * split_fractions[0])
    n_dev = int(n * split_fractions[1])
    syn = shape.synonyms_per_concept * mentions_per_synonym
    base_train = max(1, (n_train * syn) // n - 1) if syn > 1 else 0

    train, leftovers = [], []
    for cui in sorted(per_concept):
        recs = list(per_concept[cui])
        rng.shuffle(recs)
        train.extend(recs[:base_train])
        leftovers.extend(recs[base_train:])
    rng.shuffle(leftovers)
    need = n_train - len(train)
    train.extend(leftovers[:need])
    dev = leftovers[need : need + n_dev]
    test = leftovers[need + n_dev :]
    rng.shuffle(train)
    return SyntheticBenchmark(
        terminology=t,
        train=Corpus(split="train", records=tuple(train)),
        dev=Corpus(split="dev", records=tuple(dev)),
        test=Corpus(split="test", records=tuple(test)),
    )


def synthetic_nil_benchmark(
    seed: int,
    n_records: int = 500,
    nil_rate: float = 0.26,
    near_miss_frac: float = 0.35,
    shape: TaxonomyShape = TaxonomyShape(
        n_roots=6, n_mids=24, n_leaves=90, family_stems=False
    ),
) -> tuple[Terminology, Corpus]:
    """Out-of-KB benchmark pool: in-KB mentions are light edits of synonyms;
    nil mentions are either heavy edits of synonyms (near misses) or unrelated
    made-up names. Returns (terminology, pooled corpus) for dev/test resampling."""
    t = synthetic_taxonomy(seed, shape)
    rng = random.Random(derive_seed("nil-pool", seed))
    surfaces = {n.surface for n in t.names}

    records = []
    n_nil = int(round(n_records * nil_rate))
    for i in range(n_records):
        sid = f"P{i:05d}"
        if i < n_nil:
            if rng.random() < near_miss_frac:
                base = rng.choice(t.names).surface
                mention = _edit(rng, base, rng.randint(5, 7))
                while mention in surfaces:
                    mention = _edit(rng, base, rng.randint(5, 7))
            else:
                mention = _word(rng, rng.randint(6, 10))
                if rng.random() < 0.5:
                    mention = f"{_word(rng, rng.randint(4, 7))} {mention}"
                while mention in surfaces:
                    mention = _word(rng, rng.randint(6, 10))
            records.append(make_record(sid, mention, set()))
        else:
            name = rng.choice(t.names)
            mention = _edit(rng, name.surface, 1 if rng.random() < 0.75 else 2)
            records.append(make_record(sid, mention, {name.cui}))
    rng.shuffle(records)
    return t, Corpus(split="test", records=tuple(records))
