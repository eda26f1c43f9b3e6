"""Triplet sampling: (mention, positive name, negative name) batches.

Four strategies:

  random               - positives from the gold CUIs' synonym names,
                         negatives uniform over the rest of the vocabulary
  random+parents       - random, plus k_par parent names in the positive pool
  resampling           - hard negatives mined with a model snapshot: among the
                         k_nn nearest names, every non-gold name ranked above
                         the best gold name
  resampling+siblings  - resampling, plus k_sib sibling names as negatives

Every emitted negative has a CUI outside the mention's gold set; parent names
used as positives are tagged so evaluation never treats them as gold.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Corpus, MentionRecord
from .encoder import NGramEncoder
from .errors import SkipRecord
from .index import build_index
from .metric import DistanceKind, distance
from .terminology import ConceptName, Terminology
from .util import derive_seed

STRATEGY_KINDS = ("random", "random+parents", "resampling", "resampling+siblings")


@dataclass(frozen=True)
class SamplingStrategy:
    kind: str = "random"
    k_par: int = 5
    k_nn: int = 20
    k_sib: int = 5

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}, expected one of {STRATEGY_KINDS}")
        if not 1 <= self.k_par <= 5:
            raise ValueError("k_par must be in [1, 5]")
        if self.k_nn < 1:
            raise ValueError("k_nn must be >= 1")
        if not 1 <= self.k_sib <= 5:
            raise ValueError("k_sib must be in [1, 5]")

    @property
    def uses_mining(self) -> bool:
        return self.kind in ("resampling", "resampling+siblings")


@dataclass(frozen=True)
class Triple:
    mention: str
    positive: ConceptName
    negative: ConceptName
    parent_positive: bool = False


@dataclass
class TripletBatch:
    triples: list[Triple]

    def __len__(self) -> int:
        return len(self.triples)


@dataclass
class MinedSample:
    """Per-record mining output: gold names closest-first, plus hard negatives."""

    positives: list[ConceptName]
    hard_negatives: list[ConceptName]


def _gold_pool(t: Terminology, rec: MentionRecord) -> list[ConceptName]:
    present = sorted(c for c in rec.gold_cuis if t.has(c))
    if not present:
        raise SkipRecord(f"no gold CUI of {rec.source_id!r} exists in the terminology")
    return [n for cui in present for n in t.names_of(cui)]


def _draw_positives(rng: random.Random, pool: list[ConceptName], n_pos: int) -> list[ConceptName]:
    if len(pool) >= n_pos:
        return rng.sample(pool, n_pos)
    return [rng.choice(pool) for _ in range(n_pos)]


def _draw_negatives(
    rng: random.Random, t: Terminology, gold: frozenset, n_neg: int
) -> list[ConceptName]:
    """Distinct uniform draws from names whose CUI is outside the gold set.

    Rejection sampling: the gold names are a sliver of the vocabulary, so a
    redraw is rare and the cost stays O(n_neg) rather than a full scan. Falls
    back to an explicit scan for tiny vocabularies.
    """
    names = t.names
    chosen: list[ConceptName] = []
    seen: set[int] = set()
    attempts = 0
    limit = 30 * (n_neg + 1)
    while len(chosen) < n_neg and attempts < limit:
        attempts += 1
        i = rng.randrange(len(names))
        if i in seen or names[i].cui in gold:
            continue
        seen.add(i)
        chosen.append(names[i])
    if len(chosen) < n_neg:
        complement = [n for i, n in enumerate(names) if i not in seen and n.cui not in gold]
        if not complement and not chosen:
            raise SkipRecord("no negative names available")
        extra = rng.sample(complement, min(n_neg - len(chosen), len(complement)))
        chosen.extend(extra)
    return chosen


def _cross(
    mention: str,
    positives: list[tuple[ConceptName, bool]],
    negatives: list[ConceptName],
    cap: int,
    seed: int,
) -> TripletBatch:
    triples = [
        Triple(mention, pos, neg, parent_positive=is_parent)
        for pos, is_parent in positives
        for neg in negatives
    ]
    if len(triples) > cap:
        triples = random.Random(derive_seed("cap", seed)).sample(triples, cap)
    return TripletBatch(triples)


def sample_random(
    t: Terminology, rec: MentionRecord, n_pos: int = 30, n_neg: int = 5, seed: int = 0
) -> TripletBatch:
    """Gold-synonym positives paired with uniform random negatives."""
    pos_pool = _gold_pool(t, rec)
    rng = random.Random(derive_seed("random", seed, rec.source_id))
    positives = _draw_positives(rng, pos_pool, n_pos)
    negatives = _draw_negatives(rng, t, rec.gold_cuis, n_neg)
    pairs = [(p, False) for p in positives]
    return _cross(rec.normalized_text, pairs, negatives, n_pos * n_neg, seed)


def sample_random_plus_parents(
    t: Terminology,
    rec: MentionRecord,
    n_pos: int = 30,
    n_neg: int = 5,
    k_par: int = 5,
    seed: int = 0,
) -> TripletBatch:
    """sample_random with k_par parent names added to the positive pool.

    Parent names are drawn with an independent derived seed, so a concept with
    no parents yields a batch identical to sample_random under the same seed.
    """
    pos_pool = _gold_pool(t, rec)
    rng = random.Random(derive_seed("random", seed, rec.source_id))
    positives = _draw_positives(rng, pos_pool, n_pos)
    negatives = _draw_negatives(rng, t, rec.gold_cuis, n_neg)

    present = sorted(c for c in rec.gold_cuis if t.has(c))
    parent_pool: list[ConceptName] = []
    seen: set[tuple[str, str]] = set()
    for cui in present:
        for parent in t.parent_cuis(cui):
            for name in t.names_of(parent):
                key = (name.cui, name.surface)
                if key not in seen:
                    seen.add(key)
                    parent_pool.append(name)
    parent_names = _take_seeded(parent_pool, k_par, derive_seed("parent-pick", seed, rec.source_id))

    pairs = [(p, False) for p in positives] + [(p, True) for p in parent_names]
    cap = (n_pos + k_par) * n_neg
    return _cross(rec.normalized_text, pairs, negatives, cap, seed)


def _take_seeded(pool: list[ConceptName], k: int, seed: int) -> list[ConceptName]:
    if len(pool) <= k:
        return list(pool)
    return random.Random(seed).sample(pool, k)


def mine_resampling(
    t: Terminology,
    corpus: Corpus,
    enc: NGramEncoder,
    kind: DistanceKind,
    k_nn: int = 20,
) -> list[MinedSample | None]:
    """Mine positives and hard negatives against a model snapshot.

    For each record: positives are the gold CUIs' names sorted by distance to
    the mention (closest first); hard negatives are the non-gold names among
    the k_nn nearest that rank strictly above the best-ranked gold name. A
    record whose gold is absent from the terminology maps to None.
    """
    ix = build_index(t, enc, kind)
    gold_rows: dict[str, list[int]] = {}
    for row, name in enumerate(ix.names):
        gold_rows.setdefault(name.cui, []).append(row)

    usable = [
        (i, rec)
        for i, rec in enumerate(corpus.records)
        if any(t.has(c) for c in rec.gold_cuis)
    ]
    mined: list[MinedSample | None] = [None] * len(corpus.records)
    if not usable:
        return mined
    queries = enc.encode_batch([rec.normalized_text for _, rec in usable])
    all_hits = ix.knn_batch(queries, k_nn)

    for (i, rec), query, hits in zip(usable, queries, all_hits):
        best_gold_rank = None
        for rank, (row, _) in enumerate(hits, start=1):
            if ix.names[row].cui in rec.gold_cuis:
                best_gold_rank = rank
                break
        hard = []
        for rank, (row, _) in enumerate(hits, start=1):
            if best_gold_rank is not None and rank >= best_gold_rank:
                break
            name = ix.names[row]
            if name.cui not in rec.gold_cuis:
                hard.append(name)

        present = sorted(c for c in rec.gold_cuis if t.has(c))
        rows = [r for cui in present for r in gold_rows[cui]]
        scored = sorted((distance(ix.kind, ix.matrix[r], query), r) for r in rows)
        positives = [ix.names[r] for _, r in scored]
        mined[i] = MinedSample(positives=positives, hard_negatives=hard)
    return mined


def sample_resampling(
    t: Terminology,
    rec: MentionRecord,
    mined: MinedSample,
    n_pos: int = 30,
    n_neg: int = 5,
    seed: int = 0,
) -> TripletBatch:
    """Mined-closest positive prepended to the random pool; hard negatives when
    available, otherwise fallback random negatives so the batch never starves."""
    pos_pool = _gold_pool(t, rec)
    rng = random.Random(derive_seed("random", seed, rec.source_id))
    positives = _draw_positives(rng, pos_pool, n_pos)
    fallback = _draw_negatives(rng, t, rec.gold_cuis, n_neg)

    if mined.positives:
        positives = [mined.positives[0]] + positives
    negatives = mined.hard_negatives if mined.hard_negatives else fallback
    pairs = [(p, False) for p in positives]
    return _cross(rec.normalized_text, pairs, negatives, n_pos * n_neg, seed)


def sample_resampling_plus_siblings(
    t: Terminology,
    rec: MentionRecord,
    mined: MinedSample,
    n_pos: int = 30,
    n_neg: int = 5,
    k_sib: int = 5,
    seed: int = 0,
) -> TripletBatch:
    """Resampling with k_sib sibling names appended to the negative pool."""
    pos_pool = _gold_pool(t, rec)
    rng = random.Random(derive_seed("random", seed, rec.source_id))
    positives = _draw_positives(rng, pos_pool, n_pos)
    fallback = _draw_negatives(rng, t, rec.gold_cuis, n_neg)

    present = sorted(c for c in rec.gold_cuis if t.has(c))
    sibling_pool: list[ConceptName] = []
    seen: set[tuple[str, str]] = set()
    for cui in present:
        for sib in t.sibling_cuis(cui):
            if sib in rec.gold_cuis:
                continue
            for name in t.names_of(sib):
                key = (name.cui, name.surface)
                if key not in seen:
                    seen.add(key)
                    sibling_pool.append(name)
    siblings = _take_seeded(sibling_pool, k_sib, derive_seed("sibling-pick", seed, rec.source_id))

    if mined.positives:
        positives = [mined.positives[0]] + positives
    negatives = (mined.hard_negatives if mined.hard_negatives else fallback) + siblings
    pairs = [(p, False) for p in positives]
    return _cross(rec.normalized_text, pairs, negatives, n_pos * n_neg, seed)
