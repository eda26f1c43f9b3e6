"""Out-of-KB (*nil*) detection via fitted distance thresholds.

A mention is declared out of the knowledge base when its nearest candidate
lies at a distance strictly greater than the threshold. Three fitting
strategies over a dev set:

  min_fp   - minimum nearest-distance over records that have no concept in
             the terminology (the model would still map them somewhere)
  max_tp   - maximum nearest-distance over records whose top-1 CUI is correct
  weighted - w * t_min_fp + (1 - w) * t_max_tp with w = n_tp / (n_tp + n_fp)

Threshold JSON:
    {"strategy": "weighted", "value": 0.8, "n_tp": 3, "n_fp": 1,
     "t_min_fp": 0.9, "t_max_tp": 0.5}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .corpus import Corpus
from .encoder import NGramEncoder
from .errors import ValidationError
from .index import LinkResult, VectorIndex, link_batch


class ThresholdStrategy(str, Enum):
    MIN_FP = "min_fp"
    MAX_TP = "max_tp"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class NilThreshold:
    value: float
    strategy: ThresholdStrategy
    n_tp: int
    n_fp: int
    t_min_fp: float | None
    t_max_tp: float | None

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "value": self.value,
            "n_tp": self.n_tp,
            "n_fp": self.n_fp,
            "t_min_fp": self.t_min_fp,
            "t_max_tp": self.t_max_tp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NilThreshold":
        return cls(
            value=float(data["value"]),
            strategy=ThresholdStrategy(data["strategy"]),
            n_tp=int(data["n_tp"]),
            n_fp=int(data["n_fp"]),
            t_min_fp=None if data.get("t_min_fp") is None else float(data["t_min_fp"]),
            t_max_tp=None if data.get("t_max_tp") is None else float(data["t_max_tp"]),
        )


def save_threshold(th: NilThreshold, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(th.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def load_threshold(path: str) -> NilThreshold:
    with open(path, encoding="utf-8") as f:
        return NilThreshold.from_dict(json.load(f))


def collect_distance_sets(
    ix: VectorIndex, enc: NGramEncoder, dev: Corpus
) -> tuple[list[float], list[float]]:
    """Nearest-candidate distances of dev records, split into (tp, fp).

    TP: in-KB records whose top-1 CUI is among the gold CUIs. FP: records with
    no gold concept at all (the model still maps them to the nearest name).
    Composite records are excluded; component-to-CUI assignment is undefined
    when fitting a single scalar per record.
    """
    singles = [rec for rec in dev.records if not rec.is_composite]
    results = link_batch(ix, enc, singles, k=1)
    tp: list[float] = []
    fp: list[float] = []
    for rec, per_comp in zip(singles, results):
        cui, dist = per_comp[0].nearest
        if rec.is_nil:
            fp.append(dist)
        elif cui in rec.gold_cuis:
            tp.append(dist)
    return tp, fp


def fit_from_distances(
    tp: list[float],
    fp: list[float],
    strategy: ThresholdStrategy,
    complement_weights: bool = False,
) -> NilThreshold:
    """Pure threshold arithmetic over precollected TP/FP distance sets."""
    t_min_fp = min(fp) if fp else None
    t_max_tp = max(tp) if tp else None

    if strategy == ThresholdStrategy.MIN_FP:
        if t_min_fp is None:
            raise ValidationError("min_fp requires at least one out-of-KB dev record")
        value = t_min_fp
    elif strategy == ThresholdStrategy.MAX_TP:
        if t_max_tp is None:
            raise ValidationError("max_tp requires at least one correctly linked dev record")
        value = t_max_tp
    else:
        if t_min_fp is None:
            raise ValidationError("weighted requires at least one out-of-KB dev record")
        if t_max_tp is None:
            raise ValidationError("weighted requires at least one correctly linked dev record")
        w = len(tp) / (len(tp) + len(fp))
        if complement_weights:
            w = 1.0 - w
        value = w * t_min_fp + (1.0 - w) * t_max_tp

    return NilThreshold(
        value=value,
        strategy=strategy,
        n_tp=len(tp),
        n_fp=len(fp),
        t_min_fp=t_min_fp,
        t_max_tp=t_max_tp,
    )


def fit_threshold(
    ix: VectorIndex,
    enc: NGramEncoder,
    dev: Corpus,
    strategy: ThresholdStrategy,
    complement_weights: bool = False,
) -> NilThreshold:
    tp, fp = collect_distance_sets(ix, enc, dev)
    return fit_from_distances(tp, fp, strategy, complement_weights=complement_weights)


def apply_gate(res: LinkResult | None, th: NilThreshold) -> LinkResult | None:
    """Replace the result with a nil verdict (None) when the nearest candidate
    is strictly farther than the threshold; the ranking is never reordered."""
    if res is None or not res.ranked:
        return None
    if res.nearest[1] > th.value:
        return None
    return res
