"""Accuracy@k scoring for linked mentions, including composite and nil cases.

A single-component in-KB record is correct at k when any gold CUI appears in
its top-k candidates. A composite record is correct when every component
matches greedily: scanning components in order, each must find a gold CUI in
its top-k that no earlier component has already consumed. A nil-gold record
(full_set mode) is correct only when the prediction is nil; in_kb_only mode
drops nil-gold records from the total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import Corpus, MentionRecord, refine
from .encoder import NGramEncoder
from .index import LinkResult, VectorIndex, link_batch
from .nilgate import NilThreshold, apply_gate
from .terminology import Terminology

NIL_MODES = ("in_kb_only", "full_set")


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple[int, ...] = (1,)
    nil_mode: str = "in_kb_only"
    refined: bool = False

    def __post_init__(self):
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValueError("every k must be >= 1")
        if self.nil_mode not in NIL_MODES:
            raise ValueError(f"nil_mode must be one of {NIL_MODES}")


@dataclass
class Adjudication:
    source_id: str
    text: str
    kind: str  # "in_kb" | "nil"
    correct: dict[int, bool]
    predicted: list[str | None]  # top-1 CUI per component, None for nil


@dataclass
class EvalReport:
    accuracy: dict[int, float]
    total: int
    correct: dict[int, int]
    nil_gold: int
    nil_predicted: int
    skipped: int
    adjudications: list[Adjudication] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": {str(k): v for k, v in sorted(self.accuracy.items())},
            "counts": {
                "total": self.total,
                "correct": {str(k): v for k, v in sorted(self.correct.items())},
                "nil_gold": self.nil_gold,
                "nil_predicted": self.nil_predicted,
                "skipped": self.skipped,
            },
        }


def _record_correct_at_k(rec: MentionRecord, preds: list[LinkResult | None], k: int) -> bool:
    if rec.is_nil:
        return all(p is None for p in preds)
    available = set(rec.gold_cuis)
    for res in preds:
        if res is None:
            return False
        matched = None
        for cui, _ in res.ranked[:k]:
            if cui in available:
                matched = cui
                break
        if matched is None:
            return False
        available.discard(matched)
    return True


def acc_at_k(
    preds: list[list[LinkResult | None]],
    golds: list[MentionRecord],
    ks: tuple[int, ...] = (1,),
    nil_mode: str = "in_kb_only",
    known_cuis: set[str] | None = None,
) -> EvalReport:
    """Score per-component predictions against gold records.

    `preds[i]` holds one LinkResult (or None for a nil verdict) per component
    of `golds[i]`. When `known_cuis` is given, in-KB records whose gold set
    has no overlap with it are counted as skipped rather than wrong.
    """
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} gold records")
    if nil_mode not in NIL_MODES:
        raise ValueError(f"nil_mode must be one of {NIL_MODES}")

    total = 0
    correct = {k: 0 for k in ks}
    nil_gold = 0
    nil_predicted = 0
    skipped = 0
    adjudications = []

    for rec, per_comp in zip(golds, preds):
        if len(per_comp) != len(rec.components):
            raise ValueError(
                f"record {rec.source_id!r}: {len(per_comp)} predictions for "
                f"{len(rec.components)} components"
            )
        predicted_top = [res.ranked[0][0] if res and res.ranked else None for res in per_comp]

        if rec.is_nil:
            nil_gold += 1
        if all(p is None for p in per_comp):
            nil_predicted += 1

        # excluded records are counted but carry no adjudication: the
        # adjudication list matches the scored total one-to-one
        if not rec.is_nil and known_cuis is not None and not (rec.gold_cuis & known_cuis):
            skipped += 1
            continue
        if rec.is_nil and nil_mode == "in_kb_only":
            continue

        total += 1
        verdicts = {k: _record_correct_at_k(rec, per_comp, k) for k in ks}
        for k, ok in verdicts.items():
            if ok:
                correct[k] += 1
        adjudications.append(
            Adjudication(
                rec.source_id,
                rec.normalized_text,
                "nil" if rec.is_nil else "in_kb",
                verdicts,
                predicted_top,
            )
        )

    accuracy = {k: (correct[k] / total if total else 0.0) for k in ks}
    return EvalReport(
        accuracy=accuracy,
        total=total,
        correct=correct,
        nil_gold=nil_gold,
        nil_predicted=nil_predicted,
        skipped=skipped,
        adjudications=adjudications,
    )


def evaluate_pipeline(
    t: Terminology,
    enc: NGramEncoder,
    ix: VectorIndex,
    th: NilThreshold | None,
    test: Corpus,
    cfg: EvalConfig,
    train: Corpus | None = None,
    allow_mismatch: bool = False,
) -> EvalReport:
    """Link every test record, gate with the threshold if given, and score."""
    if cfg.refined:
        test = refine(test, train)
    k_max = max(cfg.ks)
    linked = link_batch(ix, enc, list(test.records), k=k_max, allow_mismatch=allow_mismatch)
    preds: list[list[LinkResult | None]] = []
    for per_comp in linked:
        if th is not None:
            preds.append([apply_gate(res, th) for res in per_comp])
        else:
            preds.append(list(per_comp))
    return acc_at_k(preds, list(test.records), ks=cfg.ks, nil_mode=cfg.nil_mode, known_cuis=t.cuis)


def nil_threshold_sweep(
    t: Terminology,
    enc: NGramEncoder,
    ix: VectorIndex,
    pool: Corpus,
    n_dev: int = 100,
    repeats: int = 20,
    seed: int = 0,
    ks: tuple[int, ...] = (1,),
) -> dict[str, list[float]]:
    """Threshold-selection protocol: draw a dev sample, fit each strategy on
    it, and score full-set accuracy on the remaining records; repeated across
    seeded resamples. Returns per-strategy accuracy lists (one per repeat)."""
    from .corpus import resample_dev_test
    from .nilgate import ThresholdStrategy, fit_threshold

    results: dict[str, list[float]] = {s.value: [] for s in ThresholdStrategy}
    cfg = EvalConfig(ks=ks, nil_mode="full_set")
    for rep in range(repeats):
        dev, test = resample_dev_test(pool, n_dev=n_dev, seed=seed * 1_000_003 + rep)
        for strategy in ThresholdStrategy:
            th = fit_threshold(ix, enc, dev, strategy)
            report = evaluate_pipeline(t, enc, ix, th, test, cfg)
            results[strategy.value].append(report.accuracy[ks[0]])
    return results


def write_report_json(report: EvalReport, path: str, config_echo: dict | None = None) -> None:
    payload = report.to_dict()
    if config_echo is not None:
        payload["config"] = config_echo
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_adjudications_tsv(report: EvalReport, path: str) -> None:
    """Per-record adjudication dump for error analysis."""
    ks = sorted({k for adj in report.adjudications for k in adj.correct})
    with open(path, "w", encoding="utf-8") as f:
        header = ["source_id", "text", "kind", "predicted"] + [f"correct@{k}" for k in ks]
        f.write("\t".join(header) + "\n")
        for adj in report.adjudications:
            predicted = "|".join(p if p is not None else "nil" for p in adj.predicted)
            row = [adj.source_id, adj.text, adj.kind, predicted]
            row += [str(adj.correct[k]).lower() if k in adj.correct else "-" for k in ks]
            f.write("\t".join(row) + "\n")


def format_report(report: EvalReport) -> str:
    lines = [
        f"records scored : {report.total}",
        f"nil gold       : {report.nil_gold}",
        f"nil predicted  : {report.nil_predicted}",
        f"skipped        : {report.skipped}",
    ]
    for k in sorted(report.accuracy):
        lines.append(f"acc@{k:<2}         : {report.accuracy[k]:.4f} ({report.correct[k]}/{report.total})")
    return "\n".join(lines)
