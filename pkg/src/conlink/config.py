"""Declarative run configuration for the CLI pipeline.

A run file is JSON; unknown keys are rejected so typos fail loudly, and every
command echoes its resolved configuration into its outputs. All randomness in
a run flows from the single top-level seed.

    {
      "seed": 0,
      "terminology": "term.tsv",
      "train_corpus": "train.tsv",
      "dev_corpus": "dev.tsv",
      "test_corpus": "test.tsv",
      "out_dir": "runs/demo",
      "training": {"strategy": "random", "epochs": 20, "batch_size": 48,
                   "learning_rate": 0.01, "margin": 1.0, "distance": "euclidean",
                   "n_pos": 30, "n_neg": 5, "k_par": 5, "k_nn": 20, "k_sib": 5,
                   "dim": 64, "buckets": 65536},
      "threshold": {"strategy": "weighted", "complement_weights": false},
      "eval": {"k": [1, 5], "nil_mode": "in_kb_only", "refined": false}
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import ValidationError
from .evaluate import EvalConfig
from .metric import DistanceKind, TripletLossParams
from .nilgate import ThresholdStrategy
from .sampler import SamplingStrategy
from .trainer import TrainConfig

_TOP_KEYS = {
    "seed",
    "terminology",
    "train_corpus",
    "dev_corpus",
    "test_corpus",
    "out_dir",
    "training",
    "threshold",
    "eval",
}
_TRAINING_KEYS = {
    "strategy",
    "epochs",
    "batch_size",
    "learning_rate",
    "margin",
    "distance",
    "n_pos",
    "n_neg",
    "k_par",
    "k_nn",
    "k_sib",
    "dim",
    "buckets",
}
_THRESHOLD_KEYS = {"strategy", "complement_weights"}
_EVAL_KEYS = {"k", "nil_mode", "refined"}


def _reject_unknown(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValidationError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass
class RunConfig:
    seed: int = 0
    terminology: str | None = None
    train_corpus: str | None = None
    dev_corpus: str | None = None
    test_corpus: str | None = None
    out_dir: str = "."
    training: TrainConfig = field(default_factory=TrainConfig)
    threshold_strategy: ThresholdStrategy = ThresholdStrategy.WEIGHTED
    threshold_complement: bool = False
    eval: EvalConfig = field(default_factory=EvalConfig)

    # -- artifact paths ------------------------------------------------------

    def out_path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    @property
    def checkpoint_path(self) -> str:
        return self.out_path("checkpoint.clnk")

    @property
    def train_report_path(self) -> str:
        return self.out_path("train_report.json")

    @property
    def index_path(self) -> str:
        return self.out_path("index.cidx")

    @property
    def threshold_path(self) -> str:
        return self.out_path("threshold.json")

    @property
    def eval_report_path(self) -> str:
        return self.out_path("eval_report.json")

    def to_dict(self) -> dict:
        """Resolved config for echoing into outputs.

        Input paths are reduced to basenames and the output directory is
        omitted, so reports from runs in different directories (or machines)
        stay byte-comparable.
        """

        def base(p):
            return os.path.basename(p) if p else None

        return {
            "seed": self.seed,
            "terminology": base(self.terminology),
            "train_corpus": base(self.train_corpus),
            "dev_corpus": base(self.dev_corpus),
            "test_corpus": base(self.test_corpus),
            "training": self.training.to_dict(),
            "threshold": {
                "strategy": self.threshold_strategy.value,
                "complement_weights": self.threshold_complement,
            },
            "eval": {
                "k": list(self.eval.ks),
                "nil_mode": self.eval.nil_mode,
                "refined": self.eval.refined,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str = ".") -> "RunConfig":
        _reject_unknown(raw, _TOP_KEYS, "run-config")
        seed = int(raw.get("seed", 0))

        tr = dict(raw.get("training", {}))
        _reject_unknown(tr, _TRAINING_KEYS, "training")
        try:
            strategy = SamplingStrategy(
                kind=tr.get("strategy", "random"),
                k_par=int(tr.get("k_par", 5)),
                k_nn=int(tr.get("k_nn", 20)),
                k_sib=int(tr.get("k_sib", 5)),
            )
            loss = TripletLossParams(
                margin=float(tr.get("margin", 1.0)),
                distance=DistanceKind(tr.get("distance", "euclidean")),
            )
            training = TrainConfig(
                strategy=strategy,
                epochs=int(tr.get("epochs", 20)),
                batch_size=int(tr.get("batch_size", 48)),
                learning_rate=float(tr.get("learning_rate", 1e-2)),
                loss=loss,
                seed=seed,
                n_pos=int(tr.get("n_pos", 30)),
                n_neg=int(tr.get("n_neg", 5)),
                dim=int(tr.get("dim", 64)),
                buckets=int(tr.get("buckets", 1 << 16)),
            )
        except ValueError as exc:
            raise ValidationError(f"bad training config: {exc}") from exc

        th = dict(raw.get("threshold", {}))
        _reject_unknown(th, _THRESHOLD_KEYS, "threshold")
        try:
            threshold_strategy = ThresholdStrategy(th.get("strategy", "weighted"))
        except ValueError as exc:
            raise ValidationError(f"bad threshold strategy: {exc}") from exc

        ev = dict(raw.get("eval", {}))
        _reject_unknown(ev, _EVAL_KEYS, "eval")
        ks = ev.get("k", [1])
        if isinstance(ks, int):
            ks = [ks]
        try:
            eval_cfg = EvalConfig(
                ks=tuple(int(k) for k in ks),
                nil_mode=ev.get("nil_mode", "in_kb_only"),
                refined=bool(ev.get("refined", False)),
            )
        except ValueError as exc:
            raise ValidationError(f"bad eval config: {exc}") from exc

        def _path(key):
            value = raw.get(key)
            if value is None:
                return None
            return value if os.path.isabs(value) else os.path.join(base_dir, value)

        out_dir = raw.get("out_dir", ".")
        return cls(
            seed=seed,
            terminology=_path("terminology"),
            train_corpus=_path("train_corpus"),
            dev_corpus=_path("dev_corpus"),
            test_corpus=_path("test_corpus"),
            out_dir=out_dir if os.path.isabs(out_dir) else os.path.join(base_dir, out_dir),
            training=training,
            threshold_strategy=threshold_strategy,
            threshold_complement=bool(th.get("complement_weights", False)),
            eval=eval_cfg,
        )

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: run config must be a JSON object")
        return cls.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ValidationError(f"run config is missing required paths: {missing}")
