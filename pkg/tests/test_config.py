import json

import pytest

from conlink.config import RunConfig
from conlink.errors import ValidationError
from conlink.metric import DistanceKind
from conlink.nilgate import ThresholdStrategy


def _write(tmp_path, payload):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(payload))
    return str(p)


FULL = {
    "seed": 17,
    "terminology": "term.tsv",
    "train_corpus": "train.tsv",
    "dev_corpus": "dev.tsv",
    "test_corpus": "test.tsv",
    "out_dir": "out",
    "training": {
        "strategy": "resampling+siblings",
        "epochs": 4,
        "batch_size": 16,
        "learning_rate": 0.2,
        "margin": 0.25,
        "distance": "cosine",
        "n_pos": 6,
        "n_neg": 2,
        "k_par": 2,
        "k_nn": 10,
        "k_sib": 3,
        "dim": 16,
        "buckets": 4096,
    },
    "threshold": {"strategy": "min_fp", "complement_weights": True},
    "eval": {"k": [1, 5], "nil_mode": "full_set", "refined": True},
}


class TestLoading:
    def test_full_config(self, tmp_path):
        cfg = RunConfig.from_file(_write(tmp_path, FULL))
        assert cfg.seed == 17
        assert cfg.training.seed == 17
        assert cfg.training.strategy.kind == "resampling+siblings"
        assert cfg.training.loss.distance == DistanceKind.COSINE
        assert cfg.training.loss.margin == 0.25
        assert cfg.threshold_strategy == ThresholdStrategy.MIN_FP
        assert cfg.threshold_complement is True
        assert cfg.eval.ks == (1, 5)
        assert cfg.eval.refined is True

    def test_paths_resolve_relative_to_config(self, tmp_path):
        cfg = RunConfig.from_file(_write(tmp_path, FULL))
        assert cfg.terminology == str(tmp_path / "term.tsv")
        assert cfg.out_dir == str(tmp_path / "out")

    def test_defaults(self, tmp_path):
        cfg = RunConfig.from_file(_write(tmp_path, {}))
        assert cfg.seed == 0
        assert cfg.training.epochs == 20
        assert cfg.training.batch_size == 48
        assert cfg.training.learning_rate == 1e-2
        assert cfg.training.loss.margin == 1.0
        assert cfg.training.loss.distance == DistanceKind.EUCLIDEAN
        assert cfg.training.n_pos == 30 and cfg.training.n_neg == 5
        assert cfg.training.dim == 64 and cfg.training.buckets == 1 << 16
        assert cfg.threshold_strategy == ThresholdStrategy.WEIGHTED
        assert cfg.eval.ks == (1,)

    def test_unknown_top_key_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="learning_rte"):
            RunConfig.from_file(_write(tmp_path, {"learning_rte": 1}))

    def test_unknown_nested_key_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="epoochs"):
            RunConfig.from_file(_write(tmp_path, {"training": {"epoochs": 3}}))

    def test_bad_strategy_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            RunConfig.from_file(_write(tmp_path, {"training": {"strategy": "best"}}))

    def test_bad_json_rejected(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text("{not json")
        with pytest.raises(ValidationError, match="invalid JSON"):
            RunConfig.from_file(str(p))

    def test_non_object_rejected(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text("[1, 2]")
        with pytest.raises(ValidationError):
            RunConfig.from_file(str(p))

    def test_require_missing_paths(self, tmp_path):
        cfg = RunConfig.from_file(_write(tmp_path, {}))
        with pytest.raises(ValidationError, match="terminology"):
            cfg.require("terminology")

    def test_roundtrip_echo(self, tmp_path):
        cfg = RunConfig.from_file(_write(tmp_path, FULL))
        echoed = cfg.to_dict()
        assert echoed["training"]["strategy"]["kind"] == "resampling+siblings"
        assert echoed["threshold"] == {"strategy": "min_fp", "complement_weights": True}
        assert "out_dir" not in echoed
        assert echoed["eval"] == {"k": [1, 5], "nil_mode": "full_set", "refined": True}
