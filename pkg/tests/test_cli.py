import json
import os

import pytest

from conlink.cli import main

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("bench")
    code = main(["synth", "--out", str(d), "--seed", "0"])
    assert code == 0
    return str(d)


def _write_config(path, bench_dir, out_dir, **overrides):
    cfg = {
        "seed": 0,
        "terminology": os.path.join(bench_dir, "terminology.tsv"),
        "train_corpus": os.path.join(bench_dir, "train.tsv"),
        "dev_corpus": os.path.join(bench_dir, "dev.tsv"),
        "test_corpus": os.path.join(bench_dir, "test.tsv"),
        "out_dir": out_dir,
        "training": {
            "strategy": "random",
            "epochs": 2,
            "batch_size": 32,
            "learning_rate": 0.2,
            "margin": 0.25,
            "distance": "euclidean",
            "n_pos": 4,
            "n_neg": 2,
            "dim": 16,
            "buckets": 4096,
        },
        "threshold": {"strategy": "max_tp"},
        "eval": {"k": [1, 5], "nil_mode": "in_kb_only", "refined": True},
    }
    cfg.update(overrides)
    with open(path, "w") as f:
        json.dump(cfg, f)
    return path


def _pipeline(tmp_path, bench_dir, name):
    out_dir = str(tmp_path / name)
    cfg_path = _write_config(str(tmp_path / f"{name}.json"), bench_dir, out_dir)
    for cmd in (["ingest"], ["train"], ["index"], ["fit-threshold"], ["eval"]):
        code = main(cmd + ["--config", cfg_path])
        assert code == 0, f"{cmd} failed"
    code = main(["link", "--config", cfg_path, "--text", "some mention", "--k", "3"])
    assert code == 0
    return out_dir, cfg_path


class TestPipeline:
    def test_full_pipeline_byte_identical_across_runs(self, tmp_path, bench_dir):
        out_a, _ = _pipeline(tmp_path, bench_dir, "run_a")
        out_b, _ = _pipeline(tmp_path, bench_dir, "run_b")
        for artifact in ("checkpoint.clnk", "index.cidx", "threshold.json", "eval_report.json"):
            a = open(os.path.join(out_a, artifact), "rb").read()
            b = open(os.path.join(out_b, artifact), "rb").read()
            assert a == b, f"{artifact} differs between identical runs"

    def test_eval_report_matches_checked_in_golden(self, tmp_path, bench_dir):
        out_dir, _ = _pipeline(tmp_path, bench_dir, "run_golden")
        got = open(os.path.join(out_dir, "eval_report.json"), "rb").read()
        golden_path = os.path.join(DATA_DIR, "golden_eval_report.json")
        golden = open(golden_path, "rb").read()
        assert got == golden

    def test_ingest_prints_stats(self, tmp_path, bench_dir, capsys):
        out_dir = str(tmp_path / "ing")
        cfg = _write_config(str(tmp_path / "ing.json"), bench_dir, out_dir)
        code, out, _ = _run(capsys, "ingest", "--config", cfg)
        assert code == 0
        assert "terminology   : 200 concepts, 1000 names" in out
        assert "train" in out and "refined" in out

    def test_link_exact_name_ranks_its_cui_first(self, tmp_path, bench_dir, capsys):
        out_dir = str(tmp_path / "lnk")
        cfg = _write_config(str(tmp_path / "lnk.json"), bench_dir, out_dir)
        assert main(["train", "--config", cfg]) == 0
        assert main(["index", "--config", cfg]) == 0
        capsys.readouterr()
        with open(os.path.join(bench_dir, "terminology.tsv")) as f:
            first = next(line for line in f if line.strip() and not line.startswith("#"))
        cui, surface = first.rstrip("\n").split("\t")[:2]
        code, out, _ = _run(capsys, "link", "--config", cfg, "--text", surface, "--k", "2")
        assert code == 0
        rank1 = out.splitlines()[0].split("\t")
        assert rank1[3] == cui
        assert float(rank1[4]) == 0.0


class TestDrugFixture:
    """End-to-end on a hand-written drug dictionary: train, index, link."""

    @pytest.fixture
    def drug_world(self, tmp_path):
        term = tmp_path / "drugs.tsv"
        term.write_text(
            "DB01050\tIbuprofen\n"
            "DB01050\tibuprofen lysine\n"
            "DB00945\tAspirin\n"
            "DB00945\tacetylsalicylic acid\n"
            "DB01101\tCapecitabine\n"
            "DB11730\tRibociclib\n"
            "DB09035\tNivolumab\n"
        )
        corpus = tmp_path / "train.tsv"
        corpus.write_text(
            "N1\tIbuprofen 400 mg capsule\tDB01050\n"
            "N2\tibuprofen tablets\tDB01050\n"
            "N3\tAspirin 100 mg\tDB00945\n"
            "N4\tacetylsalicylic acid tab\tDB00945\n"
            "N5\tCapecitabine oral\tDB01101\n"
            "N6\tRibociclib 200mg\tDB11730\n"
            "N7\tNivolumab infusion\tDB09035\n"
        )
        cfg_path = str(tmp_path / "run.json")
        with open(cfg_path, "w") as f:
            json.dump(
                {
                    "seed": 1,
                    "terminology": str(term),
                    "train_corpus": str(corpus),
                    "out_dir": str(tmp_path / "out"),
                    "training": {
                        "strategy": "random",
                        "epochs": 3,
                        "batch_size": 8,
                        "learning_rate": 0.1,
                        "margin": 0.25,
                        "n_pos": 3,
                        "n_neg": 2,
                        "dim": 16,
                        "buckets": 4096,
                    },
                },
                f,
            )
        assert main(["train", "--config", cfg_path]) == 0
        assert main(["index", "--config", cfg_path]) == 0
        return cfg_path

    def test_ibuprofen_links_to_db01050(self, drug_world, capsys):
        capsys.readouterr()
        code, out, _ = _run(capsys, "link", "--config", drug_world,
                            "--text", "ibuprofen 600 mg tab", "--k", "3")
        assert code == 0
        rank1 = out.splitlines()[0].split("\t")
        assert rank1[2] == "1"
        assert rank1[3] == "DB01050"

    def test_composite_links_each_component(self, drug_world, capsys):
        capsys.readouterr()
        code, out, _ = _run(capsys, "link", "--config", drug_world,
                            "--text", "combination of ribociclib + capecitabine", "--k", "1")
        assert code == 0
        rows = [line.split("\t") for line in out.strip().splitlines()]
        assert [(r[1], r[3]) for r in rows] == [
            ("ribociclib", "DB11730"),
            ("capecitabine", "DB01101"),
        ]


class TestAdjudications:
    def test_eval_writes_adjudications_tsv(self, tmp_path, bench_dir):
        out_dir = str(tmp_path / "adj")
        cfg = _write_config(str(tmp_path / "adj.json"), bench_dir, out_dir)
        assert main(["train", "--config", cfg]) == 0
        assert main(["index", "--config", cfg]) == 0
        adj_path = str(tmp_path / "adjudications.tsv")
        assert main(["eval", "--config", cfg, "--adjudications", adj_path]) == 0
        lines = open(adj_path).read().splitlines()
        assert lines[0].split("\t") == [
            "source_id", "text", "kind", "predicted", "correct@1", "correct@5"
        ]
        report = json.load(open(os.path.join(out_dir, "eval_report.json")))
        assert len(lines) - 1 == report["counts"]["total"]


class TestErrorPaths:
    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--what"])
        assert exc.value.code == 1

    def test_link_without_text_or_mentions(self, tmp_path, bench_dir):
        cfg = _write_config(str(tmp_path / "c.json"), bench_dir, str(tmp_path / "o"))
        assert main(["link", "--config", cfg]) == 1

    def test_missing_config_file_is_data_error(self):
        assert main(["ingest", "--config", "/nonexistent/run.json"]) == 2

    def test_cyclic_terminology_is_data_error(self, tmp_path):
        term = tmp_path / "cyc.tsv"
        term.write_text("A\ta\tB\nB\tb\tA\n")
        cfg_path = str(tmp_path / "c.json")
        with open(cfg_path, "w") as f:
            json.dump({"terminology": str(term), "out_dir": str(tmp_path / "o")}, f)
        assert main(["ingest", "--config", cfg_path]) == 2

    def test_unknown_config_key_is_data_error(self, tmp_path):
        cfg_path = str(tmp_path / "c.json")
        with open(cfg_path, "w") as f:
            json.dump({"terminologee": "x"}, f)
        assert main(["ingest", "--config", cfg_path]) == 2

    def test_fingerprint_mismatch_blocks_link(self, tmp_path, bench_dir):
        out_dir = str(tmp_path / "mm")
        cfg = _write_config(str(tmp_path / "mm.json"), bench_dir, out_dir)
        assert main(["train", "--config", cfg]) == 0
        assert main(["index", "--config", cfg]) == 0
        # retrain with a different seed so the checkpoint no longer matches
        assert main(["train", "--config", cfg, "--seed", "99", "--out", out_dir]) == 0
        assert main(["link", "--config", cfg, "--text", "anything"]) == 2
        assert main(["link", "--config", cfg, "--text", "anything", "--allow-mismatch"]) == 0

    def test_eval_refined_equals_plain_on_duplicate_free_input(self, tmp_path, bench_dir):
        # the synthetic test split after refine() keeps a record subset; running
        # eval twice with and without --refined on an already-refined corpus
        # must produce identical numbers
        out_dir = str(tmp_path / "ref")
        cfg = _write_config(str(tmp_path / "ref.json"), bench_dir, out_dir)
        assert main(["train", "--config", cfg]) == 0
        assert main(["index", "--config", cfg]) == 0

        from conlink.corpus import load_corpus, refine, save_corpus

        test_c = load_corpus(os.path.join(bench_dir, "test.tsv"), "test")
        train_c = load_corpus(os.path.join(bench_dir, "train.tsv"), "train")
        deduped = refine(test_c, train_c)
        dedup_path = str(tmp_path / "dedup.tsv")
        save_corpus(deduped, dedup_path)

        cfg2 = _write_config(
            str(tmp_path / "ref2.json"), bench_dir, out_dir, test_corpus=dedup_path
        )
        with open(cfg2) as f:
            raw = json.load(f)
        raw["eval"]["refined"] = False
        with open(cfg2, "w") as f:
            json.dump(raw, f)

        assert main(["eval", "--config", cfg2]) == 0
        plain = json.load(open(os.path.join(out_dir, "eval_report.json")))
        assert main(["eval", "--config", cfg2, "--refined"]) == 0
        refined = json.load(open(os.path.join(out_dir, "eval_report.json")))
        assert plain["accuracy"] == refined["accuracy"]
        assert plain["counts"] == refined["counts"]
