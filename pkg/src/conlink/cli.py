"""Command-line surface: ingest -> train -> index -> fit-threshold -> link -> eval.

Every command reads the same declarative run config (--config run.json); --seed
and --out override the config's seed and output directory. All randomness flows
from the single run seed, so reruns reproduce artifacts byte for byte.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
import urllib.request
from dataclasses import replace

from . import corpus as corpus_mod
from .config import RunConfig
from .encoder import NGramEncoder
from .errors import ConlinkError
from .evaluate import evaluate_pipeline, format_report, write_adjudications_tsv, write_report_json
from .index import VectorIndex, build_index, link
from .nilgate import apply_gate, fit_threshold, load_threshold, save_threshold
from .terminology import load_terminology
from .trainer import train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, training=replace(cfg.training, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _load_split(path: str, split: str):
    return corpus_mod.load_corpus(path, split)


# -- commands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    cfg.require("terminology")
    t = load_terminology(cfg.terminology)
    print(f"terminology   : {t.cui_count} concepts, {t.name_count} names")

    train_c = None
    for key, label in (("train_corpus", "train"), ("dev_corpus", "dev"), ("test_corpus", "test")):
        path = getattr(cfg, key)
        if path is None:
            continue
        c = _load_split(path, label)
        if label == "train":
            train_c = c
        unique = len({r.normalized_text for r in c.records})
        nil = sum(1 for r in c.records if r.is_nil)
        composite = sum(1 for r in c.records if r.is_composite)
        in_kb = sum(1 for r in c.records if r.gold_cuis and (r.gold_cuis & t.cuis))
        line = (
            f"{label:<6} corpus  : {len(c)} mentions, {unique} unique, "
            f"{in_kb} with in-terminology CUIs, {nil} nil, {composite} composite"
        )
        if label == "test":
            refined = corpus_mod.refine(c, train_c)
            line += f", {len(refined)} refined"
        print(line)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    cfg.require("terminology", "train_corpus")
    t = load_terminology(cfg.terminology)
    train_c = _load_split(cfg.train_corpus, "train")
    dev_c = _load_split(cfg.dev_corpus, "dev") if cfg.dev_corpus else None

    enc, report = train(t, train_c, cfg.training, dev=dev_c)
    enc.save(cfg.checkpoint_path)
    with open(cfg.train_report_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(config=cfg.to_dict()), f, indent=2, sort_keys=True)
        f.write("\n")
    last = f", final loss {report.epoch_loss[-1]:.4f}" if report.epoch_loss else ""
    print(
        f"trained {cfg.training.epochs} epochs on {report.used_records} records "
        f"({report.skipped_records} skipped){last}"
    )
    print(f"checkpoint    : {cfg.checkpoint_path}")
    print(f"train report  : {cfg.train_report_path}")
    return EXIT_OK


def cmd_index(args) -> int:
    cfg = _load_config(args)
    cfg.require("terminology")
    t = load_terminology(cfg.terminology)
    enc = NGramEncoder.load(cfg.checkpoint_path)
    ix = build_index(t, enc, cfg.training.loss.distance)
    ix.save(cfg.index_path)
    print(f"indexed {len(ix)} names at D={ix.dim} ({ix.kind.value})")
    print(f"index         : {cfg.index_path}")
    return EXIT_OK


def cmd_fit_threshold(args) -> int:
    cfg = _load_config(args)
    cfg.require("dev_corpus")
    enc = NGramEncoder.load(cfg.checkpoint_path)
    ix = VectorIndex.load(cfg.index_path)
    dev_c = _load_split(cfg.dev_corpus, "dev")
    th = fit_threshold(
        ix, enc, dev_c, cfg.threshold_strategy, complement_weights=cfg.threshold_complement
    )
    save_threshold(th, cfg.threshold_path)
    print(
        f"threshold     : {th.value:.6f} ({th.strategy.value}, "
        f"n_tp={th.n_tp}, n_fp={th.n_fp})"
    )
    print(f"written to    : {cfg.threshold_path}")
    return EXIT_OK


def _print_link_results(text: str, components, results) -> None:
    for comp, res in zip(components, results):
        if res is None:
            print(f"{text}\t{comp}\tnil")
            continue
        for rank, (cui, dist) in enumerate(res.ranked, start=1):
            print(f"{text}\t{comp}\t{rank}\t{cui}\t{dist:.6f}")


def _link_via_server(server: str, text: str, k: int) -> int:
    payload = json.dumps({"text": text, "k": k}).encode("utf-8")
    req = urllib.request.Request(
        f"{server.rstrip('/')}/link", data=payload, headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(req) as resp:
        body = json.loads(resp.read().decode("utf-8"))
    for comp in body["components"]:
        if comp["nil"]:
            print(f"{text}\t{comp['text']}\tnil")
            continue
        for rank, cand in enumerate(comp["candidates"], start=1):
            print(f"{text}\t{comp['text']}\t{rank}\t{cand['cui']}\t{cand['distance']:.6f}")
    return EXIT_OK


def cmd_link(args) -> int:
    if args.text is None and args.mentions is None:
        print("link: provide --text or --mentions", file=sys.stderr)
        return EXIT_USAGE
    if args.server is not None:
        if args.text is None:
            print("link: --server supports --text only", file=sys.stderr)
            return EXIT_USAGE
        return _link_via_server(args.server, args.text, args.k)

    if args.config is None:
        print("link: provide --config (or --server with --text)", file=sys.stderr)
        return EXIT_USAGE
    cfg = _load_config(args)
    enc = NGramEncoder.load(cfg.checkpoint_path)
    ix = VectorIndex.load(cfg.index_path)
    th = None
    if args.gate:
        th = load_threshold(cfg.threshold_path)

    if args.text is not None:
        records = [corpus_mod.make_record("cli", args.text, set())]
    else:
        records = list(_load_split(args.mentions, "test").records)

    for rec in records:
        results = link(ix, enc, rec, args.k, allow_mismatch=args.allow_mismatch)
        if th is not None:
            results = [apply_gate(r, th) for r in results]
        _print_link_results(rec.raw_text, rec.components, results)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    cfg.require("terminology", "test_corpus")
    t = load_terminology(cfg.terminology)
    enc = NGramEncoder.load(cfg.checkpoint_path)
    ix = VectorIndex.load(cfg.index_path)
    test_c = _load_split(cfg.test_corpus, "test")
    train_c = _load_split(cfg.train_corpus, "train") if cfg.train_corpus else None
    th = load_threshold(cfg.threshold_path) if args.gate else None

    eval_cfg = cfg.eval
    if args.refined:
        eval_cfg = replace(eval_cfg, refined=True)
    report = evaluate_pipeline(
        t, enc, ix, th, test_c, eval_cfg, train=train_c, allow_mismatch=args.allow_mismatch
    )
    write_report_json(report, cfg.eval_report_path, config_echo=cfg.to_dict())
    if args.adjudications:
        write_adjudications_tsv(report, args.adjudications)
    print(format_report(report))
    print(f"eval report   : {cfg.eval_report_path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_bundle

    cfg = _load_config(args)
    threshold = cfg.threshold_path if os.path.exists(cfg.threshold_path) else None
    bundle = load_bundle(cfg.checkpoint_path, cfg.index_path, threshold)
    app = create_app(bundle)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import synthetic_benchmark
    from .terminology import save_terminology

    os.makedirs(args.out, exist_ok=True)
    bench = synthetic_benchmark(seed=args.seed if args.seed is not None else 0)
    save_terminology(bench.terminology, os.path.join(args.out, "terminology.tsv"))
    for split, c in (("train", bench.train), ("dev", bench.dev), ("test", bench.test)):
        corpus_mod.save_corpus(c, os.path.join(args.out, f"{split}.tsv"))
    print(
        f"wrote synthetic benchmark to {args.out}: "
        f"{bench.terminology.name_count} names, "
        f"{len(bench.train)}/{len(bench.dev)}/{len(bench.test)} mentions"
    )
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="conlink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")

    common(sub.add_parser("ingest", help="validate inputs and print corpus statistics"))
    common(sub.add_parser("train", help="train the encoder, write checkpoint + report"))
    common(sub.add_parser("index", help="embed all terminology names into an index file"))
    common(sub.add_parser("fit-threshold", help="fit the out-of-KB distance threshold"))

    p_link = sub.add_parser("link", help="rank CUIs for a mention or a mentions file")
    p_link.add_argument("--config", default=None, help="run config JSON (not needed with --server)")
    p_link.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_link.add_argument("--out", default=None, help="override the output directory")
    p_link.add_argument("--text", default=None, help="one raw mention")
    p_link.add_argument("--mentions", default=None, help="mentions TSV")
    p_link.add_argument("--k", type=int, default=5)
    p_link.add_argument("--gate", action="store_true", help="apply the fitted nil threshold")
    p_link.add_argument("--allow-mismatch", action="store_true", help="tolerate encoder/index fingerprint mismatch")
    p_link.add_argument("--server", default=None, help="POST to a running service instead of loading artifacts")

    p_eval = sub.add_parser("eval", help="score the test corpus")
    common(p_eval)
    p_eval.add_argument("--refined", action="store_true", help="force refined (deduplicated) evaluation")
    p_eval.add_argument("--gate", action="store_true", help="apply the fitted nil threshold")
    p_eval.add_argument("--allow-mismatch", action="store_true")
    p_eval.add_argument("--adjudications", default=None, help="write per-record adjudications TSV here")

    p_serve = sub.add_parser("serve", help="serve the trained artifacts over HTTP")
    common(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    p_synth = sub.add_parser("synth", help="write the seeded synthetic benchmark as TSV files")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=0)

    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "index": cmd_index,
    "fit-threshold": cmd_fit_threshold,
    "link": cmd_link,
    "eval": cmd_eval,
    "serve": cmd_serve,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConlinkError, OSError) as exc:
        print(f"conlink {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
