"""Command-line entry point.

Exit codes:
    0  success
    1  data or validation error (corpus lines, catalog, unknown intents)
    2  usage error (bad flags)
    3  configuration error
    4  index error (missing, corrupt or built with another encoder)
    5  provider error
    6  no retrieval candidates for a query
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import httpx

from .config import AppConfig, apply_overrides, load_config
from .embedding import make_embedder
from .errors import (
    CatalogError,
    ConfigError,
    EncoderMismatchError,
    IndexFormatError,
    IntentPathError,
    NoCandidatesError,
    ProviderError,
)
from .evaluation.corpus import CorpusSpec, LabeledExample, generate_synthetic_corpus
from .evaluation.harness import (
    ABLATION_CORPUS,
    SWEEP_KS,
    evaluate,
    run_baseline_nearest,
    run_ood_eval,
    run_retriever_ablation,
    run_topk_sweep,
    grid_rows,
    write_csv,
    write_json,
)
from .pipeline import classifier_from_index
from .retrieval import build_index, load_index, read_exemplars, save_index, write_exemplars
from .retrieval.ingest import CorpusError
from .taxonomy import IntentCatalog

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_CONFIG, EXIT_INDEX, EXIT_PROVIDER, EXIT_NO_CANDIDATES = range(7)


def _emit(args, doc, text: str | None = None) -> None:
    if args.json or text is None:
        print(json.dumps(doc, ensure_ascii=False, sort_keys=True))
    else:
        print(text)


def _config(args) -> AppConfig:
    cfg = load_config(getattr(args, "config", None))
    keys = ("index", "corpus", "catalog", "table", "seed", "top_k", "retriever", "vertical",
            "provider", "endpoint", "model", "dim", "host", "port")
    flags = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "hierarchical", False):
        flags["hierarchical"] = True
    return apply_overrides(cfg, **flags)


def _catalog(cfg: AppConfig) -> IntentCatalog | None:
    return IntentCatalog.load(cfg.catalog) if cfg.catalog else None


def _load(cfg: AppConfig):
    if not cfg.index:
        raise ConfigError("--index is required")
    try:
        return load_index(cfg.index)
    except OSError as exc:
        raise IndexFormatError(f"cannot read index {cfg.index}: {exc}") from exc


def _labeled(path: str, catalog: IntentCatalog | None) -> list[LabeledExample]:
    return [LabeledExample(p.query, p.intent, "test", p.id) for p in read_exemplars(path, catalog)]


def _need(value, flag: str):
    if not value:
        raise ConfigError(f"{flag} is required")
    return value


# ---- subcommands ----

def cmd_generate_corpus(args) -> int:
    spec = CorpusSpec(noise_rate=args.noise, seed=args.seed or 0, paraphrase=args.paraphrase,
                      index_per_intent=args.index_per_intent)
    corpus = generate_synthetic_corpus(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus.catalog.save(out / "catalog.json")
    write_exemplars(out / "index.jsonl", corpus.index_pairs())
    write_exemplars(out / "test.jsonl", [e.to_pair() for e in corpus.test_examples])
    doc = {"catalog": str(out / "catalog.json"), "index": str(out / "index.jsonl"),
           "test": str(out / "test.jsonl"), "intents": len(corpus.catalog.intents),
           "index_pairs": len(corpus.index_examples), "test_queries": len(corpus.test_examples)}
    _emit(args, doc, "\n".join(f"{k}: {v}" for k, v in doc.items()))
    return EXIT_OK


def cmd_build_index(args) -> int:
    cfg = _config(args)
    catalog = _catalog(cfg)
    pairs = read_exemplars(_need(cfg.corpus, "--corpus"), catalog)
    kind = cfg.pipeline.retriever
    embedder = make_embedder(cfg.pipeline.embedding) if kind != "bm25" else None
    index = build_index(kind, pairs, embedder, catalog)
    save_index(index, _need(args.out, "--out"))
    hist = dict(sorted(Counter(p.vertical_id for p in pairs).items()))
    doc = {"index": args.out, "retriever": kind, "pairs": len(pairs), "per_vertical": hist}
    lines = [f"wrote {args.out}: {len(pairs)} pairs ({kind})"] + [f"  {v}: {n}" for v, n in hist.items()]
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = _config(args)
    clf = classifier_from_index(_load(cfg), cfg.pipeline)
    if cfg.pipeline.hierarchical:
        doc = {"levels": [p.to_dict() for p in clf.classify_hierarchical(args.query, cfg.pipeline.vertical)]}
    else:
        doc = clf.classify(args.query, cfg.pipeline.vertical).to_dict()
    print(json.dumps(doc, ensure_ascii=False, sort_keys=True))
    return EXIT_OK


def _summary(name: str, report) -> str:
    rows = grid_rows(report)
    head = f"{name}: n={report.n} accuracy={report.accuracy:.4f} coverage={report.coverage}"
    body = [f"  {r['vertical']:>8} {r['average']:>5}  P={r['precision']:.4f} R={r['recall']:.4f} "
            f"F1={r['f1']:.4f} acc={r['accuracy']:.4f}" for r in rows]
    return "\n".join([head] + body)


def cmd_eval(args) -> int:
    cfg = _config(args)
    index = _load(cfg)
    clf = classifier_from_index(index, cfg.pipeline)
    tests = _labeled(_need(args.test, "--test"), index.catalog)
    report = evaluate(clf, tests).report
    doc = {"reranked": report.to_dict()}
    text = _summary("reranked", report)
    if args.baseline:
        base = run_baseline_nearest(clf, tests)
        doc["nearest"] = base.to_dict()
        text += "\n" + _summary("nearest", base)
    if args.out:
        stem = Path(args.out)
        write_json(stem.with_suffix(".json"), doc)
        rows = [dict(r, system="reranked") for r in grid_rows(report)]
        if args.baseline:
            rows += [dict(r, system="nearest") for r in grid_rows(base)]
        write_csv(stem.with_suffix(".csv"), rows)
    _emit(args, doc, text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    index = _load(cfg)
    clf = classifier_from_index(index, cfg.pipeline)
    tests = _labeled(_need(args.test, "--test"), index.catalog)
    ks = [int(k) for k in args.ks.split(",")] if args.ks else list(SWEEP_KS)
    rows = [r.to_dict() for r in run_topk_sweep(clf, ks, tests)]
    if args.out:
        stem = Path(args.out)
        write_json(stem.with_suffix(".json"), {"config": clf.config.to_dict(), "rows": rows})
        write_csv(stem.with_suffix(".csv"), rows)
    text = "\n".join(f"k={r['k']:>3} accuracy={r['accuracy']:.4f} coverage={r['coverage']:.4f} "
                     f"scoring_ms_mean={r['scoring_ms_mean']:.3f}" for r in rows)
    _emit(args, {"rows": rows}, text)
    return EXIT_OK


def cmd_ablation(args) -> int:
    corpus = generate_synthetic_corpus(replace(ABLATION_CORPUS, seed=args.seed or 0))
    rows = [r.to_dict() for r in run_retriever_ablation(corpus)]
    if args.out:
        stem = Path(args.out)
        write_json(stem.with_suffix(".json"), {"rows": rows})
        write_csv(stem.with_suffix(".csv"), rows)
    text = "\n".join(f"{r['retriever']:>7} accuracy={r['accuracy']:.4f} coverage={r['coverage']:.4f} "
                     f"nearest={r['nearest_accuracy']:.4f}" for r in rows)
    _emit(args, {"rows": rows}, text)
    return EXIT_OK


def cmd_ood(args) -> int:
    cfg = _config(args)
    corpus = generate_synthetic_corpus(CorpusSpec(seed=args.seed or 0))
    res = run_ood_eval(corpus, args.source, args.target, cfg.pipeline)
    doc = res.to_dict()
    if args.out:
        write_json(Path(args.out).with_suffix(".json"), doc)
    text = (f"in-domain {res.in_domain.accuracy:.4f}  strict OOD {res.strict.accuracy:.4f} "
            f"(coverage {res.index_coverage_strict:.2f})  mixed {res.mixed.accuracy:.4f} "
            f"vs nearest {res.mixed_baseline.accuracy:.4f}")
    _emit(args, doc, text)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    serve(_config(args))
    return EXIT_OK


def cmd_snapshot(args) -> int:
    headers = {}
    if args.token_env:
        headers["Authorization"] = f"Bearer {os.environ.get(args.token_env, '')}"
    body = {"path": args.out} if args.out else {}
    try:
        resp = httpx.post(args.url.rstrip("/") + "/index/snapshot", json=body, headers=headers, timeout=30)
    except httpx.HTTPError as exc:
        raise ProviderError(f"cannot reach service: {exc}") from exc
    if resp.status_code != 200:
        print(resp.text, file=sys.stderr)
        return EXIT_CONFIG if resp.status_code in (400, 401) else EXIT_PROVIDER
    _emit(args, resp.json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file; flags override it")
    common.add_argument("--json", action="store_true", help="machine-readable JSON output")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    pipe = argparse.ArgumentParser(add_help=False)
    pipe.add_argument("--index")
    pipe.add_argument("--catalog")
    pipe.add_argument("--top-k", type=int, dest="top_k", help="candidates to retrieve (default 10)")
    pipe.add_argument("--retriever", choices=("bm25", "dense", "maxsim"))
    pipe.add_argument("--provider", choices=("mock", "remote"))
    pipe.add_argument("--endpoint")
    pipe.add_argument("--model")
    pipe.add_argument("--table", help="mock provider table file")
    pipe.add_argument("--vertical")
    pipe.add_argument("--dim", type=int, help="hash embedding dimension")

    ap = argparse.ArgumentParser(prog="ragintent", description="Retrieval-augmented intent classification.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-corpus", parents=[common], help="write a synthetic benchmark corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--index-per-intent", type=int, default=10)
    p.add_argument("--paraphrase", action="store_true")
    p.set_defaults(func=cmd_generate_corpus)

    p = sub.add_parser("build-index", parents=[common, pipe], help="index an exemplar line file")
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("classify", parents=[common, pipe], help="classify one query")
    p.add_argument("query")
    p.add_argument("--hierarchical", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", parents=[common, pipe], help="evaluate on a labeled line file")
    p.add_argument("--test", required=True)
    p.add_argument("--out", help="report stem; writes .json and .csv")
    p.add_argument("--baseline", action="store_true", help="also run the nearest-exemplar baseline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common, pipe], help="accuracy and latency across top-k")
    p.add_argument("--test", required=True)
    p.add_argument("--ks", help="comma-separated, ascending (default 1,2,5,10,20,50)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablation", parents=[common], help="compare retrievers on the paraphrase corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("ood", parents=[common, pipe], help="out-of-domain transfer on the synthetic corpus")
    p.add_argument("--source", default="3p")
    p.add_argument("--target", default="1p")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ood)

    p = sub.add_parser("serve", parents=[common, pipe], help="run the HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("snapshot", parents=[common], help="ask a running service to persist its index")
    p.add_argument("--url", default="http://127.0.0.1:8080")
    p.add_argument("--out", help="path on the service host (default: its configured snapshot path)")
    p.add_argument("--token-env", help="environment variable holding the bearer token")
    p.set_defaults(func=cmd_snapshot)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CorpusError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (CatalogError, IntentPathError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IndexFormatError, EncoderMismatchError) as exc:
        print(f"index error: {exc}", file=sys.stderr)
        return EXIT_INDEX
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except NoCandidatesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CANDIDATES
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
