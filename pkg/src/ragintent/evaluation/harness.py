"""Experiment runners: standard eval, nearest baseline, top-k sweep, OOD and retriever ablation."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from ..embedding import EmbeddingProviderSpec, make_embedder
from ..errors import NoCandidatesError
from ..pipeline import IntentClassifier, PipelineConfig, Prediction
from ..retrieval import Retriever, build_index
from ..retrieval.types import ExemplarPair
from ..scoring import make_logit_provider
from ..scoring.providers import intent_table_for
from ..taxonomy import IntentCatalog, IntentPath
from .corpus import CorpusSpec, LabeledExample, SyntheticCorpus, VerticalSpec, generate_synthetic_corpus
from .metrics import EvalReport, LatencyStats, compute_metrics

logger = logging.getLogger(__name__)

SWEEP_KS = (1, 2, 5, 10, 20, 50)

# Queries and exemplars share no surface tokens, only character n-grams.
ABLATION_CORPUS = CorpusSpec(
    verticals=(VerticalSpec("3p", "Third-party retail", (3, 4, 6)),
               VerticalSpec("1p", "First-party devices", (3, 4, 5))),
    index_per_intent=5,
    paraphrase=True,
)
ABLATION_EMBEDDING = EmbeddingProviderSpec(dim=1024, subword=(3, 5))


def build_classifier(pairs: Sequence[ExemplarPair], catalog: IntentCatalog | None,
                     config: PipelineConfig = PipelineConfig(), provider=None,
                     table_pairs: Sequence[ExemplarPair] | None = None) -> IntentClassifier:
    """Index ``pairs`` and wire a provider.

    Without an explicit ``provider`` the mock table is learned from the intents of
    ``table_pairs`` (default: ``pairs``).
    """
    embedder = make_embedder(config.embedding) if config.retriever != "bm25" else None
    retriever = Retriever(build_index(config.retriever, pairs, embedder, catalog), embedder)
    if provider is None:
        table = intent_table_for(table_pairs if table_pairs is not None else pairs)
        provider = make_logit_provider(config.logits, table)
    return IntentClassifier(retriever, provider, catalog, config)


@dataclass
class EvalRun:
    report: EvalReport
    predictions: list[Prediction | None]
    errors: list[tuple[int, str]]


def _golds_in(pred: Prediction) -> set[IntentPath]:
    return {t for t, _ in pred.candidates_considered}


def _run(predict: Callable[[LabeledExample], Prediction], examples: Sequence[LabeledExample],
         config: dict, abstain_on_empty: bool) -> EvalRun:
    preds: list[Prediction | None] = []
    errors: list[tuple[int, str]] = []
    retrieval_ms, scoring_ms, total_ms = [], [], []
    for i, ex in enumerate(examples):
        t0 = time.perf_counter()
        try:
            p = predict(ex)
        except NoCandidatesError as exc:
            if not abstain_on_empty:
                raise
            errors.append((i, str(exc)))
            preds.append(None)
            continue
        total_ms.append((time.perf_counter() - t0) * 1e3)
        retrieval_ms.append(p.retrieval_ms)
        scoring_ms.append(p.scoring_ms)
        preds.append(p)
    golds = [e.gold for e in examples]
    report = compute_metrics([p.intent if p else None for p in preds], golds,
                             {"retrieval": retrieval_ms, "scoring": scoring_ms, "total": total_ms}, config)
    report.coverage = sum(1 for p, g in zip(preds, golds) if p and g in _golds_in(p)) / len(golds)
    report.fallbacks = sum(1 for p in preds if p and p.fallback_used)
    return EvalRun(report, preds, errors)


def evaluate(classifier: IntentClassifier, examples: Sequence[LabeledExample],
             top_k: int | None = None, abstain_on_empty: bool = False) -> EvalRun:
    """Classify every example and score the predictions against their golds."""
    clf = classifier if top_k is None else classifier.with_config(top_k=top_k)
    return _run(lambda e: clf.classify(e.query), examples, clf.config.to_dict(), abstain_on_empty)


def run_baseline_nearest(classifier: IntentClassifier, examples: Sequence[LabeledExample],
                         abstain_on_empty: bool = False) -> EvalReport:
    """Retrieval-only accuracy: predict the top-1 exemplar's intent."""
    cfg = classifier.config.to_dict() | {"mode": "nearest"}
    return _run(lambda e: classifier.nearest(e.query), examples, cfg, abstain_on_empty).report


@dataclass(frozen=True)
class SweepRow:
    k: int
    accuracy: float
    coverage: float
    mean_candidates: float
    scoring: LatencyStats
    total: LatencyStats

    def to_dict(self) -> dict:
        return {
            "k": self.k, "accuracy": self.accuracy, "coverage": self.coverage,
            "mean_candidates": self.mean_candidates,
            "scoring_ms_p50": self.scoring.p50_ms, "scoring_ms_p95": self.scoring.p95_ms,
            "scoring_ms_mean": self.scoring.mean_ms,
            "total_ms_p50": self.total.p50_ms, "total_ms_p95": self.total.p95_ms,
            "total_ms_mean": self.total.mean_ms,
        }


def run_topk_sweep(classifier: IntentClassifier, ks: Sequence[int],
                   examples: Sequence[LabeledExample]) -> list[SweepRow]:
    """Same pipeline at each k; only ``top_k`` changes between rows."""
    if list(ks) != sorted(ks):
        raise ValueError("ks must be sorted ascending")
    rows = []
    for k in ks:
        run = evaluate(classifier, examples, top_k=k)
        r = run.report
        mean_c = sum(len(p.candidates_considered) for p in run.predictions) / len(run.predictions)
        rows.append(SweepRow(k, r.accuracy, r.coverage, mean_c, r.latency["scoring"], r.latency["total"]))
    return rows


@dataclass
class OODResult:
    source: str
    target: str
    in_domain: EvalReport
    strict: EvalReport
    mixed: EvalReport
    mixed_baseline: EvalReport
    index_coverage_strict: float
    index_coverage_mixed: float

    def to_dict(self) -> dict:
        return {
            "source": self.source, "target": self.target,
            "in_domain": self.in_domain.to_dict(), "strict": self.strict.to_dict(),
            "mixed": self.mixed.to_dict(), "mixed_baseline": self.mixed_baseline.to_dict(),
            "index_coverage_strict": self.index_coverage_strict,
            "index_coverage_mixed": self.index_coverage_mixed,
        }


def _index_coverage(pairs: Sequence[ExemplarPair], examples: Sequence[LabeledExample]) -> float:
    indexed = {p.intent for p in pairs}
    return sum(1 for e in examples if e.gold in indexed) / len(examples)


def run_ood_eval(corpus: SyntheticCorpus, source: str, target: str,
                 config: PipelineConfig = PipelineConfig()) -> OODResult:
    """Index ``source`` only, then test on ``source`` and on ``target``.

    The mixed protocol upserts the target exemplars into the live index while the
    provider built from the source intents stays as it is.
    """
    for v in (source, target):
        if v not in corpus.catalog.verticals:
            raise ValueError(f"unknown vertical {v!r}")
    src_pairs = corpus.index_pairs(source)
    clf = build_classifier(src_pairs, corpus.catalog, config)
    in_domain = evaluate(clf, corpus.test_set(source)).report
    tests = corpus.test_set(target)
    strict = evaluate(clf, tests).report
    cov_strict = _index_coverage(src_pairs, tests)
    if source != target and (cov_strict != 0.0 or strict.accuracy != 0.0):
        raise AssertionError("strict OOD must have zero coverage and zero accuracy")
    tgt_pairs = corpus.index_pairs(target) if source != target else []
    mixed_clf = clf.with_retriever(clf.retriever.upsert_many(tgt_pairs))
    mixed = evaluate(mixed_clf, tests).report
    baseline = run_baseline_nearest(mixed_clf, tests)
    return OODResult(source, target, in_domain, strict, mixed, baseline,
                     cov_strict, _index_coverage(src_pairs + tgt_pairs, tests))


@dataclass(frozen=True)
class AblationRow:
    retriever: str
    accuracy: float
    coverage: float
    macro_f1: float
    abstained: int
    nearest_accuracy: float
    latency_p50_ms: float

    def to_dict(self) -> dict:
        return asdict(self)


def run_retriever_ablation(corpus: SyntheticCorpus | None = None,
                           kinds: Sequence[str] = ("bm25", "dense", "maxsim"),
                           config: PipelineConfig | None = None) -> list[AblationRow]:
    """Run each retriever over the same index and test split.

    A retriever that finds no candidate for a query abstains on it.
    """
    corpus = corpus or generate_synthetic_corpus(ABLATION_CORPUS)
    config = config or PipelineConfig(embedding=ABLATION_EMBEDDING)
    pairs, tests = corpus.index_pairs(), corpus.test_set()
    rows = []
    for kind in kinds:
        clf = build_classifier(pairs, corpus.catalog, replace(config, retriever=kind))
        r = evaluate(clf, tests, abstain_on_empty=True).report
        base = run_baseline_nearest(clf, tests, abstain_on_empty=True)
        rows.append(AblationRow(kind, r.accuracy, r.coverage, r.macro.f1, r.abstained,
                                base.accuracy, r.latency["total"].p50_ms))
    return rows


def grid_rows(report: EvalReport) -> list[dict]:
    """Per-vertical and overall precision/recall/F1, micro and macro, one row each."""
    rows = []
    groups = list(report.per_vertical.items()) + [("overall", report)]
    for name, g in groups:
        for avg_name in ("micro", "macro"):
            a = getattr(g, avg_name)
            rows.append({"vertical": name, "average": avg_name, "precision": a.precision,
                         "recall": a.recall, "f1": a.f1, "accuracy": g.accuracy, "n": g.n})
    return rows


def write_json(path: str | Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: str | Path, rows: Sequence[dict]) -> None:
    rows = list(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def write_report(report: EvalReport, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (full report) and ``<stem>.csv`` (per-vertical grid)."""
    stem = Path(stem)
    js, cs = stem.with_suffix(".json"), stem.with_suffix(".csv")
    write_json(js, report.to_dict())
    write_csv(cs, grid_rows(report))
    return js, cs
