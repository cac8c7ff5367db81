from __future__ import annotations

import csv
import json
from dataclasses import replace

import pytest

from ragintent.embedding import EmbeddingProviderSpec
from ragintent.evaluation.corpus import CorpusSpec, VerticalSpec, generate_synthetic_corpus
from ragintent.evaluation.harness import (
    build_classifier,
    evaluate,
    run_baseline_nearest,
    run_ood_eval,
    run_retriever_ablation,
    run_topk_sweep,
    grid_rows,
    write_report,
)
from ragintent.pipeline import PipelineConfig

from .conftest import SMALL_SPEC

CONFIG = PipelineConfig(top_k=8, embedding=EmbeddingProviderSpec(dim=512))


@pytest.fixture(scope="module")
def clf(small_corpus):
    return build_classifier(small_corpus.index_pairs(), small_corpus.catalog, CONFIG)


def test_corpus_is_deterministic():
    a, b = generate_synthetic_corpus(SMALL_SPEC), generate_synthetic_corpus(SMALL_SPEC)
    assert a.examples == b.examples and a.catalog == b.catalog
    c = generate_synthetic_corpus(replace(SMALL_SPEC, seed=12))
    assert c.examples != a.examples


def test_default_corpus_shape(bench_corpus):
    assert len(bench_corpus.catalog.paths("3p")) == 72
    assert len(bench_corpus.catalog.paths("1p")) == 840
    assert len(bench_corpus.index_pairs()) == 10 * 912
    assert len(bench_corpus.test_set()) == 912


def test_corpus_spec_validation():
    with pytest.raises(ValueError):
        CorpusSpec(noise_rate=1.0)
    with pytest.raises(ValueError):
        CorpusSpec(verticals=(VerticalSpec("x", "X", (0,)),))


def test_separable_corpus_nearest_is_perfect():
    corpus = generate_synthetic_corpus(replace(SMALL_SPEC, noise_rate=0.0, fillers=False))
    clf = build_classifier(corpus.index_pairs(), corpus.catalog, CONFIG)
    assert run_baseline_nearest(clf, corpus.test_set()).accuracy == 1.0
    assert evaluate(clf, corpus.test_set()).report.accuracy == 1.0


def test_evaluate_report(clf, small_corpus):
    run = evaluate(clf, small_corpus.test_set())
    r = run.report
    assert r.n == len(small_corpus.test_set()) and not run.errors
    assert 0 < r.accuracy <= r.coverage <= 1.0
    assert set(r.latency) == {"retrieval", "scoring", "total"}
    assert r.micro.precision == r.micro.recall == r.accuracy
    rows = grid_rows(r)
    assert [(x["vertical"], x["average"]) for x in rows] == [
        ("a", "micro"), ("a", "macro"), ("b", "micro"), ("b", "macro"), ("overall", "micro"), ("overall", "macro")]


def test_write_report(clf, small_corpus, tmp_path):
    js, cs = write_report(evaluate(clf, small_corpus.test_set()).report, tmp_path / "rep")
    doc = json.loads(js.read_text())
    assert doc["n"] == len(small_corpus.test_set())
    with open(cs) as fh:
        assert len(list(csv.DictReader(fh))) == 6


def test_topk_sweep(clf, small_corpus):
    rows = run_topk_sweep(clf, (1, 2, 5, 10), small_corpus.test_set())
    assert [r.k for r in rows] == [1, 2, 5, 10]
    cov = [r.coverage for r in rows]
    assert cov == sorted(cov)
    mc = [r.mean_candidates for r in rows]
    assert mc == sorted(mc)
    assert set(rows[0].to_dict()) >= {"k", "accuracy", "coverage", "scoring_ms_mean", "total_ms_p95"}
    with pytest.raises(ValueError):
        run_topk_sweep(clf, (5, 1), small_corpus.test_set())


def test_ood(small_corpus):
    res = run_ood_eval(small_corpus, "a", "b", CONFIG)
    assert res.strict.accuracy == 0.0 and res.index_coverage_strict == 0.0
    assert res.index_coverage_mixed == 1.0
    assert res.mixed.accuracy > 0.0
    assert set(res.to_dict()) >= {"in_domain", "strict", "mixed", "mixed_baseline"}
    with pytest.raises(ValueError):
        run_ood_eval(small_corpus, "a", "zzz", CONFIG)


def test_ablation_small():
    corpus = generate_synthetic_corpus(replace(SMALL_SPEC, paraphrase=True))
    rows = run_retriever_ablation(corpus, config=PipelineConfig(
        top_k=8, embedding=EmbeddingProviderSpec(dim=512, subword=(3, 5))))
    by = {r.retriever: r for r in rows}
    assert set(by) == {"bm25", "dense", "maxsim"}
    assert by["dense"].accuracy > by["bm25"].accuracy
    assert all(0 <= r.coverage <= 1 for r in rows)
