"""Retrieve, prompt, score and rank: the end-to-end intent classifier."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

from .embedding import EmbeddingProviderSpec
from .errors import ConfigError, NoCandidatesError, ProviderError, RagIntentError, UntokenizableError
from .retrieval import Retriever, embedder_for
from .retrieval.types import CandidateSet
from .scoring.providers import intent_table_for
from .scoring import (
    DEFAULT_TEMPLATE,
    LogitProviderSpec,
    PromptTemplate,
    make_logit_provider,
    rank_scores,
    render_prompt,
    score_all,
    score_intents,
)
from .taxonomy import DEFAULT_BRANCHING_LIMIT, IntentCatalog, IntentPath, path_prefix, render_intent_path

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    top_k: int = 10
    retriever: str = "dense"
    embedding: EmbeddingProviderSpec = field(default_factory=EmbeddingProviderSpec)
    logits: LogitProviderSpec = field(default_factory=LogitProviderSpec)
    vertical: str | None = None
    hierarchical: bool = False
    min_similarity: float | None = None
    branching_limit: int = DEFAULT_BRANCHING_LIMIT
    parallelism: int = 1

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.retriever not in ("dense", "bm25", "maxsim"):
            raise ConfigError(f"unknown retriever {self.retriever!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["embedding"] = self.embedding.to_dict()
        d["logits"] = self.logits.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown pipeline config field(s) {sorted(extra)}")
        if isinstance(d.get("embedding"), dict):
            d["embedding"] = EmbeddingProviderSpec.from_dict(d["embedding"])
        if isinstance(d.get("logits"), dict):
            d["logits"] = LogitProviderSpec.from_dict(d["logits"])
        return cls(**d)


@dataclass(frozen=True)
class Prediction:
    intent: IntentPath
    normalized_prob: float | None
    candidates_considered: tuple[tuple[IntentPath, float | None], ...]
    retrieval_ms: float
    scoring_ms: float
    fallback_used: bool = False
    fallback_reason: str | None = None
    retrieved_ids: tuple[int, ...] = ()

    def to_dict(self, timings: bool = True) -> dict:
        d = {
            "intent": render_intent_path(self.intent),
            "vertical": self.intent.vertical_id,
            "normalized_prob": self.normalized_prob,
            "candidates": [
                {"intent": render_intent_path(t), "vertical": t.vertical_id, "normalized_prob": p}
                for t, p in self.candidates_considered
            ],
            "retrieved_ids": list(self.retrieved_ids),
            "fallback_used": self.fallback_used,
            "fallback_reason": self.fallback_reason,
        }
        if timings:
            d["retrieval_ms"] = self.retrieval_ms
            d["scoring_ms"] = self.scoring_ms
        return d

    def without_timings(self) -> "Prediction":
        return replace(self, retrieval_ms=0.0, scoring_ms=0.0)


@dataclass(frozen=True)
class BatchError:
    position: int
    query: str
    error_type: str
    message: str

    def to_dict(self) -> dict:
        return asdict(self)


_SCORING_FAILURES = (ProviderError, UntokenizableError)


class IntentClassifier:
    """Immutable snapshot of (retriever, scorer, catalog, config).

    ``with_retriever`` returns a new classifier, which is how live index
    updates are published without disturbing in-flight requests.
    """

    def __init__(self, retriever: Retriever, provider, catalog: IntentCatalog | None = None,
                 config: PipelineConfig = PipelineConfig(), template: PromptTemplate = DEFAULT_TEMPLATE):
        self.retriever = retriever
        self.provider = provider
        self.catalog = catalog
        self.config = config
        self.template = template

    def with_retriever(self, retriever: Retriever) -> "IntentClassifier":
        return IntentClassifier(retriever, self.provider, self.catalog, self.config, self.template)

    def with_config(self, **changes) -> "IntentClassifier":
        return IntentClassifier(self.retriever, self.provider, self.catalog,
                                replace(self.config, **changes), self.template)

    def retrieve(self, query: str, top_k: int | None = None, vertical: str | None = None) -> CandidateSet:
        k = top_k or self.config.top_k
        cands = self.retriever.search(query, k, vertical or self.config.vertical)
        if self.config.min_similarity is not None:
            cands = cands.filter_min_score(self.config.min_similarity)
        return cands

    def classify(self, query: str, vertical: str | None = None, top_k: int | None = None) -> Prediction:
        t0 = time.perf_counter()
        cands = self.retrieve(query, top_k, vertical)
        t1 = time.perf_counter()
        if not cands:
            raise NoCandidatesError(f"no exemplars retrieved for query {query[:60]!r}")
        ids = tuple(cands.ids)
        prompt = render_prompt(self.template, query, cands)
        try:
            ranked = rank_scores(score_all(self.provider, prompt, cands), cands.unique_intents)
        except _SCORING_FAILURES as exc:
            logger.warning("scoring failed, using retrieval top-1: %s", exc)
            t2 = time.perf_counter()
            return Prediction(
                cands.top_intent(), None, tuple((t, None) for t in cands.unique_intents),
                (t1 - t0) * 1e3, (t2 - t1) * 1e3, True, f"{type(exc).__name__}: {exc}", ids,
            )
        t2 = time.perf_counter()
        return Prediction(
            ranked[0].intent, ranked[0].normalized_prob,
            tuple((s.intent, s.normalized_prob) for s in ranked),
            (t1 - t0) * 1e3, (t2 - t1) * 1e3, False, None, ids,
        )

    def classify_hierarchical(self, query: str, vertical: str | None = None,
                              top_k: int | None = None) -> list[Prediction]:
        """One prediction per level, each restricted to children of the previous choice."""
        t0 = time.perf_counter()
        cands = self.retrieve(query, top_k, vertical)
        retrieval_ms = (time.perf_counter() - t0) * 1e3
        if not cands:
            raise NoCandidatesError(f"no exemplars retrieved for query {query[:60]!r}")
        ids = tuple(cands.ids)
        out: list[Prediction] = []
        prefix: IntentPath | None = None
        depth = 1
        while True:
            pool: dict[IntentPath, None] = {}
            for pair, _ in cands.entries:
                t = pair.intent
                if t.depth >= depth and (prefix is None or path_prefix(t, depth - 1) == prefix):
                    pool.setdefault(path_prefix(t, depth), None)
            level = list(pool)[: self.config.branching_limit]
            if not level:
                if prefix is not None and self.catalog is not None and not self.catalog.is_leaf(prefix):
                    last = out[-1]
                    out[-1] = replace(last, fallback_used=True,
                                      fallback_reason="no retrieved children for predicted prefix")
                break
            t1 = time.perf_counter()
            prompt = render_prompt(self.template, query, cands, level)
            try:
                ranked = rank_scores(score_intents(self.provider, prompt, level), level)
                pred = Prediction(ranked[0].intent, ranked[0].normalized_prob,
                                  tuple((s.intent, s.normalized_prob) for s in ranked),
                                  retrieval_ms, (time.perf_counter() - t1) * 1e3, False, None, ids)
            except _SCORING_FAILURES as exc:
                pred = Prediction(level[0], None, tuple((t, None) for t in level), retrieval_ms,
                                  (time.perf_counter() - t1) * 1e3, True, f"{type(exc).__name__}: {exc}", ids)
            out.append(pred)
            prefix = pred.intent
            depth += 1
        return out

    def classify_batch(self, queries: Sequence[str], verticals: Sequence[str | None] | None = None,
                       top_k: int | None = None) -> list[Prediction | BatchError]:
        """Classify each query; failures become :class:`BatchError` entries in place."""
        verticals = list(verticals) if verticals is not None else [None] * len(queries)

        def one(i: int):
            try:
                return self.classify(queries[i], verticals[i], top_k)
            except (RagIntentError, ValueError) as exc:
                return BatchError(i, queries[i], type(exc).__name__, str(exc))

        if self.config.parallelism == 1 or len(queries) < 2:
            return [one(i) for i in range(len(queries))]
        with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
            return list(pool.map(one, range(len(queries))))

    def nearest(self, query: str, vertical: str | None = None) -> Prediction:
        """Retrieval-only prediction: the top-1 exemplar's intent."""
        t0 = time.perf_counter()
        cands = self.retrieve(query, 1, vertical)
        if not cands:
            raise NoCandidatesError(f"no exemplars retrieved for query {query[:60]!r}")
        t = cands.top_intent()
        return Prediction(t, None, ((t, None),), (time.perf_counter() - t0) * 1e3, 0.0, False, None,
                          tuple(cands.ids))


def classifier_from_index(index, config: PipelineConfig = PipelineConfig(), provider=None,
                          template: PromptTemplate = DEFAULT_TEMPLATE) -> IntentClassifier:
    """Wire a loaded index to its recorded encoder and a scoring provider.

    The retriever kind follows the index. Without a table file the mock
    provider learns its table from the indexed intents.
    """
    retriever = Retriever(index, embedder_for(index))
    if provider is None:
        provider = make_logit_provider(config.logits, intent_table_for(index.pairs), template)
    return IntentClassifier(retriever, provider, index.catalog, replace(config, retriever=retriever.kind), template)
