"""Candidate-intent scoring: prompts, logit providers and length-normalized scores."""

from .core import (
    SequenceScore,
    candidate_softmax,
    continuation_logprobs,
    rank_scores,
    score_all,
    score_candidate,
    score_intents,
    sequence_score,
)
from .prompt import DEFAULT_TEMPLATE, PromptTemplate, parse_prompt, render_prompt
from .providers import (
    UNIGRAM,
    ConstantCostProvider,
    ContinuationLogits,
    FailingProvider,
    LogitProviderSpec,
    MockLogitProvider,
    MockTable,
    RemoteLogitProvider,
    UniformLogitProvider,
    learn_mock_table,
    log_softmax,
    make_logit_provider,
    mock_logits,
)

__all__ = [
    "DEFAULT_TEMPLATE", "UNIGRAM", "ConstantCostProvider", "ContinuationLogits", "FailingProvider",
    "LogitProviderSpec", "MockLogitProvider", "MockTable", "PromptTemplate", "RemoteLogitProvider",
    "SequenceScore", "UniformLogitProvider", "candidate_softmax", "continuation_logprobs",
    "learn_mock_table", "log_softmax", "make_logit_provider", "mock_logits", "parse_prompt",
    "rank_scores", "render_prompt", "score_all", "score_candidate", "score_intents", "sequence_score",
]
