"""Length-normalized constrained-decoding scores for candidate intents.

For a candidate intent of ``s`` continuation tokens appended to the prompt,
the score is ``exp(sum_i log_softmax(logits_i)[target_i] / s)``: the
geometric mean of the per-token probabilities. Only continuation positions
contribute; nothing is sampled or generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ProviderError, UntokenizableError
from ..retrieval.types import CandidateSet
from ..taxonomy import IntentPath, render_intent_path
from .prompt import continuation_text
from .providers import logsumexp_rows


@dataclass(frozen=True)
class SequenceScore:
    intent: IntentPath | str
    token_count: int
    sum_logprob: float
    normalized_prob: float

    @property
    def mean_logprob(self) -> float:
        return math.log(self.normalized_prob) if self.normalized_prob > 0 else -math.inf

    def to_dict(self) -> dict:
        intent = self.intent if isinstance(self.intent, str) else render_intent_path(self.intent)
        return {"intent": intent, "token_count": self.token_count,
                "sum_logprob": self.sum_logprob, "normalized_prob": self.normalized_prob}


def _intent_text(intent: IntentPath | str) -> str:
    return intent if isinstance(intent, str) else render_intent_path(intent)


def sequence_score(intent: IntentPath | str, logprobs: Sequence[float]) -> SequenceScore:
    """Fold per-token log-probabilities into a :class:`SequenceScore`."""
    lp = [float(x) for x in logprobs]
    s = len(lp)
    if s == 0:
        raise UntokenizableError(f"intent {_intent_text(intent)!r} has no tokens")
    if not all(math.isfinite(x) for x in lp):
        return SequenceScore(intent, s, -math.inf, 0.0)
    total = math.fsum(lp)
    # Shifted mean: exact when all tokens share one log-prob, and well conditioned otherwise.
    mean = lp[0] + math.fsum(x - lp[0] for x in lp) / s
    return SequenceScore(intent, s, total, math.exp(mean))


def continuation_logprobs(provider, prompt: str, continuations: Sequence[str]) -> list[np.ndarray]:
    """Per-token log-probs of each continuation, evaluated as one batch."""
    if hasattr(provider, "forward"):
        out = []
        for r in provider.forward(prompt, list(continuations)):
            # log_softmax(row)[target], without materializing the normalized rows
            picked = r.logits[np.arange(len(r.targets)), r.targets]
            norm = r.log_normalizer if r.log_normalizer is not None else logsumexp_rows(r.logits)[:, 0]
            out.append(picked - norm)
        return out
    if hasattr(provider, "batch_token_logprobs"):
        return [np.asarray(x, dtype=np.float64) for x in provider.batch_token_logprobs(prompt, list(continuations))]
    raise TypeError(f"{type(provider).__name__} is not a logit provider")


def score_candidate(provider, prompt: str, intent: IntentPath | str) -> SequenceScore:
    (lps,) = continuation_logprobs(provider, prompt, [continuation_text(_intent_text(intent))])
    return sequence_score(intent, lps)


def score_intents(provider, prompt: str, intents: Sequence[IntentPath]) -> list[SequenceScore]:
    """Score several intents against one prompt as a single batch."""
    if not intents:
        raise ValueError("no candidate intents to score")
    conts = [continuation_text(render_intent_path(t)) for t in intents]
    try:
        batch = continuation_logprobs(provider, prompt, conts)
    except (ProviderError, UntokenizableError):
        # Re-run one by one to name the failing intent.
        for t in intents:
            try:
                score_candidate(provider, prompt, t)
            except ProviderError as exc:
                raise ProviderError(f"scoring {render_intent_path(t)!r} failed: {exc}",
                                    retryable=exc.retryable, intent=render_intent_path(t)) from exc
            except UntokenizableError as exc:
                raise UntokenizableError(f"scoring {render_intent_path(t)!r} failed: {exc}") from exc
        raise
    return [sequence_score(t, lps) for t, lps in zip(intents, batch)]


def score_all(provider, prompt: str, candidates: CandidateSet) -> list[SequenceScore]:
    """One score per unique candidate intent, in first-appearance order."""
    return score_intents(provider, prompt, candidates.unique_intents)


def rank_scores(scores: Sequence[SequenceScore], reference: Sequence | None = None) -> list[SequenceScore]:
    """Sort by normalized probability, ties to the intent listed first in ``reference``.

    ``reference`` defaults to the input order; pass the candidate set's
    unique intents to make the result independent of input order.
    """
    if not scores:
        raise ValueError("nothing to rank")
    ref = list(reference) if reference is not None else [s.intent for s in scores]
    pos = {t: i for i, t in enumerate(ref)}
    return sorted(scores, key=lambda s: (-s.normalized_prob, pos.get(s.intent, len(pos))))


def candidate_softmax(scores: Sequence[SequenceScore]) -> list[float]:
    """Scores rescaled to sum to one across candidates (reporting only)."""
    total = math.fsum(s.normalized_prob for s in scores)
    if total == 0:
        return [1.0 / len(scores)] * len(scores)
    return [s.normalized_prob / total for s in scores]
