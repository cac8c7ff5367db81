from __future__ import annotations

import math

import httpx
import numpy as np
import pytest

from ragintent.errors import ConfigError, ProviderError, UntokenizableError
from ragintent.retrieval.types import CandidateSet, ExemplarPair
from ragintent.scoring.core import (
    SequenceScore,
    candidate_softmax,
    continuation_logprobs,
    rank_scores,
    score_candidate,
    score_intents,
    sequence_score,
)
from ragintent.scoring.prompt import DEFAULT_TEMPLATE, PromptTemplate, parse_prompt, render_prompt
from ragintent.scoring.providers import (
    ConstantCostProvider,
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
    softmax,
)
from ragintent.taxonomy import IntentPath

from .conftest import BIGRAM_CASES, BIGRAM_PROMPT, BIGRAM_ROWS, json_server


def _cands(*items: tuple[int, str, tuple[str, ...]]) -> CandidateSet:
    return CandidateSet(tuple((ExemplarPair(i, q, IntentPath("v", labels)), 1.0 - i / 100) for i, q, labels in items), 10)


CANDS = _cands((1, "where is my parcel", ("Order", "Track")), (2, "cancel it now", ("Order", "Cancel")),
               (3, "parcel late again", ("Order", "Track")), (4, "refund please", ("Billing", "Refund")))


# prompt


def test_prompt_round_trip():
    prompt = render_prompt(DEFAULT_TEMPLATE, "my  box\nis lost", CANDS)
    parsed = parse_prompt(prompt)
    assert parsed["query"] == "my box is lost"
    assert parsed["exemplars"] == [(p.query, " > ".join(p.intent.labels)) for p, _ in CANDS.entries]
    assert parsed["candidates"] == ["Order > Track", "Order > Cancel", "Billing > Refund"]
    assert prompt.endswith("Intent:")


def test_prompt_is_deterministic_and_lists_all_exemplars():
    many = _cands(*[(i, f"query number {i}", ("A", f"L{i % 4}")) for i in range(10)])
    p1 = render_prompt(DEFAULT_TEMPLATE, "q", many)
    assert p1 == render_prompt(DEFAULT_TEMPLATE, "q", many)
    assert len(parse_prompt(p1)["exemplars"]) == 10
    assert len(parse_prompt(p1)["candidates"]) == 4


def test_prompt_custom_template():
    t = PromptTemplate(query_marker="Q>", intent_marker="A>")
    parsed = parse_prompt(render_prompt(t, "hello", CANDS), t)
    assert parsed["query"] == "hello" and len(parsed["exemplars"]) == 4


def test_prompt_needs_exemplars():
    with pytest.raises(ValueError):
        render_prompt(DEFAULT_TEMPLATE, "q", CandidateSet((), 5))


# sequence scores


def test_hand_bigram_oracle():
    provider = MockLogitProvider(MockTable(BIGRAM_ROWS, smoothing=0.0))
    for text, probs in BIGRAM_CASES:
        want = math.exp(sum(math.log(p) for p in probs) / len(probs))
        got = score_candidate(provider, BIGRAM_PROMPT, text)
        assert got.token_count == len(probs)
        assert abs(got.normalized_prob - want) <= 1e-12


def test_unreachable_token_scores_zero():
    provider = MockLogitProvider(MockTable(BIGRAM_ROWS, smoothing=0.0))
    s = score_candidate(provider, BIGRAM_PROMPT, "order now")
    assert s.normalized_prob == 0.0 and s.sum_logprob == -math.inf


@pytest.mark.parametrize("v", [4, 7, 50, 1000])
def test_uniform_symmetry(v):
    vocab = [f"w{i}" for i in range(v)]
    provider = UniformLogitProvider(vocab)
    scores = [score_candidate(provider, "x", " ".join(vocab[:n])).normalized_prob for n in (1, 2, 3, 4)]
    assert len(set(scores)) == 1
    assert scores[0] == pytest.approx(1.0 / v, rel=4e-16)
    if v == 4:
        assert scores[0] == 0.25


def test_delta_provider_scores_one():
    table = MockTable({"intent:": {"a": 1.0}, "a": {"b": 1.0}, "b": {"a": 1.0}}, smoothing=0.0)
    assert score_candidate(MockLogitProvider(table), BIGRAM_PROMPT, "a b a b").normalized_prob == 1.0


def test_sequence_score_rejects_empty():
    with pytest.raises(UntokenizableError):
        sequence_score("x", [])


def test_logit_shift_invariance():
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((5, 9))
    a = log_softmax(logits)
    b = log_softmax(logits + 1234.5)
    assert np.allclose(a, b, atol=1e-9)
    assert np.allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-15)


def test_batch_equals_sequential():
    provider = MockLogitProvider(MockTable(BIGRAM_ROWS, smoothing=0.0))
    texts = [" " + t for t, _ in BIGRAM_CASES]
    batch = continuation_logprobs(provider, BIGRAM_PROMPT, texts)
    for t, lp in zip(texts, batch):
        (single,) = continuation_logprobs(provider, BIGRAM_PROMPT, [t])
        assert np.array_equal(lp, single)


def test_score_intents_batch_matches_single(small_corpus):
    table = learn_mock_table(" > ".join(p.intent.labels) for p in small_corpus.index_pairs())
    provider = MockLogitProvider(table, copy_weight=0.9, sharpness=4.0)
    cands = CandidateSet(tuple((p, 1.0) for p in small_corpus.index_pairs()[:12]), 12)
    prompt = render_prompt(DEFAULT_TEMPLATE, small_corpus.test_set()[0].query, cands)
    batch = score_intents(provider, prompt, cands.unique_intents)
    for t, s in zip(cands.unique_intents, batch):
        assert score_candidate(provider, prompt, t) == s


def test_score_intents_empty_raises():
    with pytest.raises(ValueError):
        score_intents(UniformLogitProvider(["a"]), "p", [])


# ranking


def _s(name: str, p: float) -> SequenceScore:
    return SequenceScore(name, 1, math.log(p) if p else -math.inf, p)


def test_rank_ties_follow_reference_order():
    a, b, c = _s("a", 0.5), _s("b", 0.5), _s("c", 0.9)
    assert [s.intent for s in rank_scores([a, b, c])] == ["c", "a", "b"]
    assert [s.intent for s in rank_scores([b, a, c], reference=["a", "b", "c"])] == ["c", "a", "b"]


def test_rank_is_permutation_invariant_given_reference():
    rng = np.random.default_rng(1)
    scores = [_s(f"i{n}", float(x)) for n, x in enumerate(rng.choice([0.1, 0.2, 0.3], size=12))]
    ref = [s.intent for s in scores]
    want = [s.intent for s in rank_scores(scores, ref)]
    for _ in range(20):
        perm = list(rng.permutation(scores))
        assert [s.intent for s in rank_scores(perm, ref)] == want


def test_rank_empty_raises():
    with pytest.raises(ValueError):
        rank_scores([])


def test_candidate_softmax():
    assert candidate_softmax([_s("a", 0.2), _s("b", 0.6)]) == pytest.approx([0.25, 0.75])
    assert candidate_softmax([_s("a", 0.0), _s("b", 0.0)]) == [0.5, 0.5]


# mock table


def test_mock_logits_backoff():
    table = MockTable(BIGRAM_ROWS, smoothing=0.0)
    tid = table.token_id
    row = mock_logits(table, ["refund"])
    assert row[tid["status"]] == 0.0
    backoff = mock_logits(table, ["status"])
    assert math.exp(backoff[tid["order"]]) == pytest.approx(0.2)
    assert softmax(backoff).sum() == pytest.approx(1.0, abs=1e-15)


def test_mock_table_without_backoff_raises():
    table = MockTable({"intent:": {"a": 1.0}}, smoothing=0.0)
    with pytest.raises(UntokenizableError):
        score_candidate(MockLogitProvider(table), BIGRAM_PROMPT, "a a")


def test_mock_table_file_round_trip(tmp_path):
    table = MockTable(BIGRAM_ROWS, smoothing=1e-6)
    path = tmp_path / "t.json"
    table.save(path)
    back = MockTable.load(path)
    assert back.vocab == table.vocab and np.array_equal(back.logit_rows, table.logit_rows)
    with pytest.raises(ConfigError):
        MockTable({"a": {"b": -0.1}})
    with pytest.raises(ConfigError):
        MockTable.from_dict({"rows": {}, "bogus": 1})


def test_copy_mixture_prefers_similar_exemplar_intent():
    table = learn_mock_table(["Order > Track", "Order > Cancel", "Billing > Refund"])
    provider = MockLogitProvider(table, copy_weight=0.9, sharpness=4.0)
    prompt = render_prompt(DEFAULT_TEMPLATE, "refund please now", CANDS)
    scores = rank_scores(score_intents(provider, prompt, CANDS.unique_intents), CANDS.unique_intents)
    assert scores[0].intent == IntentPath("v", ("Billing", "Refund"))


def test_unseen_prompt_tokens_are_scorable():
    table = learn_mock_table(["Order > Track"])
    provider = MockLogitProvider(table, copy_weight=0.9, sharpness=4.0)
    cands = _cands((1, "novel thing", ("Brand", "New")))
    prompt = render_prompt(DEFAULT_TEMPLATE, "novel thing", cands)
    assert score_candidate(provider, prompt, "Brand > New").normalized_prob > 0


def test_provider_spec_validation():
    with pytest.raises(ConfigError):
        LogitProviderSpec(kind="bogus")
    with pytest.raises(ConfigError):
        LogitProviderSpec.from_dict({"nope": 1})
    with pytest.raises(ConfigError):
        make_logit_provider(LogitProviderSpec())
    with pytest.raises(ConfigError):
        make_logit_provider(LogitProviderSpec(kind="remote", endpoint="http://x"))
    with pytest.raises(ConfigError):
        MockLogitProvider(MockTable(BIGRAM_ROWS), copy_weight=1.0)


def test_failing_and_constant_cost_providers():
    with pytest.raises(ProviderError):
        score_candidate(FailingProvider(), "p", "a")
    inner = UniformLogitProvider(["a", "b"])
    slow = ConstantCostProvider(inner, 0.0)
    assert score_candidate(slow, "p", "a b") == score_candidate(inner, "p", "a b")


# remote provider


def test_remote_wire_format():
    seen = []

    def handler(path, body, headers):
        seen.append((path, body, headers.get("Authorization")))
        n = len(body["continuation"].split())
        return 200, {"token_logprobs": [math.log(0.5)] * n}

    with json_server(handler) as url:
        prov = RemoteLogitProvider(url + "/v1/logprobs", "m1", max_in_flight=2)
        got = score_intents(prov, "the prompt", [IntentPath("v", ("A", "B")), IntentPath("v", ("C",))])
    assert [s.normalized_prob for s in got] == [0.5, 0.5]
    assert [s.token_count for s in got] == [3, 1]
    assert sorted(b["continuation"] for _, b, _ in seen) == [" A > B", " C"]
    assert all(p == "/v1/logprobs" and b["model"] == "m1" and b["prompt"] == "the prompt" for p, b, _ in seen)


def test_remote_sends_bearer_token(monkeypatch):
    monkeypatch.setenv("RI_TEST_KEY", "s3cret")
    seen = []

    def handler(path, body, headers):
        seen.append(headers.get("Authorization"))
        return 200, {"token_logprobs": [-1.0]}

    with json_server(handler) as url:
        RemoteLogitProvider(url, "m", api_key_env="RI_TEST_KEY").token_logprobs("p", " a")
    assert seen == ["Bearer s3cret"]


def test_remote_retries_transient_errors():
    calls = []

    def handler(path, body, headers):
        calls.append(1)
        return (503, {}) if len(calls) < 3 else (200, {"token_logprobs": [-0.1]})

    with json_server(handler) as url:
        assert RemoteLogitProvider(url, "m", retries=2).token_logprobs("p", " a") == [-0.1]
    assert len(calls) == 3


@pytest.mark.parametrize("status,doc,match", [
    (503, {}, "503"),
    (400, {}, "400"),
    (200, {"wrong": 1}, "malformed"),
    (200, {"token_logprobs": [0.5]}, "<= 0"),
])
def test_remote_errors(status, doc, match):
    with json_server(lambda p, b, h: (status, doc)) as url:
        prov = RemoteLogitProvider(url, "m", retries=1)
        with pytest.raises(ProviderError, match=match):
            prov.token_logprobs("p", " a")


def test_remote_empty_tokens_and_bad_url():
    with json_server(lambda p, b, h: (200, {"token_logprobs": []})) as url:
        with pytest.raises(UntokenizableError):
            RemoteLogitProvider(url, "m").token_logprobs("p", " a")
    with pytest.raises(ConfigError):
        RemoteLogitProvider("not a url", "m")


def test_remote_connection_failure():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: (_ for _ in ()).throw(httpx.ConnectError("down"))))
    prov = RemoteLogitProvider("http://127.0.0.1:9", "m", retries=1, client=client)
    with pytest.raises(ProviderError, match="request failed"):
        prov.token_logprobs("p", " a")
